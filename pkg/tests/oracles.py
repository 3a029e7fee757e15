"""Slow, independently written reference implementations used only by the tests.

Nothing here imports the package's numerical code, so agreement between the
two routes is evidence that both are right.
"""

import math

import numpy as np


def naive_matvec(M, v):
    out = [0.0] * len(M)
    for i, row in enumerate(M):
        s = 0.0
        for j, x in enumerate(row):
            s += row[j] * v[j]
        out[i] = s
    return np.array(out)


def naive_gram(A):
    A = np.asarray(A)
    N, d = A.shape
    S = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(N):
                s += A[k, i] * A[k, j]
            S[i, j] = s
    return S


def jacobi_eigenvalues(S, tol=1e-14, max_sweeps=100):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(S, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, float(np.abs(a).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k, p], a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p, k], a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return np.sort(np.diag(a))


def dense_spectral_norm(M):
    return math.sqrt(max(jacobi_eigenvalues(np.asarray(M).T @ np.asarray(M))[-1], 0.0))


def kbeta_literal(A, beta):
    N, d = A.shape
    return np.linalg.inv(naive_gram(A) / N + beta * np.eye(d))


def rho_dense(A, alpha, beta):
    """(1/N) sum_i ||I - alpha (a_i^T a_i + beta I)|| with a dense eigensolver per row."""
    N, d = A.shape
    total = 0.0
    for a in A:
        M = np.eye(d) - alpha * (np.outer(a, a) + beta * np.eye(d))
        total += np.max(np.abs(jacobi_eigenvalues(M)))
    return total / N


def deviations_dense(A):
    N, d = A.shape
    G = naive_gram(A) / N
    return np.array([np.max(np.abs(jacobi_eigenvalues(np.outer(a, a) - G))) for a in A])


def sigma2_literal(A, beta, Kb):
    """max_j (1/N) sum_i ||(a_i^T a_i + beta I) K_beta e_j - e_j||^2 by the literal sum."""
    N, d = A.shape
    best = 0.0
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        s = 0.0
        for a in A:
            r = (np.outer(a, a) + beta * np.eye(d)) @ Kb[:, j] - e
            s += float(r @ r)
        best = max(best, s / N)
    return best


def series_literal(N, d, s1, sd, alpha, beta, delta, Kb, rho, C1, C2, C3, V1, V2, E1, E2,
                   kt0, kt0_fro, L, t):
    """Second transcription of the time-dependent constants, written term by term."""
    mu = 1 - 2 * alpha * sd / N * (1 - alpha * L)
    vr = max(abs(1 - alpha * (s1 / N + beta)), abs(1 - alpha * (sd / N + beta)))
    rho_sum = sum(rho ** j for j in range(t + 1))
    common = (d * C3 + Kb * Kb + 2 * C2 * Kb * rho_sum
              + kt0_fro ** 2 * mu ** (t + 1) + 2 * Kb * kt0 * rho ** (t + 1))
    C4 = (V2 + 1) * s1 * s1 / N * common
    C5 = 2 * C1 * E2 * (s1 / N) * (Kb + kt0 * vr ** t)
    C6 = 2 * sd / (sd + N * beta) - 2 * (s1 / N) * kt0 * vr ** (t + 1)
    C7 = 2 * C1 * E1 * (Kb + kt0 * vr ** t)
    C8 = C4 + 0.5
    R3 = delta * delta * V1 * N * common
    R2 = R3 + alpha * alpha * C7 * C7 / 2
    R1 = 1 + delta * delta * C8 + alpha * delta * C5 - delta * C6
    dbar = min(1 / C6, (C6 - alpha * C5) / C8)
    return dict(C4=C4, C5=C5, C6=C6, C7=C7, C8=C8, R1=R1, R2=R2, R3=R3, delta_bar=dbar)


def ipsg_step_literal(x, K, a, b, alpha, beta, delta):
    """Column-by-column K update followed by the x update with the new K."""
    d = len(x)
    K_new = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        R_j = (np.outer(a, a) + beta * np.eye(d)) @ K[:, j] - e
        K_new[:, j] = K[:, j] - alpha * R_j
    g = a * (float(np.dot(a, x)) - b)
    return x - delta * K_new @ g, K_new


def finite_difference_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g

