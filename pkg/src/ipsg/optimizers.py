"""Single-sample update rules: IPSG and the SGD/AdaGrad/Adam/AMSGrad baselines.

All updates are pure: they take a state and return a new one.
"""

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AssumptionError, DomainError, InputError, NumericalError

METHODS = ("ipsg", "sgd", "adagrad", "adam", "amsgrad")


@dataclass(frozen=True)
class StepSchedule:
    """Step size c / t**power with t counted from 1; power 0 means constant."""

    c: float
    power: float = 0.0

    def __call__(self, t):
        if self.power == 0.0:
            return self.c
        return self.c / t ** self.power

    @classmethod
    def parse(cls, text):
        """Accepts '0.1', '0.5/sqrt(t)' or '1/t'."""
        if isinstance(text, (int, float)):
            return cls(float(text))
        s = str(text).replace(" ", "")
        m = re.fullmatch(r"([0-9.eE+-]+)/(sqrt\(t\)|t)", s)
        if m:
            return cls(float(m.group(1)), 0.5 if m.group(2) == "sqrt(t)" else 1.0)
        try:
            return cls(float(s))
        except ValueError:
            raise InputError(f"cannot parse step size '{text}'") from None

    def __str__(self):
        if self.power == 0.0:
            return f"{self.c:g}"
        return f"{self.c:g}/sqrt(t)" if self.power == 0.5 else f"{self.c:g}/t^{self.power:g}"


# ---------------------------------------------------------------- IPSG

@dataclass(frozen=True)
class IpsgState:
    x: np.ndarray
    K: np.ndarray
    alpha: float
    delta: float
    beta: float

    def __post_init__(self):
        d = self.x.shape[0]
        if self.K.shape != (d, d):
            raise InputError(f"K has shape {self.K.shape}, expected ({d}, {d})")
        for name in ("alpha", "delta", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InputError(f"{name} must be finite and positive, got {v}")


@dataclass(frozen=True)
class GradientSample:
    """What one agent returns per round: stochastic gradient and residual columns."""

    g: np.ndarray
    Rmat: np.ndarray | None = None


def stoch_grad(x, a, b):
    """Gradient of 0.5 * (a.x - b)^2, i.e. a^T (a.x - b)."""
    if a.shape[0] != x.shape[0]:
        raise InputError(f"row length {a.shape[0]} does not match x length {x.shape[0]}")
    return a * (a @ x - b)


def precond_residuals(K, a, beta):
    """(a^T a + beta I) K - I without forming the d x d outer product a^T a."""
    aK = a @ K
    R = np.outer(a, aK)
    R += beta * K
    R[np.diag_indices_from(R)] -= 1.0
    return R


def ipsg_update(st, sample, t=None):
    """K(t+1) = K(t) - alpha R, then x(t+1) = x(t) - delta K(t+1) g."""
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported below
        K = st.K - st.alpha * sample.Rmat
        x = st.x - st.delta * (K @ sample.g)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(K))):
        raise NumericalError("IPSG state became non-finite", iteration=t)
    return replace(st, x=x, K=K)


def suggest_alpha(s1, sd):
    """2 / (s1 + sd): the best fixed rate of the deterministic iteration."""
    if not sd > 0:
        raise AssumptionError("smallest eigenvalue of A^T A must be positive (full column rank)")
    if s1 < sd:
        raise DomainError("need s1 >= sd")
    return 2.0 / (s1 + sd)


# ---------------------------------------------------------------- baselines

@dataclass(frozen=True)
class BaselineState:
    method: str
    x: np.ndarray
    alpha: StepSchedule
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    acc: np.ndarray | None = field(default=None, repr=False)
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    v_max: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    @classmethod
    def create(cls, method, x0, alpha, **hyper):
        if method not in METHODS[1:]:
            raise InputError(f"unknown baseline '{method}'")
        x0 = np.asarray(x0, dtype=np.float64)
        z = np.zeros_like(x0)
        if not isinstance(alpha, StepSchedule):
            alpha = StepSchedule.parse(alpha)
        st = cls(method, x0.copy(), alpha, **hyper)
        if method == "adagrad":
            st = replace(st, acc=z)
        elif method in ("adam", "amsgrad"):
            st = replace(st, m=z, v=z.copy(), v_max=z.copy() if method == "amsgrad" else None)
        return st


def sgd_update(st, g):
    t = st.t + 1
    return replace(st, x=st.x - st.alpha(t) * g, t=t)


def adagrad_update(st, g):
    t = st.t + 1
    acc = st.acc + g * g
    x = st.x - st.alpha(t) * g / (np.sqrt(acc) + st.eps)
    return replace(st, x=x, acc=acc, t=t)


def adam_update(st, g, t=None):
    t = st.t + 1 if t is None else t
    if t < 1:
        raise InputError("Adam step counter starts at 1")
    m = st.beta1 * st.m + (1 - st.beta1) * g
    v = st.beta2 * st.v + (1 - st.beta2) * g * g
    m_hat = m / (1 - st.beta1 ** t)
    v_hat = v / (1 - st.beta2 ** t)
    x = st.x - st.alpha(t) * m_hat / (np.sqrt(v_hat) + st.eps)
    return replace(st, x=x, m=m, v=v, t=t)


def amsgrad_update(st, g, t=None):
    """AMSGrad in its original form: running max of v, no bias corrections."""
    t = st.t + 1 if t is None else t
    if t < 1:
        raise InputError("AMSGrad step counter starts at 1")
    m = st.beta1 * st.m + (1 - st.beta1) * g
    v = st.beta2 * st.v + (1 - st.beta2) * g * g
    v_max = np.maximum(st.v_max, v)
    x = st.x - st.alpha(t) * m / (np.sqrt(v_max) + st.eps)
    return replace(st, x=x, m=m, v=v, v_max=v_max, t=t)


BASELINE_UPDATES = {
    "sgd": sgd_update,
    "adagrad": adagrad_update,
    "adam": adam_update,
    "amsgrad": amsgrad_update,
}


def baseline_update(st, g):
    with np.errstate(over="ignore", invalid="ignore"):
        new = BASELINE_UPDATES[st.method](st, g)
    if not np.all(np.isfinite(new.x)):
        raise NumericalError(f"{st.method} estimate became non-finite", iteration=new.t)
    return new
