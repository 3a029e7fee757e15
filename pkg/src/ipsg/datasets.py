"""Loading, preprocessing and partitioning of regression datasets.

A dataset is the collective (A, B) pair; a partition splits its rows into
equal contiguous per-agent blocks.
"""

import csv
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .errors import AssumptionError, FormatError, InputError, NumericalError

# Standardization uses the population standard deviation (divide by N).
STD_CONVENTION = "population"

DATA_DIR_ENV = "IPSG_DATA_DIR"


@dataclass(frozen=True)
class Dataset:
    name: str
    A: np.ndarray
    B: np.ndarray
    x_star: np.ndarray | None = None
    consistent: bool = False
    provenance: str = ""

    def __post_init__(self):
        A = nk.as_matrix(self.A, "A")
        B = nk.as_vector(self.B, "B")
        if A.shape[0] != B.shape[0]:
            raise InputError(f"A has {A.shape[0]} rows but B has length {B.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.x_star is not None:
            x = nk.as_vector(self.x_star, "x_star")
            if x.shape[0] != A.shape[1]:
                raise InputError("x_star length does not match the number of columns of A")
            object.__setattr__(self, "x_star", x)
            if self.consistent:
                res = np.linalg.norm(A @ x - B)
                if res > 1e-8 * max(np.linalg.norm(B), 1e-300):
                    raise InputError(f"dataset marked consistent but residual is {res:.3e}")

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def with_solution(self):
        """Return a copy whose x_star is filled in by the least-squares oracle."""
        if self.x_star is not None:
            return self
        return Dataset(self.name, self.A, self.B, least_squares_oracle(self),
                       self.consistent, self.provenance)


@dataclass(frozen=True)
class Partition:
    m: int
    blocks: tuple

    @property
    def n(self):
        start, end = self.blocks[0]
        return end - start

    def split(self, ds):
        return [(ds.A[s:e], ds.B[s:e]) for s, e in self.blocks]


@dataclass(frozen=True)
class Image:
    height: int
    width: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64).reshape(-1)
        if px.size != self.height * self.width:
            raise InputError(f"image has {px.size} pixels, expected {self.height}x{self.width}")
        object.__setattr__(self, "pixels", px)

    def grid(self):
        return self.pixels.reshape(self.height, self.width)


# ---------------------------------------------------------------- Matrix Market

def load_matrix_market(path):
    """Read a real Matrix Market file (array or coordinate) into a dense array."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty file", line=1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise FormatError("missing %%MatrixMarket header", line=1)
    obj, fmt, fld, sym = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise FormatError(f"unsupported object '{obj}'", line=1)
    if fmt not in ("array", "coordinate"):
        raise FormatError(f"unsupported format '{fmt}'", line=1)
    if fld not in ("real", "integer", "double"):
        raise FormatError(f"unsupported field '{fld}'", line=1)
    if sym not in ("general", "symmetric"):
        raise FormatError(f"unsupported symmetry '{sym}'", line=1)

    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise FormatError("missing size line", line=len(lines))
    size_no, size_line = body[0]
    try:
        dims = [int(tok) for tok in size_line.split()]
    except ValueError:
        raise FormatError("malformed size line", line=size_no) from None

    if fmt == "array":
        if len(dims) != 2:
            raise FormatError("array size line needs 'rows cols'", line=size_no)
        rows, cols = dims
        vals = []
        for no, ln in body[1:]:
            toks = ln.split()
            if len(toks) != 1:
                raise FormatError("expected a single value per line", line=no)
            vals.append(_parse_real(toks[0], no))
        if sym == "symmetric":
            if rows != cols:
                raise FormatError("symmetric array must be square", line=size_no)
            expected = rows * (rows + 1) // 2
        else:
            expected = rows * cols
        if len(vals) != expected:
            raise FormatError(f"expected {expected} values, found {len(vals)}", line=size_no)
        M = np.zeros((rows, cols))
        if sym == "general":
            M[:, :] = np.asarray(vals).reshape(cols, rows).T
        else:
            k = 0
            for j in range(cols):
                for i in range(j, rows):
                    M[i, j] = M[j, i] = vals[k]
                    k += 1
        return M

    if len(dims) != 3:
        raise FormatError("coordinate size line needs 'rows cols nnz'", line=size_no)
    rows, cols, nnz = dims
    M = np.zeros((rows, cols))
    seen = set()
    entries = body[1:]
    if len(entries) != nnz:
        raise FormatError(f"expected {nnz} entries, found {len(entries)}", line=size_no)
    for no, ln in entries:
        toks = ln.split()
        if len(toks) != 3:
            raise FormatError("expected 'row col value'", line=no)
        try:
            i, j = int(toks[0]) - 1, int(toks[1]) - 1
        except ValueError:
            raise FormatError("non-integer index", line=no) from None
        if not (0 <= i < rows and 0 <= j < cols):
            raise FormatError(f"index ({i + 1}, {j + 1}) out of range", line=no)
        key = (i, j) if sym == "general" else (max(i, j), min(i, j))
        if key in seen:
            raise FormatError(f"duplicate entry ({i + 1}, {j + 1})", line=no)
        seen.add(key)
        v = _parse_real(toks[2], no)
        M[i, j] = v
        if sym == "symmetric":
            M[j, i] = v
    return M


def _parse_real(tok, line):
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"not a real number: '{tok}'", line=line) from None
    if not np.isfinite(v):
        raise FormatError(f"non-finite value '{tok}'", line=line)
    return v


def write_matrix_market(path, M):
    """Dense real general array format, column-major, round-trip precision."""
    M = nk.as_matrix(M)
    rows, cols = M.shape
    lines = ["%%MatrixMarket matrix array real general", f"{rows} {cols}"]
    lines += [repr(float(v)) for v in M.T.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- preprocessing

def synth_output(A):
    """Outputs for a known all-ones minimizer: B = A @ 1."""
    A = nk.as_matrix(A)
    x_star = np.ones(A.shape[1])
    return A @ x_star, x_star


def standardize_columns(A):
    A = nk.as_matrix(A)
    mean = A.mean(axis=0)
    std = A.std(axis=0)  # population convention
    for j, s in enumerate(std):
        if not s > 0:
            raise InputError(f"column {j} is constant and cannot be standardized")
    return (A - mean) / std


def append_ones(A):
    A = np.asarray(A, dtype=np.float64)
    return np.hstack([A, np.ones((A.shape[0], 1))])


def avg_intensity(img):
    return float(np.mean(img.pixels)) if img.pixels.size else 0.0


def avg_symmetry(img):
    """Negated mean absolute difference between an image and its left-right mirror."""
    g = img.grid()
    return -float(np.mean(np.abs(g - g[:, ::-1])))


def mnist_features(a1, a2):
    a1 = nk.as_vector(a1, "a1")
    a2 = nk.as_vector(a2, "a2")
    if a1.shape != a2.shape:
        raise InputError(f"length mismatch: {a1.size} vs {a2.size}")
    return np.column_stack([a1, a2, a1 * a1, a1 * a2, a2 * a2])


def partition(ds, m):
    N = ds.A.shape[0]
    if m < 1 or N % m != 0:
        raise InputError(f"cannot split N={N} rows evenly among m={m} agents")
    n = N // m
    return Partition(m, tuple((i * n, (i + 1) * n) for i in range(m)))


def least_squares_oracle(ds):
    """Unique minimizer of ||Ax - B||^2 from the normal equations."""
    S = nk.gram(ds.A)
    rhs = ds.A.T @ ds.B
    try:
        x = nk.solve_spd(S, rhs)
    except NumericalError as exc:
        raise AssumptionError(f"A^T A is not full rank: {exc}") from exc
    res = np.linalg.norm(S @ x - rhs)
    if res > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
        # Cholesky can succeed on nearly singular grams; refine once with lstsq.
        x = np.linalg.lstsq(ds.A, ds.B, rcond=None)[0]
    return x


# ---------------------------------------------------------------- file datasets

def data_dir():
    return Path(os.environ.get(DATA_DIR_ENV, Path.cwd() / "data"))


def _checksum(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def from_matrix_market(path, name=None):
    """SuiteSparse-style problem: A from file, B = A @ 1 so x* = 1."""
    A = load_matrix_market(path)
    B, x_star = synth_output(A)
    return Dataset(name or Path(path).stem, A, B, x_star, consistent=True,
                   provenance=f"matrix market {path}; B = A*ones")


def read_csv_table(path, label_column, has_header=True, names=None, missing="?"):
    """Read a numeric CSV, returning (features, labels, dropped_row_count).

    Rows holding the missing-value marker in any field are dropped.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        names, rows = [c.strip() for c in rows[0]], rows[1:]
    if names is None:
        raise InputError("column names required when the file has no header")
    if label_column not in names:
        raise InputError(f"label column '{label_column}' not in {names}")
    li = names.index(label_column)
    feats, labels, dropped = [], [], 0
    for lineno, r in enumerate(rows, start=2 if has_header else 1):
        if len(r) != len(names):
            raise FormatError(f"expected {len(names)} fields, got {len(r)}", line=lineno)
        if any(tok.strip() == missing for tok in r):
            dropped += 1
            continue
        vals = [_parse_real(tok.strip(), lineno) for tok in r]
        labels.append(vals[li])
        feats.append(vals[:li] + vals[li + 1:])
    return np.asarray(feats), np.asarray(labels), dropped


CLEVELAND_COLUMNS = ["age", "sex", "cp", "trestbps", "chol", "fbs", "restecg",
                     "thalach", "exang", "oldpeak", "slope", "ca", "thal", "num"]


def load_cleveland(path, rows=212):
    """UCI heart disease data: drop incomplete rows, keep the first `rows` in file order.

    Accepts the headerless ``processed.cleveland.data`` or a CSV with a header
    naming a ``num`` label column. Label: +1 disease (num > 0), -1 otherwise.
    """
    with open(path) as fh:
        first = fh.readline()
    has_header = not first.split(",")[0].strip().replace(".", "", 1).lstrip("-").isdigit()
    X, y, dropped = read_csv_table(path, "num", has_header=has_header,
                                   names=None if has_header else CLEVELAND_COLUMNS)
    if X.shape[0] < rows:
        raise InputError(f"only {X.shape[0]} complete rows, need {rows}")
    X, y = X[:rows], y[:rows]
    A = append_ones(standardize_columns(X))
    B = np.where(y > 0, 1.0, -1.0)
    prov = (f"cleveland {path}; dropped {dropped} incomplete rows; first {rows} rows; "
            f"std={STD_CONVENTION}; labels disease=+1; checksum {_checksum(X, y)}")
    return Dataset("cleveland", A, B, provenance=prov).with_solution()


def load_mnist_csv(path, digits=(1, 5), rows=1500, side=28):
    """MNIST CSV (label then side*side pixels in 0-255) -> shape-feature regression.

    Keeps the first `rows` images whose label is in `digits`, in file order.
    Label encoding: digits[0] -> +1, digits[1] -> -1.
    """
    a1, a2, labels = [], [], []
    with open(path, newline="") as fh:
        for lineno, r in enumerate(csv.reader(fh), start=1):
            if not r:
                continue
            if lineno == 1 and not r[0].strip().isdigit():
                continue  # header
            if len(r) != side * side + 1:
                raise FormatError(f"expected {side * side + 1} fields, got {len(r)}", line=lineno)
            label = int(r[0])
            if label not in digits:
                continue
            img = Image(side, side, np.asarray(r[1:], dtype=np.float64) / 255.0)
            a1.append(avg_intensity(img))
            a2.append(avg_symmetry(img))
            labels.append(label)
            if len(labels) == rows:
                break
    if len(labels) < rows:
        raise InputError(f"only {len(labels)} images with digits {digits}, need {rows}")
    raw = mnist_features(np.asarray(a1), np.asarray(a2))
    A = append_ones(standardize_columns(raw))
    B = np.where(np.asarray(labels) == digits[0], 1.0, -1.0)
    prov = (f"mnist {path}; digits {digits}; first {rows} rows; flip=left-right; "
            f"std={STD_CONVENTION}; checksum {_checksum(raw, B)}")
    return Dataset("mnist", A, B, provenance=prov).with_solution()


# ---------------------------------------------------------------- synthetic

def random_problem(N, d, seed=0, consistent=False, noise=1.0, name=None):
    """Gaussian rows; B = A x_true (+ Gaussian noise unless consistent)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, d))
    x_true = rng.standard_normal(d)
    B = A @ x_true
    if not consistent:
        B = B + noise * rng.standard_normal(N)
    ds = Dataset(name or f"random-{N}x{d}", A, B,
                 x_star=x_true if consistent else None, consistent=consistent,
                 provenance=f"gaussian seed={seed} consistent={consistent}")
    return ds.with_solution()


def spectrum_matched(N, d, s1, sd, seed=0, name=None):
    """Random A with prescribed extreme eigenvalues of A^T A and B = A @ 1.

    Singular values are log-spaced between sqrt(sd) and sqrt(s1); left and
    right singular vectors are Haar-random.
    """
    if not (s1 >= sd > 0) or N < d:
        raise InputError("need s1 >= sd > 0 and N >= d")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((N, d)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    sv = np.sqrt(np.geomspace(s1, sd, d))
    A = (U * sv) @ V.T
    B, x_star = synth_output(A)
    return Dataset(name or f"spectrum-{N}x{d}", A, B, x_star, consistent=True,
                   provenance=f"spectrum-matched s1={s1:.6g} sd={sd:.6g} seed={seed}")
