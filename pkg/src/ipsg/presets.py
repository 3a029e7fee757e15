"""Benchmark datasets and their tuned hyperparameters.

Real datasets are read from the data directory (``$IPSG_DATA_DIR`` or
``./data``). Each also has a spectrum-matched surrogate with the same shape,
agent count and extreme gram eigenvalues, for use when the files are absent.
The eigenvalues are recovered from the tuned step size alpha = 2 / (s1 + sd)
and the reported condition number s1 / sd.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from . import datasets as D
from .errors import InputError


def _adam(alpha, beta2=0.999):
    return {"alpha": alpha, "beta1": 0.9, "beta2": beta2, "eps": 1e-7}


@dataclass(frozen=True)
class Benchmark:
    name: str
    shape: tuple
    m: int
    eps_tol: float
    kappa: float
    params: dict
    reported: dict  # iterations to eps_tol; None means "more than t_max"
    t_max: int
    x0_value: float = 0.0
    files: tuple = ()
    surrogate_alpha: float | None = None
    extra: dict = field(default_factory=dict)

    def spectrum(self):
        """(s1, sd) implied by the tuned step size and condition number."""
        alpha = self.surrogate_alpha or self.params["sgd"]["alpha"]
        total = 2.0 / alpha
        sd = total / (self.kappa + 1.0)
        return total - sd, sd


BENCHMARKS = {
    "cleveland": Benchmark(
        "cleveland", (212, 14), 4, 1.5e-3, 7.34,
        {"ipsg": {"alpha": 0.0031, "delta": 0.5, "beta": 30.0},
         "sgd": {"alpha": 0.0031},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("0.05"),
         "adam": _adam("0.05")},
        {"ipsg": 4.11e3, "sgd": 4.71e3, "adagrad": 6.04e3, "amsgrad": 3.63e3, "adam": 4.11e3},
        t_max=50_000, x0_value=10.0,
        files=("processed.cleveland.data", "cleveland.csv", "cleveland.data")),
    "ash608": Benchmark(
        "ash608", (608, 188), 8, 1e-4, 11.38,
        {"ipsg": {"alpha": 0.1163, "delta": 1.0, "beta": 1.0},
         "sgd": {"alpha": 0.1163},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("0.5/sqrt(t)", 0.99),
         "adam": _adam("0.1/sqrt(t)")},
        {"ipsg": 5.73e3, "sgd": 2.1e4, "adagrad": 5.86e3, "amsgrad": None, "adam": None},
        t_max=40_000, files=("ash608.mtx",)),
    "abtaha1": Benchmark(
        "abtaha1", (14596, 209), 4, 1e-3, 1.5e2,
        {"ipsg": {"alpha": 0.0052, "delta": 2.0, "beta": 5.0},
         "sgd": {"alpha": 0.0052},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("1/sqrt(t)", 0.99),
         "adam": _adam("0.5/sqrt(t)")},
        {"ipsg": 7.35e4, "sgd": None, "adagrad": 9.75e4, "amsgrad": None, "adam": None},
        t_max=100_000, files=("abtaha1.mtx",)),
    "mnist": Benchmark(
        "mnist", (1500, 6), 10, 2.6e-3, 2.59e3,
        {"ipsg": {"alpha": 0.0003, "delta": 0.1, "beta": 1.0},
         "sgd": {"alpha": 0.0003},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("1"),
         "adam": _adam("0.1")},
        {"ipsg": 3.41e4, "sgd": None, "adagrad": None, "amsgrad": None, "adam": 4.41e4},
        t_max=50_000, files=("mnist_train.csv", "mnist.csv")),
    "gre_343": Benchmark(
        "gre_343", (343, 343), 7, 4e-3, 1.25e4,
        {"ipsg": {"alpha": 1.2, "delta": 2.5, "beta": 0.5},
         "sgd": {"alpha": 1.96},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("0.1/sqrt(t)"),
         "adam": _adam("0.2/sqrt(t)")},
        {"ipsg": 3.88e4, "sgd": 4.43e5, "adagrad": None, "amsgrad": None, "adam": None},
        t_max=500_000, files=("gre_343.mtx",)),
    "illc1850": Benchmark(
        "illc1850", (1850, 712), 10, 0.2, 1.93e6,
        {"ipsg": {"alpha": 0.4436, "delta": 2.0, "beta": 1.0},
         "sgd": {"alpha": 0.4436},
         "adagrad": {"alpha": 1.0, "eps": 1e-7},
         "amsgrad": _adam("0.5/sqrt(t)", 0.99),
         "adam": _adam("0.5/sqrt(t)")},
        {"ipsg": 8.06e4, "sgd": 3.31e5, "adagrad": 2.81e5, "amsgrad": None, "adam": 1.63e5},
        t_max=500_000, files=("illc1850.mtx",)),
}


def find_file(bench):
    root = D.data_dir()
    for name in bench.files:
        path = root / name
        if path.exists():
            return path
    return None


def load_benchmark(name):
    """Load a real benchmark dataset from the data directory."""
    bench = BENCHMARKS[name]
    path = find_file(bench)
    if path is None:
        raise InputError(f"dataset '{name}' not found: expected one of {list(bench.files)} "
                         f"in {D.data_dir()} (set ${D.DATA_DIR_ENV})")
    if name == "cleveland":
        return D.load_cleveland(path)
    if name == "mnist":
        return D.load_mnist_csv(path)
    return D.from_matrix_market(path, name=name)


def surrogate(name, seed=0):
    bench = BENCHMARKS[name]
    s1, sd = bench.spectrum()
    N, d = bench.shape
    return D.spectrum_matched(N, d, s1, sd, seed=seed, name=f"{name}-surrogate")


def default_x0(name, d):
    base = name.replace("-surrogate", "")
    value = BENCHMARKS[base].x0_value if base in BENCHMARKS else 0.0
    return np.full(d, value)


_SYNTH = re.compile(r"(random|consistent)-(\d+)x(\d+)(?:-s(\d+))?")


def resolve_dataset(spec):
    """Dataset from a benchmark name, '<name>-surrogate', a synthetic id or a .mtx path.

    Synthetic ids: 'random-NxD[-sSEED]' (noisy), 'consistent-NxD[-sSEED]', 'scalar'
    (one row, one column).
    """
    if spec in BENCHMARKS:
        return load_benchmark(spec)
    if spec.endswith("-surrogate") and spec[: -len("-surrogate")] in BENCHMARKS:
        return surrogate(spec[: -len("-surrogate")])
    if spec == "scalar":
        return D.Dataset("scalar", np.array([[1.0]]), np.array([2.0]), np.array([2.0]),
                         consistent=True, provenance="single point a=1, b=2")
    m = _SYNTH.fullmatch(spec)
    if m:
        kind, N, d, seed = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4) or 0)
        return D.random_problem(N, d, seed=seed, consistent=kind == "consistent", name=spec)
    if spec.endswith(".mtx"):
        return D.from_matrix_market(spec)
    raise InputError(f"unknown dataset '{spec}'")


def default_agents(spec, N):
    base = spec.replace("-surrogate", "")
    if base in BENCHMARKS:
        return BENCHMARKS[base].m
    for m in (4, 2):
        if N % m == 0 and N // m >= 1:
            return m
    return 1
