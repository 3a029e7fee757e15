"""Recover the initial state of the built-in LTI system with IPSG and each baseline."""

import numpy as np

from ipsg import stateest as se

sys_ = se.builtin_system()
obs = se.check_joint_observability(sys_)
print("local ranks", obs.rank_local, "global rank", obs.rank_global)

z0 = np.array([1.0, -2.0, 0.5, 3.0])
meas = se.simulate_measurements(sys_, z0)
reg, _ = se.to_regression(sys_, meas, obs)
lam = float(np.max(np.sum(reg.A ** 2, axis=1)))
runs = {
    "ipsg": None,
    "sgd": {"alpha": 1.0 / lam},
    "adagrad": {"alpha": 0.5, "eps": 1e-7},
    "adam": {"alpha": "0.1/sqrt(t)", "beta1": 0.9, "beta2": 0.999, "eps": 1e-7},
}
estimates = {}
for method, params in runs.items():
    z_hat, res, ref = se.estimate_initial_state(sys_, meas, method=method, params=params,
                                                t_max=50_000, eps_tol=1e-6)
    err = np.linalg.norm(z_hat - ref) / np.linalg.norm(ref)
    estimates[method] = z_hat
    print(f"{method:8s} stop_iter {res.stop_iter}  relative error {err:.2e}")

print("z(10) from the IPSG estimate:", se.propagate(sys_.A_state, estimates["ipsg"], 10))
