"""The numba-compiled kernels and the plain NumPy fallback run the same
source; this re-imports the kernel module under the fallback flag in a
subprocess and compares outputs bit-for-bit against the in-process backend."""

import json
import os
import subprocess
import sys

import numpy as np

from epoch_active import kernels

SCRIPT = r"""
import json, sys
import numpy as np
from epoch_active import kernels
from epoch_active._backend import BACKEND

rng = np.random.default_rng(1234)
d = 3
P = rng.normal(size=(1, d))
x = rng.normal(size=d)
X = rng.normal(size=(40, d))
Y = rng.integers(0, 2, size=40).astype(np.int64)
W = np.full(40, 1.0 / 40)
A = X.T @ X / 2
lam, V = np.linalg.eigh(A)
lam = np.clip(lam, 0, None)
Vt = np.ascontiguousarray(V.T)
C = np.zeros((1, d))
G = rng.normal(size=(1, d))
starts = rng.normal(size=(3, 1, d))

fit_p, fit_c, fit_i = kernels.pgd_fit(np.zeros((1, d)), X, Y, W, 0, 0, 1.0,
                                      300, 1.0, True, 1e-9)
risk = kernels.empirical_risk(P, X, Y, W, 0, 1)
proj = kernels.project_intersection(P * 3, C, V, Vt, lam, 0.4, 1.0, 100, 1e-12)
bounds = kernels.linear_bounds(G, C, V, lam, 0.4, 1.0)
dual, phat = kernels.linear_dual_bound(G, C, V, Vt, lam, 0.4, 1.0)
best, cert = kernels.ascend_linear(G, C, V, Vt, lam, 0.4, 1.0, starts,
                                   200, 1e-10, 100, 1e-11)
gap_best, _ = kernels.ascend_class_gap(C, V, Vt, lam, 0.4, 1.0, x, 0, 1, 1, 0,
                                       starts, 200, 1e-10, 100, 1e-11, 2.0)
out = {
    "backend": BACKEND,
    "fit": fit_p.ravel().tolist(),
    "risk": risk,
    "proj": proj.ravel().tolist(),
    "bounds": list(bounds),
    "dual": dual,
    "phat": phat.ravel().tolist(),
    "best": best,
    "gap_best": gap_best,
}
print(json.dumps(out))
"""


def run_with_backend(backend):
    env = dict(os.environ, EPOCH_ACTIVE_BACKEND=backend)
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env,
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_numpy_fallback_matches_numba():
    a = run_with_backend("numpy")
    b = run_with_backend("numba")
    assert a["backend"] == "numpy"
    assert b["backend"] == "numba"
    for key in ("fit", "risk", "proj", "bounds", "dual", "phat", "best",
                "gap_best"):
        np.testing.assert_allclose(a[key], b[key], rtol=1e-12, atol=1e-12,
                                   err_msg=key)


def test_flag_validation():
    env = dict(os.environ, EPOCH_ACTIVE_BACKEND="gpu")
    proc = subprocess.run(
        [sys.executable, "-c", "import epoch_active"], env=env,
        capture_output=True, text=True, timeout=120)
    assert proc.returncode != 0
    assert "EPOCH_ACTIVE_BACKEND" in proc.stderr
