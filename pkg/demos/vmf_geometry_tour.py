"""
The von Mises-Fisher toolbox
============================

Log-normalizers at high dimension, the sample/fit loop, and the pull that the
NLL gradient exerts on a feature.

Run: ``python3 demos/vmf_geometry_tour.py``
"""

import math

import numpy as np

from fouriervmf.dataio import rng_stream
from fouriervmf.vmf import (
    EmbeddingBatch,
    VmfClassParams,
    fit,
    log_norm_const,
    mean_cosine,
    nll_grad,
    normalize,
    sample,
)

# %% log C_d(kappa) stays finite where I_nu itself would overflow
for d in (3, 64, 512, 4096):
    print(f"d={d:5d}  log C_d(10)={log_norm_const(d, 10.0):12.4f}  A_d(10)={mean_cosine(d, 10.0):.5f}")

# %% expected cosine to the mean grows with kappa, slower in high dimension
for kappa in (1, 10, 100, 1000):
    print(f"kappa={kappa:5d}  A_16={mean_cosine(16, kappa):.4f}  A_512={mean_cosine(512, kappa):.4f}")

# %% sample and refit; the direction error grows with d at fixed n
rng = rng_stream(0, 1)
for d, kappa in ((3, 20), (8, 20), (64, 20), (64, 100)):
    mu = normalize(rng.standard_normal(d))
    z = sample(mu, kappa, 10_000, rng)
    mu_hat, k_hat = fit(z)
    ang = math.degrees(math.acos(min(1.0, float(mu_hat @ mu))))
    print(f"d={d:3d} kappa={kappa:4d}  fitted kappa={k_hat:7.2f}  direction error={ang:.2f} deg")

# %% one projected gradient step moves a feature towards its centroid
mu = normalize(np.array([1.0, 0.0, 0.0, 0.0]))
z = normalize(np.array([0.2, 1.0, -0.3, 0.1]))
params = {0: VmfClassParams.create(0, mu, 10.0)}
g, g_kappa = nll_grad(EmbeddingBatch(z[None], np.array([0])), params)
tangent = g[0] - (g[0] @ z) * z
z_new = normalize(z - 0.05 * tangent)
print(f"cosine to centroid: {z @ mu:.4f} -> {z_new @ mu:.4f};  dL/dkappa = {g_kappa[0]:.4f}")
