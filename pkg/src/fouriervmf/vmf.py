"""
von Mises-Fisher distribution on the unit hypersphere S^{d-1}.

Density ``C_d(kappa) exp(kappa mu.z)`` with

.. math::
    \\log C_d(\\kappa) = (d/2 - 1) \\log\\kappa - (d/2) \\log 2\\pi
                         - \\log I_{d/2-1}(\\kappa)

Provides the class-conditional negative log-likelihood used as a feature
regularizer, its analytic gradients, EMA maintenance of class prototypes,
a maximum-likelihood fit and an exact sampler.

Concentrations are stored as ``log kappa`` so that gradient steps keep them
positive; they are clipped to ``[KAPPA_MIN, KAPPA_MAX]``.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional

import numpy as np

from ._bessel import iv_ratio, log_iv_scalar
from .errors import NumericalError, ShapeError

KAPPA_MIN = 1e-4
KAPPA_MAX = 1e5
KAPPA_INIT = 10.0
EMA_MOMENTUM = 0.99
UNIT_TOL = 1e-6

__all__ = [
    "KAPPA_MIN",
    "KAPPA_MAX",
    "KAPPA_INIT",
    "EMA_MOMENTUM",
    "EmbeddingBatch",
    "VmfClassParams",
    "VmfRegularizer",
    "normalize",
    "log_norm_const",
    "mean_cosine",
    "log_pdf",
    "nll_loss",
    "nll_grad",
    "ema_update",
    "fit",
    "sample",
]


def normalize(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=axis, keepdims=True)


def _check_unit(x, what="vector"):
    norms = np.linalg.norm(x, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        bad = float(np.max(np.abs(norms - 1.0)))
        raise ShapeError(f"{what} is not unit-norm (max deviation {bad:.2e})")


@dataclass(frozen=True)
class EmbeddingBatch:
    """``n x d`` unit-norm features with integer labels in ``[0, n_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: Optional[int] = None
    check_unit: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if feats.shape[0] != labels.shape[0]:
            raise ShapeError(f"{feats.shape[0]} feature rows but {labels.shape[0]} labels")
        if np.any(labels < 0):
            raise ShapeError("labels must be nonnegative")
        k = self.n_classes
        if k is None:
            k = int(labels.max()) + 1 if labels.size else 0
        elif labels.size and labels.max() >= k:
            raise ShapeError(f"label {labels.max()} out of range for {k} classes")
        if self.check_unit and feats.size:
            _check_unit(feats, "feature row")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", int(k))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def of_class(self, k):
        return self.features[self.labels == k]


@dataclass(frozen=True)
class VmfClassParams:
    """Per-class mean direction and (log-)concentration.

    Use :meth:`create` to build from a plain ``kappa``.
    """

    class_id: int
    mu: np.ndarray
    log_kappa: float
    ema_momentum: float = EMA_MOMENTUM

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        if mu.size < 2:
            raise ShapeError("mean direction needs dimension >= 2")
        _check_unit(mu, "mean direction")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError(f"ema_momentum must lie in [0, 1], got {self.ema_momentum}")
        lk = float(np.clip(self.log_kappa, math.log(KAPPA_MIN), math.log(KAPPA_MAX)))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_kappa", lk)

    @classmethod
    def create(cls, class_id, mu, kappa=KAPPA_INIT, ema_momentum=EMA_MOMENTUM):
        if not kappa > 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        return cls(class_id, mu, math.log(kappa), ema_momentum)

    @property
    def kappa(self):
        return math.exp(self.log_kappa)

    @property
    def dim(self):
        return self.mu.size


def log_norm_const(dim, kappa):
    """``log C_d(kappa)``, the log normalizer of the vMF density on S^{dim-1}."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    nu = 0.5 * dim - 1.0
    out = nu * math.log(kappa) - 0.5 * dim * math.log(2.0 * math.pi) - log_iv_scalar(nu, kappa)
    if not math.isfinite(out):
        raise NumericalError(f"log C_d(kappa) is not finite for dim={dim}, kappa={kappa}")
    return out


def mean_cosine(dim, kappa):
    """A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), the expected cosine to mu.

    Equals ``-d/dkappa log C_d(kappa)``.
    """
    nu = 0.5 * dim - 1.0
    out = iv_ratio(nu, kappa)
    if not math.isfinite(out):
        raise NumericalError(f"A_d(kappa) is not finite for dim={dim}, kappa={kappa}")
    return out


def log_pdf(z, params):
    """Log density of ``z`` (shape ``(d,)`` or ``(n, d)``) under ``params``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.dim:
        raise ShapeError(f"dimension mismatch: z has {z.shape[-1]}, mu has {params.dim}")
    kappa = params.kappa
    return log_norm_const(params.dim, kappa) + kappa * (z @ params.mu)


def _per_sample_terms(batch, params):
    if batch.n == 0:
        raise ValueError("empty batch")
    classes = np.unique(batch.labels)
    missing = [int(k) for k in classes if int(k) not in params]
    if missing:
        raise KeyError(f"no vMF parameters registered for classes {missing}")
    for k in classes:
        if params[int(k)].dim != batch.dim:
            raise ShapeError(f"class {k}: mu has dim {params[int(k)].dim}, features have {batch.dim}")
    mus = np.stack([params[int(k)].mu for k in batch.labels])
    kappas = np.array([params[int(k)].kappa for k in batch.labels])
    cos = np.einsum("ij,ij->i", batch.features, mus)
    return classes, mus, kappas, cos


def nll_loss(batch, params):
    """Mean negative vMF log-likelihood of each feature under its class.

    Parameters
    ----------
    batch : EmbeddingBatch
    params : mapping of class id -> VmfClassParams
    """
    classes, _, kappas, cos = _per_sample_terms(batch, params)
    log_c = {int(k): log_norm_const(batch.dim, params[int(k)].kappa) for k in classes}
    log_cs = np.array([log_c[int(k)] for k in batch.labels])
    return float(-np.mean(log_cs + kappas * cos))


def nll_grad(batch, params):
    """Gradients of :func:`nll_loss`.

    Returns ``(grad_features, grad_kappa)``; the feature gradient is the ambient
    one, ``-kappa_k mu_k / n`` per row, and ``grad_kappa`` maps each class present
    in the batch to ``(1/n) sum_i (A_d(kappa_k) - mu_k . z_i)``. Mean directions
    get no gradient.
    """
    classes, mus, kappas, cos = _per_sample_terms(batch, params)
    n = batch.n
    grad_features = -(kappas[:, None] * mus) / n
    grad_kappa = {}
    for k in classes:
        k = int(k)
        sel = batch.labels == k
        a = mean_cosine(batch.dim, params[k].kappa)
        grad_kappa[k] = float(np.sum(a - cos[sel]) / n)
    return grad_features, grad_kappa


def ema_update(params, class_features):
    """Move the class prototype towards the mean of ``class_features``.

    ``mu' = normalize(m * mu + (1 - m) * mean(rows))``; kappa is untouched. When
    the combined vector nearly cancels (norm < 1e-12) the prototype is kept.
    """
    feats = np.atleast_2d(np.asarray(class_features, dtype=np.float64))
    if feats.shape[0] < 1:
        raise ValueError("need at least one feature row")
    m = params.ema_momentum
    if m == 1.0:
        return params
    v = feats.mean(axis=0)
    combined = m * params.mu + (1.0 - m) * v
    norm = np.linalg.norm(combined)
    if norm < 1e-12:
        return params
    return replace(params, mu=combined / norm)


def fit(samples, kappa_max=KAPPA_MAX):
    """Approximate maximum-likelihood ``(mu_hat, kappa_hat)`` for one class.

    ``kappa_hat = R(d - R^2) / (1 - R^2)`` with ``R`` the mean resultant length
    (Banerjee et al., 2005), capped at ``kappa_max``.
    """
    if isinstance(samples, EmbeddingBatch):
        samples = samples.features
    z = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = z.shape
    if n < 2:
        raise ValueError("fit needs at least two samples")
    resultant = z.sum(axis=0)
    norm = np.linalg.norm(resultant)
    if norm == 0.0:
        raise NumericalError("resultant vector is zero; mean direction undefined")
    mu_hat = resultant / norm
    r_bar = min(norm / n, 1.0)
    if r_bar >= 1.0 - 1e-12:
        return mu_hat, float(kappa_max)
    kappa_hat = r_bar * (d - r_bar**2) / (1.0 - r_bar**2)
    return mu_hat, float(min(kappa_hat, kappa_max))


def sample(mu, kappa, n, rng):
    """Draw ``n`` i.i.d. vMF(mu, kappa) vectors (Wood, 1994 rejection scheme)."""
    mu = normalize(np.asarray(mu, dtype=np.float64).reshape(-1))
    d = mu.size
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if n == 0:
        return np.empty((0, d))
    b = (d - 1.0) / (2.0 * kappa + math.sqrt(4.0 * kappa**2 + (d - 1.0) ** 2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + (d - 1.0) * math.log(1.0 - x0**2)

    w = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        zb = rng.beta((d - 1.0) / 2.0, (d - 1.0) / 2.0, size=m)
        cand = (1.0 - (1.0 + b) * zb) / (1.0 - (1.0 - b) * zb)
        u = rng.random(m)
        ok = kappa * cand + (d - 1.0) * np.log(1.0 - x0 * cand) - c >= np.log(u)
        got = cand[ok]
        w[filled:filled + got.size] = got
        filled += got.size

    v = rng.standard_normal((n, d))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    z = w[:, None] * mu + np.sqrt(np.clip(1.0 - w**2, 0.0, None))[:, None] * v
    return normalize(z)


class VmfRegularizer:
    """Per-class vMF state used during training.

    Prototypes are seeded from the first observed batch mean of each class;
    until then the class is left out of the loss. Only ``log kappa`` is
    trained by gradient; prototypes follow :func:`ema_update`.
    """

    def __init__(self, dim, kappa_init=KAPPA_INIT, ema_momentum=EMA_MOMENTUM):
        self.dim = dim
        self.kappa_init = kappa_init
        self.ema_momentum = ema_momentum
        self.params: Dict[int, VmfClassParams] = {}

    def seed_missing(self, features, labels):
        for k in np.unique(labels):
            k = int(k)
            if k in self.params:
                continue
            v = features[labels == k].sum(axis=0)
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                continue
            self.params[k] = VmfClassParams.create(k, v / norm, self.kappa_init, self.ema_momentum)

    def observed_mask(self, labels):
        return np.isin(labels, list(self.params))

    def loss_and_grad(self, features, labels):
        """Loss, ambient feature gradient (zero rows for unseeded classes), kappa grads."""
        mask = self.observed_mask(labels)
        grad = np.zeros_like(features)
        if not mask.any():
            return 0.0, grad, {}
        batch = EmbeddingBatch(features[mask], labels[mask], check_unit=False)
        loss = nll_loss(batch, self.params)
        g_feat, g_kappa = nll_grad(batch, self.params)
        grad[mask] = g_feat
        return loss, grad, g_kappa

    def kappa_step(self, grad_kappa: Mapping[int, float], lr):
        """SGD on ``log kappa``; d/dlog(kappa) = kappa * d/dkappa."""
        for k, g in grad_kappa.items():
            p = self.params[k]
            self.params[k] = replace(p, log_kappa=p.log_kappa - lr * p.kappa * g)

    def ema_step(self, features, labels):
        for k in np.unique(labels):
            k = int(k)
            if k in self.params:
                self.params[k] = ema_update(self.params[k], features[labels == k])

    def kappas(self):
        return {k: p.kappa for k, p in sorted(self.params.items())}
