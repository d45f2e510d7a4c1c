"""
Probabilistic Fourier augmentation.

Each image in a batch is independently replaced, with probability ``p_aug``, by
an amplitude mix with a randomly drawn style image: the content keeps its
phase spectrum while its amplitude spectrum is interpolated towards the
style's, ``A = (1 - lam) * A_content + lam * A_style``. Everything else passes
through untouched.

Randomness is keyed per element: the gate, style index and lambda of element
``i`` are counter-based draws ``counter_uniform(policy.seed, key, i, j)``, so the
outcome does not depend on the order in which elements are processed and a
whole batch is planned in a few vectorized operations.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import betaincinv

from .dataio import counter_uniform
from .errors import ShapeError
from .spectral import check_image, decompose, fft2d, ifft2d, recompose

__all__ = [
    "Uniform",
    "Beta",
    "Fixed",
    "parse_sampler",
    "format_sampler",
    "AugPolicy",
    "AugRecord",
    "StylePool",
    "sample_lambda",
    "amplitude_mix",
    "mix_from_spectra",
    "plan_policy",
    "apply_policy",
    "phase_preservation_check",
    "resize_bilinear",
]

PHASE_TOL = 1e-3


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"Uniform needs 0 <= lo <= hi <= 1, got ({self.lo}, {self.hi})")

    def draw(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def from_uniform(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)


@dataclass(frozen=True)
class Beta:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"Beta needs alpha > 0, got {self.alpha}")

    def draw(self, rng):
        # numpy draws Beta as a ratio of two Gamma variates
        return float(rng.beta(self.alpha, self.alpha))

    def from_uniform(self, u):
        # inverse CDF of the symmetric Beta
        return betaincinv(self.alpha, self.alpha, np.asarray(u))


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"Fixed lambda must lie in [0, 1], got {self.value}")

    def draw(self, rng):
        return float(self.value)

    def from_uniform(self, u):
        return np.full(np.shape(u), float(self.value))


Sampler = Union[Uniform, Beta, Fixed]


def parse_sampler(text):
    """Parse ``uniform:LO,HI``, ``beta:ALPHA`` or ``fixed:LAMBDA``."""
    name, _, args = str(text).strip().partition(":")
    name = name.strip().lower()
    try:
        vals = [float(a) for a in args.split(",")] if args.strip() else []
    except ValueError as exc:
        raise ValueError(f"bad sampler spec {text!r}") from exc
    if name == "uniform":
        if len(vals) not in (0, 2):
            raise ValueError(f"uniform sampler takes LO,HI: {text!r}")
        return Uniform(*vals)
    if name == "beta" and len(vals) == 1:
        return Beta(vals[0])
    if name == "fixed" and len(vals) == 1:
        return Fixed(vals[0])
    raise ValueError(f"bad sampler spec {text!r}")


def format_sampler(sampler):
    if isinstance(sampler, Uniform):
        return f"uniform:{sampler.lo!r},{sampler.hi!r}"
    if isinstance(sampler, Beta):
        return f"beta:{sampler.alpha!r}"
    if isinstance(sampler, Fixed):
        return f"fixed:{sampler.value!r}"
    raise TypeError(f"unknown sampler {sampler!r}")


@dataclass(frozen=True)
class AugPolicy:
    p_aug: float = 0.5
    sampler: Sampler = Uniform(0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_aug <= 1.0:
            raise ValueError(f"p_aug must lie in [0, 1], got {self.p_aug}")
        if isinstance(self.sampler, str):
            object.__setattr__(self, "sampler", parse_sampler(self.sampler))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class AugRecord:
    index: int
    applied: bool
    lam: Optional[float] = None
    style_index: Optional[int] = None

    def __post_init__(self):
        if not self.applied and (self.lam is not None or self.style_index is not None):
            raise ValueError("a skipped element cannot carry lambda or style_index")

    def as_dict(self):
        return {
            "index": self.index,
            "applied": self.applied,
            "lambda": self.lam,
            "style_index": self.style_index,
        }


def sample_lambda(policy, rng):
    return policy.sampler.draw(rng)


def resize_bilinear(image, height, width):
    """Bilinear resize of ``(H, W, C)`` or ``(H, W)`` with half-pixel centers."""
    x = np.asarray(image, dtype=np.float64)
    H, W = x.shape[:2]
    if (H, W) == (height, width):
        return x.copy()

    def coords(n_in, n_out):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0.0, n_in - 1)
        i0 = np.floor(c).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, c - i0

    r0, r1, fr = coords(H, height)
    c0, c1, fc = coords(W, width)
    extra = (None,) * (x.ndim - 2)
    fr = fr[(slice(None), None) + extra]
    fc = fc[(None, slice(None)) + extra]
    top = x[r0][:, c0] * (1 - fc) + x[r0][:, c1] * fc
    bot = x[r1][:, c0] * (1 - fc) + x[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


class StylePool:
    """Images to draw style amplitudes from, uniformly with replacement.

    Drawn images are bilinearly resized to the requested shape. Amplitude
    spectra are cached per (index, shape).
    """

    def __init__(self, images: Sequence[np.ndarray]):
        if len(images) == 0:
            raise ValueError("style pool is empty")
        self.images = [check_image(im) for im in images]
        self._amp_cache = {}

    def __len__(self):
        return len(self.images)

    def draw_index(self, rng):
        return int(rng.integers(len(self.images)))

    def image(self, index, shape):
        im = self.images[index]
        if im.ndim != len(shape):
            raise ShapeError(f"style image {index} has shape {im.shape}, content {tuple(shape)}")
        if im.ndim == 3 and im.shape[2] != shape[2]:
            raise ShapeError(f"style image {index} has {im.shape[2]} channels, content {shape[2]}")
        return resize_bilinear(im, shape[0], shape[1])

    def amplitude(self, index, shape):
        key = (index, tuple(shape))
        amp = self._amp_cache.get(key)
        if amp is None:
            amp = decompose(fft2d(self.image(index, shape))).amplitude
            self._amp_cache[key] = amp
        return amp

    def draw(self, rng, shape):
        index = self.draw_index(rng)
        return index, self.image(index, shape)


def mix_from_spectra(content_amplitude, content_phase, style_amplitude, lam, clamp=True):
    """Amplitude mix given precomputed spectra; ``lam`` broadcasts over leading axes.

    Works on single images or stacked ``(N, H, W, C)`` batches. ``content_phase``
    may also be given as complex unit phasors ``exp(j * phase)``, which skips
    the per-call exponential when the same content is mixed repeatedly.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim:
        lam = lam.reshape(lam.shape + (1,) * (np.ndim(content_amplitude) - lam.ndim))
    mixed = (1.0 - lam) * content_amplitude + lam * style_amplitude
    if np.iscomplexobj(content_phase):
        out = ifft2d(mixed * content_phase)
    else:
        out = ifft2d(recompose(mixed, content_phase))
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def amplitude_mix(content, style, lam, clamp=True):
    """Keep the phase of ``content`` and interpolate its amplitude towards ``style``.

    Parameters
    ----------
    content, style : ndarray
        Images of identical shape.
    lam : float
        Interpolation weight in [0, 1]; 0 returns the content.
    clamp : bool
        Clip the reconstruction to [0, 1]. Disable to inspect the raw inverse.
    """
    c = check_image(content)
    s = check_image(style)
    if c.shape != s.shape:
        raise ShapeError(f"content shape {c.shape} != style shape {s.shape}")
    if not np.all((0.0 <= np.asarray(lam)) & (np.asarray(lam) <= 1.0)):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    amp_c, phase_c = decompose(fft2d(c))
    amp_s = decompose(fft2d(s)).amplitude
    return mix_from_spectra(amp_c, phase_c, amp_s, lam, clamp=clamp)


def plan_policy(n, pool_size, policy, key=(), start_index=0) -> List[AugRecord]:
    """Decide gate, style index and lambda for ``n`` elements without touching pixels.

    Element ``i`` (counter ``start_index + i``) uses draw 0 as the gate variable
    ``r`` (applied iff ``r < p_aug``), draw 1 for the style index and draw 2,
    mapped through the sampler's inverse CDF, for lambda.
    """
    key = tuple(key) if isinstance(key, (tuple, list)) else (key,)
    counters = np.arange(start_index, start_index + n, dtype=np.uint64)
    r = counter_uniform(policy.seed, key, counters, 0)
    applied = r < policy.p_aug
    styles = np.minimum((counter_uniform(policy.seed, key, counters, 1) * pool_size).astype(np.int64),
                        pool_size - 1)
    lams = np.clip(policy.sampler.from_uniform(counter_uniform(policy.seed, key, counters, 2)), 0.0, 1.0)
    return [
        AugRecord(i, True, float(lams[i]), int(styles[i])) if applied[i] else AugRecord(i, False)
        for i in range(n)
    ]


def apply_policy(batch, style_pool, policy, key=(), start_index=0) -> Tuple[list, List[AugRecord]]:
    """Gate each image of ``batch`` and amplitude-mix the selected ones.

    Returns the new batch (same order and length; untouched images are the
    original objects) and one :class:`AugRecord` per element. Labels are not
    an input and therefore cannot change.
    """
    images = list(batch)
    if not images:
        raise ValueError("batch is empty")
    records = plan_policy(len(images), len(style_pool), policy, key, start_index)
    out = []
    for im, rec in zip(images, records):
        if not rec.applied:
            out.append(im)
            continue
        content = check_image(im)
        amp_c, phase_c = decompose(fft2d(content))
        amp_s = style_pool.amplitude(rec.style_index, content.shape)
        out.append(mix_from_spectra(amp_c, phase_c, amp_s, rec.lam))
    return out, records


def phase_preservation_check(content, augmented, tol=1e-3):
    """True when the phases of two images agree at every significant coefficient.

    A coefficient is significant when its amplitude exceeds ``tol`` times the
    mean amplitude in both spectra. Phase differences are wrapped to (-pi, pi]
    and must not exceed 1e-3 in magnitude.
    """
    a = check_image(content)
    b = check_image(augmented)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    amp_a, ph_a = decompose(fft2d(a))
    amp_b, ph_b = decompose(fft2d(b))
    sig = (amp_a > tol * amp_a.mean()) & (amp_b > tol * amp_b.mean())
    diff = np.angle(np.exp(1j * (ph_a - ph_b)))
    return bool(np.all(np.abs(diff[sig]) <= PHASE_TOL))
