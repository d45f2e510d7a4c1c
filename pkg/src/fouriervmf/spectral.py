"""
2D discrete Fourier analysis of image channels.

Images are real arrays shaped ``(H, W)`` or ``(..., H, W, C)``; the transform
runs over the two spatial axes and every channel is handled independently.
The forward transform is unnormalized,

.. math::
    F(u, v) = \\sum_{h=0}^{H-1} \\sum_{w=0}^{W-1} x(h, w)
              e^{-j 2\\pi (h u / H + w v / W)}

and the inverse carries the ``1/(HW)`` factor. No centering (fftshift) is
applied anywhere.

The 1D kernel is a recursive mixed-radix Cooley-Tukey FFT, vectorized over all
leading axes with numpy. Lengths up to ``DIRECT_DFT_MAX`` (and radix factors)
use a direct DFT matrix product, which BLAS makes faster than recursing at
these sizes; larger primes go through Bluestein's chirp-z algorithm on a
power-of-two grid.
"""

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "AmplitudePhase",
    "fft",
    "ifft",
    "fft2d",
    "ifft2d",
    "decompose",
    "recompose",
    "check_image",
]

DIRECT_DFT_MAX = 32
IMAG_RESIDUE_RTOL = 1e-6


class AmplitudePhase(NamedTuple):
    amplitude: np.ndarray
    phase: np.ndarray


def _spatial_axes(ndim):
    if ndim == 2:
        return (0, 1)
    if ndim >= 3:
        return (ndim - 3, ndim - 2)
    raise ShapeError(f"expected an array with at least 2 dimensions, got {ndim}")


def check_image(image):
    """Validate an image array and return it as float64.

    Accepts ``(H, W)`` or ``(..., H, W, C)`` with ``C`` in {1, 3}.
    """
    x = np.asarray(image, dtype=np.float64)
    ax = _spatial_axes(x.ndim)
    if any(x.shape[a] == 0 for a in ax):
        raise ShapeError(f"zero-sized spatial dimension in shape {x.shape}")
    if x.ndim >= 3 and x.shape[-1] not in (1, 3):
        raise ShapeError(f"channel count must be 1 or 3, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ShapeError("image contains non-finite values")
    return x


@lru_cache(maxsize=None)
def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n):
    k = np.arange(n)
    # reduce the exponent mod n before scaling to keep the angle small
    m = np.exp(-2j * np.pi * ((np.outer(k, k) % n) / n))
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def _twiddles(p, m):
    n = p * m
    r = np.arange(p)[:, None]
    k = np.arange(m)[None, :]
    t = np.exp(-2j * np.pi * ((r * k) % n) / n)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=None)
def _bluestein_plan(n):
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1 << (2 * n - 2).bit_length()
    kernel = np.zeros(size, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[size - n + 1:] = np.conj(chirp[1:][::-1])
    kernel_hat = _fft_last(kernel)
    chirp.setflags(write=False)
    kernel_hat.setflags(write=False)
    return chirp, size, kernel_hat


def _bluestein(x):
    n = x.shape[-1]
    chirp, size, kernel_hat = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _ifft_last(_fft_last(a) * kernel_hat)
    return conv[..., :n] * chirp


def _fft_last(x):
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128, copy=True)
    if n <= DIRECT_DFT_MAX:
        # one 2D product so BLAS sees a single large matrix
        flat = np.ascontiguousarray(x, dtype=np.complex128).reshape(-1, n)
        return (flat @ _dft_matrix(n)).reshape(x.shape)
    p = _smallest_factor(n)
    if p == n:
        return _bluestein(x)
    m = n // p
    # decimation in time: p interleaved subsequences of length m
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    y = _fft_last(sub) * _twiddles(p, m)
    out = _dft_matrix(p) @ y
    return out.reshape(x.shape[:-1] + (n,))


@lru_cache(maxsize=None)
def _idft_matrix(n):
    m = np.conj(_dft_matrix(n)) / n
    m.setflags(write=False)
    return m


def _ifft_last(x):
    n = x.shape[-1]
    if n <= DIRECT_DFT_MAX:
        flat = np.ascontiguousarray(x, dtype=np.complex128).reshape(-1, n)
        return (flat @ _idft_matrix(n)).reshape(x.shape)
    return np.conj(_fft_last(np.conj(x))) / n


def fft(x, axis=-1):
    """Unnormalized 1D DFT of ``x`` along ``axis`` (any length >= 1)."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    if x.shape[-1] == 0:
        raise ShapeError("cannot transform a zero-length axis")
    return np.moveaxis(_fft_last(x), -1, axis)


def ifft(x, axis=-1):
    """Inverse of :func:`fft`, including the ``1/n`` factor."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    if x.shape[-1] == 0:
        raise ShapeError("cannot transform a zero-length axis")
    return np.moveaxis(_ifft_last(x), -1, axis)


def _fft2_complex(x, inverse=False):
    ax0, ax1 = _spatial_axes(x.ndim)
    f = ifft if inverse else fft
    return f(f(x, axis=ax1), axis=ax0)


def _reflect(s, axes):
    # index map u -> (-u) mod n along each axis
    for a in axes:
        s = np.roll(np.flip(s, axis=a), 1, axis=a)
    return s


def fft2d(image):
    """Forward 2D DFT over the spatial axes of a real image (per channel).

    Returns a complex array with the same shape as ``image``. The output is
    projected onto its Hermitian part, so ``F(u, v) == conj(F(-u, -v))`` holds
    bit-exactly and self-conjugate bins are exactly real. Without this,
    rounding noise in near-zero bins gives pairs of phases that do not cancel,
    and an amplitude mix would then invert to a complex image.
    """
    x = check_image(image)
    f = _fft2_complex(x)
    axes = _spatial_axes(x.ndim)
    return 0.5 * (f + np.conj(_reflect(f, axes)))


def ifft2d(spectrum):
    """Inverse 2D DFT returning a real image (not clamped).

    Raises
    ------
    NumericalError
        If the imaginary residue exceeds ``1e-6 * max(1, max|Re|)``, which
        means the spectrum is not conjugate-symmetric.
    """
    s = np.asarray(spectrum, dtype=np.complex128)
    ax = _spatial_axes(s.ndim)
    if any(s.shape[a] == 0 for a in ax):
        raise ShapeError(f"zero-sized spatial dimension in shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ShapeError("spectrum contains non-finite values")
    out = _fft2_complex(s, inverse=True)
    re = out.real
    limit = IMAG_RESIDUE_RTOL * max(1.0, float(np.max(np.abs(re))))
    resid = float(np.max(np.abs(out.imag)))
    if resid > limit:
        raise NumericalError(
            f"imaginary residue {resid:.3e} exceeds {limit:.3e}; "
            "spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(re)


def decompose(spectrum):
    """Split a spectrum into amplitude ``|F|`` and phase ``arg F`` in (-pi, pi].

    The phase of a zero coefficient is 0.
    """
    s = np.asarray(spectrum, dtype=np.complex128)
    amplitude = np.abs(s)
    phase = np.array(np.angle(s), dtype=np.float64)
    # -0.0 imaginary parts map to -pi; fold onto the half-open interval
    phase[phase <= -np.pi] = np.pi
    phase[amplitude == 0] = 0.0
    return AmplitudePhase(amplitude, phase)


def recompose(amplitude, phase=None):
    """Rebuild complex coefficients ``amplitude * exp(j * phase)``.

    Accepts either an :class:`AmplitudePhase` or two arrays.
    """
    if phase is None:
        amplitude, phase = amplitude
    a = np.asarray(amplitude, dtype=np.float64)
    p = np.asarray(phase, dtype=np.float64)
    if a.shape != p.shape:
        raise ShapeError(f"amplitude shape {a.shape} != phase shape {p.shape}")
    if np.any(a < 0):
        raise ValueError("amplitude must be nonnegative")
    return a * np.exp(1j * p)
