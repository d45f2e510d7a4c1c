"""Fourier amplitude-mix augmentation and von Mises-Fisher feature regularization.

Submodules
----------
spectral
    Exact 2D DFT, amplitude/phase decomposition.
augment
    Probabilistic amplitude-mix policy and lambda samplers.
vmf
    vMF density, loss, gradients, EMA prototypes, sampler and fitter.
dataio
    PNM / EMB1 codecs, run configuration, seeded random streams.
harness
    Synthetic two-domain task, toy model training and ablation.
"""

from .augment import AugPolicy, AugRecord, Beta, Fixed, StylePool, Uniform, amplitude_mix, apply_policy, parse_sampler
from .dataio import RunConfig, load_image, read_emb, save_image, semantic_shift, write_emb
from .errors import DataFormatError, FourierVmfError, NumericalError, ShapeError
from .spectral import decompose, fft2d, ifft2d, recompose
from .vmf import EmbeddingBatch, VmfClassParams, VmfRegularizer, ema_update, fit, log_norm_const, nll_grad, nll_loss, sample

__version__ = "0.1.0"

__all__ = [
    "AugPolicy", "AugRecord", "Beta", "Fixed", "StylePool", "Uniform", "amplitude_mix", "apply_policy",
    "parse_sampler", "RunConfig", "load_image", "read_emb", "save_image", "semantic_shift", "write_emb",
    "DataFormatError", "FourierVmfError", "NumericalError", "ShapeError", "decompose", "fft2d", "ifft2d",
    "recompose", "EmbeddingBatch", "VmfClassParams", "VmfRegularizer", "ema_update", "fit", "log_norm_const",
    "nll_grad", "nll_loss", "sample",
]
