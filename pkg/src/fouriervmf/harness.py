"""
Desk-scale training harness.

A synthetic two-domain glyph dataset, a one-layer feature extractor with L2
normalized outputs, and a linear classifier trained with

    L_total = L_cls + lambda_vmf * L_vmf

where ``L_cls`` is softmax cross-entropy and ``L_vmf`` the class-conditional vMF
negative log-likelihood of the normalized features. Gradients are derived by
hand for this fixed architecture.

Per minibatch: gate/mix images, forward, losses, SGD step on the network and
on ``log kappa``, then EMA update of the class prototypes.
"""

import csv
import io
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .augment import AugPolicy, mix_from_spectra, parse_sampler, plan_policy
from .dataio import RunConfig, rng_stream
from .errors import NumericalError
from .spectral import decompose, fft2d
from .vmf import EmbeddingBatch, VmfRegularizer, normalize

log = logging.getLogger(__name__)

__all__ = [
    "DomainStyle",
    "SynthSpec",
    "DEFAULT_SPEC",
    "synth_dataset",
    "render_glyph",
    "ToyModel",
    "TrainReport",
    "train",
    "ablation_matrix",
    "ABLATION_ROWS",
    "compactness_metrics",
    "power_iteration_pca",
    "pca_scatter_export",
]

# stream ids for rng_stream(seed, (STREAM_*, ...))
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_AUG = 4

GLYPHS = ("disk", "cross", "bar", "ring", "square", "diagonal", "triangle", "plus_ring")


# ----------------------------------------------------------------- dataset


@dataclass(frozen=True)
class DomainStyle:
    """Per-channel affine style plus additive low-frequency texture.

    ``gain_jitter`` / ``bias_jitter`` are per-image uniform perturbations
    (half-widths) added on top of the fixed per-channel values.
    """

    gain: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    bias: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    texture: float = 0.0
    gain_jitter: float = 0.0
    bias_jitter: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 4
    samples_per_class: int = 200
    height: int = 24
    width: int = 24
    source: DomainStyle = DomainStyle()
    shifted: DomainStyle = DomainStyle()

    def __post_init__(self):
        if not 2 <= self.n_classes <= len(GLYPHS):
            raise ValueError(f"n_classes must lie in [2, {len(GLYPHS)}]")

    @property
    def domains(self):
        return {"source": self.source, "shifted": self.shifted}


def render_glyph(kind, height, width, cy, cx, scale):
    """Binary-ish mask in [0, 1] of one glyph centered at (cy, cx)."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    r = np.hypot(dy, dx)
    s = scale * min(height, width) / 24.0
    half = 1.2 * s
    if kind == "disk":
        m = r <= 6.0 * s
    elif kind == "ring":
        m = (r <= 7.0 * s) & (r >= 4.5 * s)
    elif kind == "cross":
        m = ((np.abs(dx) <= half) | (np.abs(dy) <= half)) & (np.abs(dx) <= 7 * s) & (np.abs(dy) <= 7 * s)
    elif kind == "bar":
        m = (np.abs(dy) <= 1.8 * s) & (np.abs(dx) <= 8 * s)
    elif kind == "square":
        box = np.maximum(np.abs(dx), np.abs(dy))
        m = (box <= 7 * s) & (box >= 4.5 * s)
    elif kind == "diagonal":
        m = (np.abs(dx - dy) <= 2.0 * s) & (np.abs(dx + dy) <= 11 * s)
    elif kind == "triangle":
        m = (dy <= 5 * s) & (dy >= -6 * s) & (np.abs(dx) <= (dy + 6 * s) * 0.6)
    elif kind == "plus_ring":
        m = ((r <= 7.0 * s) & (r >= 5.0 * s)) | ((np.abs(dx) <= half) & (np.abs(dy) <= 4 * s))
    else:
        raise ValueError(f"unknown glyph {kind!r}")
    return m.astype(np.float64)


def _texture(rng, height, width, n_waves=3):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    t = np.zeros((height, width))
    for _ in range(n_waves):
        fy, fx = rng.integers(0, 3, size=2)
        if fy == 0 and fx == 0:
            fx = 1
        phase = rng.uniform(0, 2 * np.pi)
        t += np.cos(2 * np.pi * (fy * yy / height + fx * xx / width) + phase)
    return t / n_waves


def _render_domain(spec, style, rng):
    K, n = spec.n_classes, spec.samples_per_class
    H, W = spec.height, spec.width
    images = np.empty((K * n, H, W, 3))
    labels = np.repeat(np.arange(K), n)
    gain = np.asarray(style.gain, dtype=np.float64)
    bias = np.asarray(style.bias, dtype=np.float64)
    for i, k in enumerate(labels):
        cy = H / 2 - 0.5 + rng.uniform(-2.5, 2.5)
        cx = W / 2 - 0.5 + rng.uniform(-2.5, 2.5)
        scale = rng.uniform(0.8, 1.15)
        glyph = render_glyph(GLYPHS[k], H, W, cy, cx, scale)
        g = gain + rng.uniform(-style.gain_jitter, style.gain_jitter, size=3) if style.gain_jitter else gain
        b = bias + rng.uniform(-style.bias_jitter, style.bias_jitter, size=3) if style.bias_jitter else bias
        img = glyph[..., None] * g + b
        if style.texture:
            img = img + style.texture * _texture(rng, H, W)[..., None]
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels


def synth_dataset(spec, seed):
    """Render ``{"source": (images, labels), "shifted": (images, labels)}``.

    Class geometry is shared by both domains; only the style differs. Each
    domain draws from its own stream of ``seed``.
    """
    out = {}
    for j, (name, style) in enumerate(spec.domains.items()):
        out[name] = _render_domain(spec, style, rng_stream(seed, (STREAM_DATA, j)))
    return out


# Committed fixture: the source domain is mildly varied daylight; the shifted
# domain is dimmer, lifted, tinted and overlaid with strong low-frequency texture.
DEFAULT_SPEC = SynthSpec(
    n_classes=4,
    samples_per_class=200,
    height=24,
    width=24,
    source=DomainStyle(gain=(0.9, 0.9, 0.9), bias=(0.05, 0.05, 0.05), texture=0.05,
                       gain_jitter=0.1, bias_jitter=0.05),
    shifted=DomainStyle(gain=(0.45, 0.4, 0.55), bias=(0.35, 0.3, 0.4), texture=0.2,
                        gain_jitter=0.1, bias_jitter=0.05),
)


# ------------------------------------------------------------------- model


@dataclass
class ToyModel:
    """``f = normalize(tanh(W x + b))``, ``logits = V f + c``."""

    W: np.ndarray
    b: np.ndarray
    V: np.ndarray
    c: np.ndarray

    @classmethod
    def init(cls, in_dim, feature_dim, n_classes, rng):
        return cls(
            W=rng.standard_normal((feature_dim, in_dim)) / math.sqrt(in_dim),
            b=np.zeros(feature_dim),
            V=rng.standard_normal((n_classes, feature_dim)) / math.sqrt(feature_dim),
            c=np.zeros(n_classes),
        )

    def forward(self, x):
        u = x @ self.W.T + self.b
        h = np.tanh(u)
        r = np.linalg.norm(h, axis=1, keepdims=True)
        r = np.maximum(r, 1e-12)
        f = h / r
        logits = f @ self.V.T + self.c
        return logits, (x, h, r, f)

    def features(self, x):
        return self.forward(x)[1][3]

    def backward(self, cache, d_logits, d_feat_extra=None):
        """Parameter gradients given dL/dlogits and an optional extra dL/df."""
        x, h, r, f = cache
        grads = {"V": d_logits.T @ f, "c": d_logits.sum(axis=0)}
        d_f = d_logits @ self.V
        if d_feat_extra is not None:
            d_f = d_f + d_feat_extra
        # through f = h / |h|
        d_h = (d_f - f * np.sum(f * d_f, axis=1, keepdims=True)) / r
        d_u = d_h * (1.0 - h * h)
        grads["W"] = d_u.T @ x
        grads["b"] = d_u.sum(axis=0)
        return grads

    def step(self, grads, lr):
        for name, g in grads.items():
            setattr(self, name, getattr(self, name) - lr * g)

    def copy(self):
        return ToyModel(self.W.copy(), self.b.copy(), self.V.copy(), self.c.copy())


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def combined_loss(model, x, labels, reg, lambda_vmf):
    """Return ``(L_cls, L_vmf, L_total, grads, d_log_kappa_per_class, features)``."""
    logits, cache = model.forward(x)
    l_cls, d_logits = softmax_xent(logits, labels)
    f = cache[3]
    reg.seed_missing(f, labels)
    l_vmf, g_feat, g_kappa = reg.loss_and_grad(f, labels)
    l_total = l_cls + lambda_vmf * l_vmf
    grads = model.backward(cache, d_logits, lambda_vmf * g_feat if lambda_vmf else None)
    g_kappa = {k: lambda_vmf * g for k, g in g_kappa.items()}
    return l_cls, l_vmf, l_total, grads, g_kappa, f


# ----------------------------------------------------------------- metrics


def compactness_metrics(batch):
    """Intra-class mean pairwise cosine and inter-class centroid angles.

    Returns a dict with ``intra_cosine`` (per class), ``mean_intra_cosine``,
    ``min_centroid_angle_deg`` and ``excluded`` (classes with < 2 samples).
    """
    feats, labels = batch.features, batch.labels
    intra = {}
    centroids = {}
    excluded = []
    for k in range(batch.n_classes):
        z = feats[labels == k]
        if z.shape[0] < 2:
            excluded.append(k)
            continue
        s = z.sum(axis=0)
        n = z.shape[0]
        # mean over ordered pairs i != j of z_i . z_j
        intra[k] = float((s @ s - np.sum(z * z)) / (n * (n - 1)))
        centroids[k] = s / np.linalg.norm(s)
    if excluded:
        warnings.warn(f"classes with fewer than 2 samples excluded: {excluded}")
    angles = []
    keys = sorted(centroids)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            cos = float(np.clip(centroids[a] @ centroids[b], -1.0, 1.0))
            angles.append(math.degrees(math.acos(cos)))
    return {
        "intra_cosine": intra,
        "mean_intra_cosine": float(np.mean(list(intra.values()))) if intra else float("nan"),
        "min_centroid_angle_deg": min(angles) if angles else float("nan"),
        "excluded": excluded,
    }


def power_iteration_pca(x, n_components=2, iters=500, tol=1e-13, seed=0):
    """Top principal directions of ``x`` by power iteration with deflation.

    Returns ``(components, eigenvalues, mean)``; components are rows.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(x.shape[0] - 1, 1)
    d = cov.shape[0]
    rng = rng_stream(seed, 0)
    comps, vals = [], []
    scale = max(float(np.trace(cov)), 1e-300)
    for _ in range(n_components):
        v = normalize(rng.standard_normal(d))
        lam = 0.0
        for _ in range(iters):
            w = cov @ v
            for c in comps:
                w -= (c @ w) * c
            nw = np.linalg.norm(w)
            if nw <= 1e-14 * scale:
                lam = 0.0
                break
            w /= nw
            if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
                v = w
                lam = float(v @ cov @ v)
                break
            v = w
            lam = float(v @ cov @ v)
        if lam <= 1e-14 * scale:
            warnings.warn("covariance is rank-deficient; emitting a degenerate axis")
            # any unit vector orthogonal to the found components
            v = rng.standard_normal(d)
            for c in comps:
                v -= (c @ v) * c
            v = normalize(v)
            lam = 0.0
        # sign convention: largest-magnitude entry positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        vals.append(lam)
    return np.array(comps), np.array(vals), mean


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def pca_scatter_export(batch, path_prefix, size=480):
    """Project features onto the top-2 principal axes and write SVG + CSV.

    Writes ``<prefix>.svg`` (one ``<circle>`` per point, colored by class) and
    ``<prefix>.csv`` (``index,label,pc1,pc2``). Returns the ``(n, 2)`` coordinates.
    """
    if batch.n < 3:
        raise ValueError("PCA scatter needs at least 3 points")
    comps, vals, mean = power_iteration_pca(batch.features, 2)
    coords = (batch.features - mean) @ comps.T
    prefix = Path(path_prefix)
    # append rather than with_suffix: prefixes like "run_p0.5" keep their dot
    csv_path = prefix.parent / (prefix.name + ".csv")
    svg_path = prefix.parent / (prefix.name + ".svg")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "pc1", "pc2"])
        for i, (lab, (a, b)) in enumerate(zip(batch.labels, coords)):
            w.writerow([i, int(lab), repr(float(a)), repr(float(b))])
    lo = coords.min(axis=0)
    span = np.maximum(coords.max(axis=0) - lo, 1e-12)
    pad = 20
    px = pad + (coords - lo) / span * (size - 2 * pad)
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
              f'viewBox="0 0 {size} {size}">\n')
    out.write(f'<rect width="{size}" height="{size}" fill="white"/>\n')
    for lab, (a, b) in zip(batch.labels, px):
        color = _PALETTE[int(lab) % len(_PALETTE)]
        out.write(f'<circle cx="{a:.2f}" cy="{size - b:.2f}" r="2.5" fill="{color}" '
                  f'class="pt c{int(lab)}"/>\n')
    out.write("</svg>\n")
    svg_path.write_text(out.getvalue())
    return coords


# ---------------------------------------------------------------- training


@dataclass
class TrainReport:
    config: RunConfig
    epochs: List[Dict[str, float]] = field(default_factory=list)
    steps: List[Dict[str, float]] = field(default_factory=list)
    kappa_trajectory: List[Dict[int, float]] = field(default_factory=list)
    applied: int = 0
    gated: int = 0
    accuracy: Dict[str, float] = field(default_factory=dict)
    compactness: Dict[str, dict] = field(default_factory=dict)
    embeddings: Dict[str, EmbeddingBatch] = field(default_factory=dict, repr=False)

    @property
    def applied_fraction(self):
        return self.applied / self.gated if self.gated else 0.0

    def epochs_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        kcols = sorted({k for row in self.kappa_trajectory for k in row})
        w.writerow(["epoch", "L_cls", "L_vmf", "L_total"] + [f"kappa_{k}" for k in kcols])
        for row, kap in zip(self.epochs, self.kappa_trajectory):
            w.writerow([row["epoch"], repr(row["L_cls"]), repr(row["L_vmf"]), repr(row["L_total"])]
                       + [repr(kap.get(k, float("nan"))) for k in kcols])
        return out.getvalue()

    def steps_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "step", "L_cls", "L_vmf", "L_total"])
        for s in self.steps:
            w.writerow([s["epoch"], s["step"], repr(s["L_cls"]), repr(s["L_vmf"]), repr(s["L_total"])])
        return out.getvalue()

    def summary(self):
        lines = [
            f"epochs: {len(self.epochs)}",
            f"p_aug: {self.config.p_aug}  lambda_vmf: {self.config.lambda_vmf}  seed: {self.config.seed}",
            f"augmentation applied: {self.applied}/{self.gated} ({self.applied_fraction:.4f})",
        ]
        if self.epochs:
            last = self.epochs[-1]
            lines.append(f"final L_cls={last['L_cls']:.6f} L_vmf={last['L_vmf']:.6f} L_total={last['L_total']:.6f}")
        for dom, acc in self.accuracy.items():
            c = self.compactness.get(dom, {})
            lines.append(
                f"{dom}: accuracy={acc:.4f} intra_cosine={c.get('mean_intra_cosine', float('nan')):.4f} "
                f"min_centroid_angle={c.get('min_centroid_angle_deg', float('nan')):.2f}deg"
            )
        if self.kappa_trajectory:
            kap = self.kappa_trajectory[-1]
            lines.append("final kappa: " + ", ".join(f"{k}:{v:.4f}" for k, v in sorted(kap.items())))
        return "\n".join(lines) + "\n"


def _flat(images):
    return images.reshape(images.shape[0], -1)


def train(config, spec=DEFAULT_SPEC, data=None):
    """Train the toy model under ``config``; deterministic in ``config.seed``.

    ``data`` may carry a precomputed :func:`synth_dataset` result for ``spec``
    and ``config.seed``.
    """
    seed = config.seed
    if data is None:
        data = synth_dataset(spec, seed)
    src_x, src_y = data["source"]
    n, H, W, C = src_x.shape
    K = spec.n_classes
    policy = AugPolicy(config.p_aug, parse_sampler(config.sampler), seed)

    # spectra of the source set are fixed; cache them for content and style use
    src_amp, src_phase = decompose(fft2d(src_x))
    src_phasor = np.exp(1j * src_phase)

    model = ToyModel.init(H * W * C, config.feature_dim, K, rng_stream(seed, STREAM_INIT))
    reg = VmfRegularizer(config.feature_dim, config.kappa_init, config.ema_momentum)
    report = TrainReport(config)
    bs = max(1, config.batch_size)

    for epoch in range(config.epochs):
        order = rng_stream(seed, (STREAM_SHUFFLE, epoch)).permutation(n)
        records = plan_policy(n, n, policy, key=(STREAM_AUG, epoch))
        report.gated += n
        sums = np.zeros(2)
        n_steps = 0
        for step, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            recs = records[start:start + bs]
            xb = src_x[idx].copy()
            yb = src_y[idx]
            sel = [j for j, r in enumerate(recs) if r.applied]
            if sel:
                report.applied += len(sel)
                content = idx[sel]
                style = np.array([recs[j].style_index for j in sel])
                lams = np.array([recs[j].lam for j in sel])
                xb[sel] = mix_from_spectra(src_amp[content], src_phasor[content], src_amp[style], lams)
            l_cls, l_vmf, l_total, grads, g_kappa, feats = combined_loss(
                model, _flat(xb), yb, reg, config.lambda_vmf)
            if not math.isfinite(l_total):
                raise NumericalError(f"non-finite L_total at epoch {epoch}, step {step}")
            report.steps.append({"epoch": epoch, "step": step, "L_cls": l_cls, "L_vmf": l_vmf, "L_total": l_total})
            model.step(grads, config.lr)
            reg.kappa_step(g_kappa, config.lr)
            reg.ema_step(feats, yb)
            sums += (l_cls, l_vmf)
            n_steps += 1
        e_cls, e_vmf = sums / n_steps
        report.epochs.append({"epoch": epoch, "L_cls": float(e_cls), "L_vmf": float(e_vmf),
                              "L_total": float(e_cls) + config.lambda_vmf * float(e_vmf)})
        report.kappa_trajectory.append(reg.kappas())

    for name, (x, y) in data.items():
        logits, cache = model.forward(_flat(x))
        report.accuracy[name] = float(np.mean(np.argmax(logits, axis=1) == y))
        emb = EmbeddingBatch(cache[3], y, K, check_unit=False)
        report.embeddings[name] = emb
        report.compactness[name] = compactness_metrics(emb)
    report.model = model
    report.prototypes = dict(reg.params)
    return report


# ---------------------------------------------------------------- ablation

# (name, p_aug, vMF enabled)
ABLATION_ROWS = (
    ("baseline", 0.0, False),
    ("pfa_p1.0", 1.0, False),
    ("pfa_p1.0+vmf", 1.0, True),
    ("pfa_p0.5+vmf", 0.5, True),
)


@dataclass
class AblationRow:
    name: str
    p_aug: float
    lambda_vmf: float
    reports: List[TrainReport]

    def stat(self, getter):
        vals = np.array([getter(r) for r in self.reports])
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    def summary(self):
        out = {"row": self.name, "p_aug": self.p_aug, "lambda_vmf": self.lambda_vmf, "seeds": len(self.reports)}
        for key, getter in (
            ("shifted_acc", lambda r: r.accuracy["shifted"]),
            ("source_acc", lambda r: r.accuracy["source"]),
            ("shifted_intra_cos", lambda r: r.compactness["shifted"]["mean_intra_cosine"]),
            ("source_intra_cos", lambda r: r.compactness["source"]["mean_intra_cosine"]),
            ("shifted_min_angle", lambda r: r.compactness["shifted"]["min_centroid_angle_deg"]),
            ("applied_fraction", lambda r: r.applied_fraction),
        ):
            m, s = self.stat(getter)
            out[key + "_mean"] = m
            out[key + "_sd"] = s
        return out


def ablation_matrix(base, spec=DEFAULT_SPEC, seeds=5):
    """Run the four ablation configurations over ``seeds`` consecutive seeds.

    Seeds are ``base.seed, base.seed + 1, ...``; the vMF rows use
    ``base.lambda_vmf``. Datasets are shared across rows of the same seed.
    """
    if seeds < 1:
        raise ValueError("need at least one seed")
    rows = [AblationRow(name, p, base.lambda_vmf if vmf_on else 0.0, []) for name, p, vmf_on in ABLATION_ROWS]
    for s in range(seeds):
        seed = base.seed + s
        data = synth_dataset(spec, seed)
        for row in rows:
            cfg = base.replace(seed=seed, p_aug=row.p_aug, lambda_vmf=row.lambda_vmf)
            log.info("ablation %s seed %d", row.name, seed)
            row.reports.append(train(cfg, spec, data))
    return rows


def ablation_csv(rows):
    summaries = [r.summary() for r in rows]
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=list(summaries[0]), lineterminator="\n")
    w.writeheader()
    for s in summaries:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in s.items()})
    return out.getvalue()


def spec_as_dict(spec):
    return asdict(spec)
