"""Command-line entry point: ``fouriervmf <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Data goes to files; logs go to standard error.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import harness
from .augment import AugPolicy, StylePool, apply_policy, parse_sampler
from .dataio import (
    IMAGE_SUFFIXES,
    RunConfig,
    load_image,
    read_emb,
    rng_stream,
    save_image,
    semantic_shift,
    write_emb,
)
from .errors import DataFormatError, NumericalError, ShapeError
from .spectral import decompose, fft2d, ifft2d
from .vmf import KAPPA_MAX, EmbeddingBatch, fit, normalize, sample

log = logging.getLogger("fouriervmf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_CONFIG_HELP = {
    "p_aug": "per-image augmentation probability",
    "sampler": "interpolation-weight sampler: uniform:LO,HI | beta:ALPHA | fixed:LAMBDA",
    "lambda_vmf": "weight of the vMF loss term",
    "ema_momentum": "EMA momentum of the class prototypes",
    "kappa_init": "initial concentration per class",
    "seed": "random seed (unsigned 64-bit)",
    "feature_dim": "feature dimension of the toy model",
    "image_height": "synthetic image height",
    "image_width": "synthetic image width",
    "n_classes": "number of synthetic classes",
    "samples_per_class": "synthetic samples per class and domain",
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "lr": "SGD step size",
    "input": "input directory or file",
    "styles": "style image directory (defaults to the input directory)",
    "output": "output directory",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p, keys):
    defaults = RunConfig()
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", metavar="FILE", help="key = value config file (default: none)")
    for f in fields(RunConfig):
        if f.name not in keys:
            continue
        flag = "--out" if f.name == "output" else "--" + f.name.replace("_", "-")
        typ = {int: int, float: float}.get(f.type, str) if not isinstance(f.type, str) else \
            {"int": int, "float": float}.get(f.type, str)
        default = getattr(defaults, f.name)
        shown = default if default != "" else "none"
        names = [flag, "--output"] if f.name == "output" else [flag]
        g.add_argument(*names, dest=f.name, type=typ, default=None,
                       help=f"{_CONFIG_HELP[f.name]} (default: {shown})")


def _config_from(args, keys):
    base = RunConfig()
    try:
        if getattr(args, "config", None):
            base = RunConfig.load(args.config)
        overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
        return base.replace(**overrides)
    except (ValueError, DataFormatError) as exc:
        raise UsageError(str(exc)) from exc


def _list_images(directory):
    d = Path(directory)
    if not d.is_dir():
        raise DataFormatError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _file_error(path, exc):
    msg = str(exc)
    return msg if msg.startswith(str(path)) else f"{path}: {msg}"


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------ subcommands

AUGMENT_KEYS = ("p_aug", "sampler", "seed", "input", "styles", "output")


def cmd_augment(args):
    cfg = _config_from(args, AUGMENT_KEYS)
    if not cfg.input or not cfg.output:
        raise UsageError("--input and --out are required")
    files = _list_images(cfg.input)
    if not files:
        raise DataFormatError(f"no images found in {cfg.input}")
    style_files = _list_images(cfg.styles) if cfg.styles else files
    errors = []
    styles = []
    for p in style_files:
        try:
            styles.append(load_image(p))
        except (DataFormatError, OSError) as exc:
            errors.append(_file_error(p, exc))
    if not styles:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        raise DataFormatError("no readable style images")
    pool = StylePool(styles)
    policy = AugPolicy(cfg.p_aug, parse_sampler(cfg.sampler), cfg.seed)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, p in enumerate(files):
        try:
            img = load_image(p)
            # per-file counter keeps results independent of processing order
            (res,), (rec,) = apply_policy([img], pool, policy, key=(0,), start_index=i)
        except (DataFormatError, ShapeError, OSError) as exc:
            errors.append(_file_error(p, exc))
            continue
        save_image(res, out_dir / p.name)
        d = rec.as_dict()
        d["index"] = i
        d["file"] = p.name
        lines.append(json.dumps(d, sort_keys=True))
    (out_dir / "records.jsonl").write_text("".join(line + "\n" for line in lines))
    applied = sum(json.loads(line)["applied"] for line in lines)
    log.info("augmented %d/%d images", applied, len(lines))
    if errors:
        for e in dict.fromkeys(errors):
            print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_spectrum(args):
    img = load_image(args.input)
    spec = fft2d(img)
    amp, phase = decompose(spec)
    prefix = str(args.out)
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    H, W, C = img.shape
    for c in range(C):
        la = np.log1p(amp[..., c])
        top = la.max()
        save_image(la / top if top > 0 else la, f"{prefix}_logamp_c{c}.pgm")
        save_image((phase[..., c] + np.pi) / (2 * np.pi), f"{prefix}_phase_c{c}.pgm")
    u, v, c = np.meshgrid(np.arange(H), np.arange(W), np.arange(C), indexing="ij")
    rows = ["channel,u,v,re,im,amplitude,phase"]
    for cc, uu, vv, z, a, ph in zip(c.ravel(), u.ravel(), v.ravel(), spec.ravel(), amp.ravel(), phase.ravel()):
        rows.append(f"{cc},{uu},{vv},{z.real!r},{z.imag!r},{a!r},{ph!r}")
    Path(f"{prefix}_spectrum.csv").write_text("\n".join(rows) + "\n")
    if args.verify:
        err = float(np.max(np.abs(ifft2d(spec) - img)))
        print(f"round-trip max abs error: {err:.3e}", file=sys.stderr)
        if err > 1e-9:
            return EXIT_NUMERIC
    return EXIT_OK


def cmd_vmf_fit(args):
    emb = read_emb(args.input)
    batch = EmbeddingBatch(emb.features, emb.labels, emb.n_classes)
    out = {"dim": batch.dim, "n": batch.n, "classes": {}}
    for k in range(batch.n_classes):
        z = batch.of_class(k)
        if z.shape[0] < 2:
            log.warning("class %d has %d samples; skipped", k, z.shape[0])
            continue
        mu, kappa = fit(z, args.kappa_max)
        out["classes"][str(k)] = {"n": int(z.shape[0]), "kappa": kappa, "mu": mu.tolist()}
    _write_json(args.out, out)
    return EXIT_OK


def cmd_vmf_sample(args):
    if args.mu:
        try:
            mu = np.array([float(t) for t in args.mu.split(",")])
        except ValueError as exc:
            raise UsageError(f"bad --mu: {args.mu}") from exc
        if args.dim is not None and mu.size != args.dim:
            raise UsageError("--mu length does not match --dim")
    else:
        if args.dim is None:
            raise UsageError("give --dim or --mu")
        mu = np.zeros(args.dim)
        mu[0] = 1.0
    if mu.size < 2 or not np.linalg.norm(mu) > 0:
        raise UsageError("mean direction needs dim >= 2 and nonzero norm")
    if not args.kappa > 0 or args.n < 1:
        raise UsageError("--kappa must be positive and --n at least 1")
    z = sample(normalize(mu), args.kappa, args.n, rng_stream(args.seed, 0))
    write_emb(args.out, z, np.zeros(args.n, dtype=np.int64), 1)
    return EXIT_OK


TRAIN_KEYS = tuple(f.name for f in fields(RunConfig) if f.name not in ("input", "styles"))


def _spec_for(cfg):
    d = harness.DEFAULT_SPEC
    return harness.SynthSpec(cfg.n_classes, cfg.samples_per_class, cfg.image_height, cfg.image_width,
                             d.source, d.shifted)


def cmd_demo_train(args):
    cfg = _config_from(args, TRAIN_KEYS)
    if not cfg.output:
        raise UsageError("--out is required")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    report = harness.train(cfg, _spec_for(cfg))
    cfg.save(out / "config.txt")
    (out / "epochs.csv").write_text(report.epochs_csv())
    (out / "steps.csv").write_text(report.steps_csv())
    (out / "summary.txt").write_text(report.summary())
    for name, emb in report.embeddings.items():
        write_emb(out / f"embeddings_{name}.emb", emb.features, emb.labels, emb.n_classes)
    harness.pca_scatter_export(report.embeddings["shifted"], out / "scatter_shifted")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _config_from(args, TRAIN_KEYS)
    if not cfg.output:
        raise UsageError("--out is required")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = harness.ablation_matrix(cfg, _spec_for(cfg), args.seeds)
    (out / "ablation.csv").write_text(harness.ablation_csv(rows))
    cells = ["row,seed,shifted_acc,source_acc,shifted_intra_cos,applied_fraction"]
    for r in rows:
        for rep in r.reports:
            cells.append(f"{r.name},{rep.config.seed},{rep.accuracy['shifted']!r},{rep.accuracy['source']!r},"
                         f"{rep.compactness['shifted']['mean_intra_cosine']!r},{rep.applied_fraction!r}")
    (out / "ablation_cells.csv").write_text("\n".join(cells) + "\n")
    return EXIT_OK


def cmd_metrics(args):
    emb = read_emb(args.input)
    batch = EmbeddingBatch(emb.features, emb.labels, emb.n_classes)
    m = harness.compactness_metrics(batch)
    m["intra_cosine"] = {str(k): v for k, v in m["intra_cosine"].items()}
    _write_json(args.out, m)
    if args.scatter:
        harness.pca_scatter_export(batch, args.scatter)
    return EXIT_OK


def cmd_semantic_shift(args):
    src = read_emb(args.source)
    tgt = read_emb(args.target)
    if src.features.shape != tgt.features.shape:
        raise ShapeError(f"embedding shapes differ: {src.features.shape} vs {tgt.features.shape}")
    delta = semantic_shift(src.features, tgt.features)
    write_emb(args.out, delta, src.labels, src.n_classes)
    norms = np.linalg.norm(delta, axis=1)
    log.info("shift norms: min %.6g max %.6g over %d rows", norms.min(), norms.max(), norms.size)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="fouriervmf", description="Fourier amplitude-mix augmentation and vMF feature tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    a = sub.add_parser("augment", help="probabilistic amplitude-mix augmentation of an image directory")
    _add_config_flags(a, AUGMENT_KEYS)
    a.set_defaults(func=cmd_augment)

    s = sub.add_parser("spectrum", help="write log-amplitude / phase images and raw CSV of one image")
    s.add_argument("--input", required=True, help="input image (PPM/PGM/PNG)")
    s.add_argument("--out", required=True, help="output path prefix")
    s.add_argument("--verify", action="store_true",
                   help="exit 3 unless the inverse transform reproduces the image within 1e-9 (default: off)")
    s.set_defaults(func=cmd_spectrum)

    f = sub.add_parser("vmf-fit", help="fit mean direction and concentration per class of an EMB1 file")
    f.add_argument("--input", required=True, help="EMB1 embedding file")
    f.add_argument("--out", required=True, help="output JSON file")
    f.add_argument("--kappa-max", type=float, default=KAPPA_MAX, help=f"concentration cap (default: {KAPPA_MAX:g})")
    f.set_defaults(func=cmd_vmf_fit)

    v = sub.add_parser("vmf-sample", help="draw vMF samples into an EMB1 file")
    v.add_argument("--dim", type=int, default=None, help="dimension; mean direction e_1 (default: taken from --mu)")
    v.add_argument("--mu", default=None, help="comma-separated mean direction, normalized (default: e_1)")
    v.add_argument("--kappa", type=float, default=RunConfig().kappa_init,
                   help=f"concentration (default: {RunConfig().kappa_init})")
    v.add_argument("--n", type=int, default=1000, help="number of samples (default: 1000)")
    v.add_argument("--seed", type=int, default=RunConfig().seed, help="random seed (default: 0)")
    v.add_argument("--out", required=True, help="output EMB1 file")
    v.set_defaults(func=cmd_vmf_sample)

    t = sub.add_parser("demo-train", help="train the toy model on the synthetic two-domain task")
    _add_config_flags(t, TRAIN_KEYS)
    t.set_defaults(func=cmd_demo_train)

    b = sub.add_parser("ablate", help="four-row ablation (baseline, p=1, p=1+vMF, p=0.5+vMF) over seeds")
    _add_config_flags(b, TRAIN_KEYS)
    b.add_argument("--seeds", type=int, default=5, help="number of seeds per row (default: 5)")
    b.set_defaults(func=cmd_ablate)

    m = sub.add_parser("metrics", help="intra-class cosine and centroid angles of an EMB1 file")
    m.add_argument("--input", required=True, help="EMB1 embedding file")
    m.add_argument("--out", required=True, help="output JSON file")
    m.add_argument("--scatter", default=None, help="also write PCA scatter PREFIX.svg/.csv (default: none)")
    m.set_defaults(func=cmd_metrics)

    q = sub.add_parser("semantic-shift", help="difference of two precomputed text embeddings (EMB1)")
    q.add_argument("--source", required=True, help="source-domain embedding (EMB1)")
    q.add_argument("--target", required=True, help="target-domain embedding (EMB1)")
    q.add_argument("--out", required=True, help="output EMB1 file with target - source")
    q.set_defaults(func=cmd_semantic_shift)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, ShapeError, KeyError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
