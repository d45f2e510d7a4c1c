"""
File formats, run configuration and seeded random streams.

Formats
-------
PPM/PGM
    Binary ``P6`` (RGB) and ``P5`` (gray), maxval up to 65535. PNG is read and
    written through Pillow when it is installed.
EMB1
    ``b"EMB1"``, then little-endian u32 ``n``, ``d``, ``K``, then ``n*d``
    float32 values (row-major), then ``n`` u32 labels.
Config
    Flat ``key = value`` text, one entry per line, ``#`` starts a comment.
"""

import dataclasses
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataFormatError, ShapeError

__all__ = [
    "rng_stream",
    "counter_uniform",
    "load_image",
    "save_image",
    "decode_pnm",
    "encode_pnm",
    "EmbFile",
    "read_emb",
    "write_emb",
    "encode_emb",
    "decode_emb",
    "semantic_shift",
    "RunConfig",
    "IMAGE_SUFFIXES",
]

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png")
EMB_MAGIC = b"EMB1"


def rng_stream(seed, stream_id=0):
    """Independent, reproducible generator for ``(seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints; streams are split with
    :class:`numpy.random.SeedSequence` spawn keys.
    """
    key = tuple(int(s) for s in stream_id) if isinstance(stream_id, (tuple, list)) else (int(stream_id),)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x):
    x = (x + _GOLDEN).astype(np.uint64)
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)).astype(np.uint64)
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)).astype(np.uint64)
    return x ^ (x >> np.uint64(31))


def counter_uniform(seed, stream_id, counters, draw=0):
    """Counter-based U[0, 1) variates, one per entry of ``counters``.

    Value ``i`` depends only on ``(seed, stream_id, counters[i], draw)``, so
    per-element substreams can be evaluated for a whole batch at once and in
    any order. Mixing is SplitMix64; the top 53 bits form the double.
    """
    key = tuple(int(s) for s in stream_id) if isinstance(stream_id, (tuple, list)) else (int(stream_id),)
    with np.errstate(over="ignore"):
        h = _splitmix64(np.array([int(seed) & _M64], dtype=np.uint64))
        for k in key:
            h = _splitmix64(h ^ np.uint64(k & _M64))
        c = np.asarray(counters, dtype=np.uint64)
        x = _splitmix64(_splitmix64(h ^ c) ^ np.uint64(int(draw) & _M64))
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


# --------------------------------------------------------------------- PNM


def _pnm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens; return (tokens, offset)."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise DataFormatError("truncated PNM header", pos)
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append((data[start:pos], start))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise DataFormatError("missing whitespace after PNM header", pos)
    return tokens, pos + 1


def decode_pnm(data):
    """Decode binary PPM (P6) or PGM (P5) bytes to an ``(H, W, C)`` array in [0, 1]."""
    data = bytes(data)
    if len(data) < 2:
        raise DataFormatError("truncated PNM magic", len(data))
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise DataFormatError(f"unsupported magic {magic!r}", 0)
    channels = 3 if magic == b"P6" else 1
    tokens, offset = _pnm_tokens(data, 4)
    vals = []
    for tok, pos in tokens[1:]:
        if not tok.isdigit():
            raise DataFormatError(f"expected an integer, got {tok!r}", pos)
        vals.append(int(tok))
    width, height, maxval = vals
    if width <= 0 or height <= 0:
        raise DataFormatError("zero image dimension", tokens[1][1])
    if not 0 < maxval < 65536:
        raise DataFormatError(f"maxval {maxval} out of range", tokens[3][1])
    bpp = 1 if maxval < 256 else 2
    expected = width * height * channels * bpp
    actual = len(data) - offset
    if actual < expected:
        raise DataFormatError(f"pixel data truncated: need {expected} bytes, have {actual}", len(data))
    if actual > expected:
        raise DataFormatError(f"{actual - expected} trailing bytes after pixel data", offset + expected)
    dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=width * height * channels, offset=offset)
    return raw.reshape(height, width, channels).astype(np.float64) / maxval


def encode_pnm(image):
    """Encode an ``(H, W)``/``(H, W, 1)``/``(H, W, 3)`` array in [0, 1] as 8-bit P5/P6."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ShapeError(f"cannot encode image of shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError("image contains non-finite values")
    q = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if x.shape[2] == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, x.shape[1], x.shape[0])
    return header + q.tobytes()


def load_image(path):
    """Load a PPM/PGM (or PNG, via Pillow) file as a float ``(H, W, C)`` array."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise DataFormatError("PNG support needs Pillow") from exc
        try:
            with Image.open(path) as im:
                mode = "L" if im.mode in ("1", "L", "I", "I;16") else "RGB"
                arr = np.asarray(im.convert(mode), dtype=np.float64) / 255.0
        except OSError as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
        return arr[..., None] if arr.ndim == 2 else arr
    try:
        return decode_pnm(path.read_bytes())
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_image(image, path):
    """Write an image; format follows the suffix (``.png`` or PNM otherwise)."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        x = np.asarray(image, dtype=np.float64)
        q = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
        if q.ndim == 3 and q.shape[2] == 1:
            q = q[..., 0]
        Image.fromarray(q).save(path, format="PNG")
        return
    path.write_bytes(encode_pnm(image))


# -------------------------------------------------------------------- EMB1


class EmbFile(NamedTuple):
    features: np.ndarray
    labels: np.ndarray
    n_classes: int


def encode_emb(features, labels=None, n_classes=None):
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n, d = feats.shape
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"need {n} labels, got shape {labels.shape}")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if n else 0
    if n and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeError("labels out of range")
    return (
        EMB_MAGIC
        + struct.pack("<III", n, d, n_classes)
        + feats.astype("<f4").tobytes()
        + labels.astype("<u4").tobytes()
    )


def decode_emb(data):
    data = bytes(data)
    if len(data) < 4 or data[:4] != EMB_MAGIC:
        raise DataFormatError("missing EMB1 magic", 0)
    if len(data) < 16:
        raise DataFormatError("truncated EMB1 header", len(data))
    n, d, k = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * n * d + 4 * n
    if len(data) != expected:
        raise DataFormatError(
            f"EMB1 declares n={n}, d={d} ({expected} bytes) but file has {len(data)} bytes",
            min(len(data), expected),
        )
    feats = np.frombuffer(data, dtype="<f4", count=n * d, offset=16).astype(np.float64).reshape(n, d)
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=16 + 4 * n * d).astype(np.int64)
    if n and labels.max() >= k:
        raise DataFormatError(f"label {labels.max()} >= K={k}", 16 + 4 * n * d + 4 * int(np.argmax(labels)))
    if not np.all(np.isfinite(feats)):
        raise DataFormatError("non-finite feature value", 16)
    return EmbFile(feats, labels, int(k))


def write_emb(path, features, labels=None, n_classes=None):
    Path(path).write_bytes(encode_emb(features, labels, n_classes))


def read_emb(path):
    try:
        return decode_emb(Path(path).read_bytes())
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def semantic_shift(q_source, q_target):
    """Difference ``q_target - q_source`` of two text embeddings."""
    qs = np.asarray(q_source, dtype=np.float64)
    qt = np.asarray(q_target, dtype=np.float64)
    if qs.shape != qt.shape:
        raise ShapeError(f"embedding dims differ: {qs.shape} vs {qt.shape}")
    return qt - qs


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class RunConfig:
    """Training / augmentation settings; defaults are the reference values."""

    p_aug: float = 0.5
    sampler: str = "uniform:0.0,1.0"
    lambda_vmf: float = 0.005
    ema_momentum: float = 0.99
    kappa_init: float = 10.0
    seed: int = 0
    feature_dim: int = 16
    image_height: int = 24
    image_width: int = 24
    n_classes: int = 4
    samples_per_class: int = 200
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.05
    input: str = ""
    styles: str = ""
    output: str = ""

    def __post_init__(self):
        from .augment import parse_sampler

        parse_sampler(self.sampler)
        if not 0.0 <= self.p_aug <= 1.0:
            raise ValueError(f"p_aug must lie in [0, 1], got {self.p_aug}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError(f"ema_momentum must lie in [0, 1], got {self.ema_momentum}")
        if self.lambda_vmf < 0:
            raise ValueError("lambda_vmf must be nonnegative")
        if not self.kappa_init > 0:
            raise ValueError("kappa_init must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text, base=None):
        """Parse config text; keys not present keep the values from ``base``."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep:
                raise DataFormatError(f"line {lineno}: expected 'key = value'")
            if key not in types:
                raise DataFormatError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], val.strip(), lineno)
        base = base or cls()
        return dataclasses.replace(base, **values)

    @classmethod
    def load(cls, path, base=None):
        return cls.parse(Path(path).read_text(), base)

    def save(self, path):
        Path(path).write_text(self.to_text())


def _coerce(typ, text, lineno):
    try:
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float"):
            return float(text)
    except ValueError as exc:
        raise DataFormatError(f"line {lineno}: bad value {text!r}") from exc
    return text
