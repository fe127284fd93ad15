"""Synthetic thin-crack datasets at a controlled foreground:background ratio.

Each image is a striped, noisy gray background with one or more dark
random-walk polylines. The mask marks the polyline pixels. The number of crack
pixels per image is budgeted from ``target_ratio`` so the aggregate ratio over
a split lands close to ``1 : target_ratio``.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
import logging
import math

import numpy as np

from .validation import check_mask

logger = logging.getLogger(__name__)

# imbalance levels of the reference datasets, as background pixels per foreground pixel
IMBALANCE_LEVELS = (25, 113, 191, 333, 584, 2228)
RATIO_TOLERANCE = 0.25
MAX_RATIO = 1e12

_SPLIT_IDS = {"train": 0, "val": 1}


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 32
    n_val: int = 16
    width: int = 64
    height: int = 64
    target_ratio: float = 191.0
    crack_thickness: int = 1
    crack_count_range: tuple = (1, 2)
    noise_sigma: float = 0.04
    texture_period: int = 16
    contrast_range: tuple = (0.12, 0.22)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "crack_count_range", tuple(int(v) for v in self.crack_count_range))
        object.__setattr__(self, "contrast_range", tuple(float(v) for v in self.contrast_range))
        if self.n_train < 1 or self.n_val < 1:
            raise ValueError("n_train and n_val must be >= 1")
        if self.width < 16 or self.height < 16:
            raise ValueError("width and height must be >= 16")
        if not self.target_ratio > 0:
            raise ValueError("target_ratio must be > 0")
        if self.crack_thickness not in (1, 2):
            raise ValueError("crack_thickness must be 1 or 2")
        lo, hi = self.crack_count_range
        if not 1 <= lo <= hi:
            raise ValueError("crack_count_range must satisfy 1 <= min <= max")
        if self.noise_sigma < 0 or self.texture_period < 2:
            raise ValueError("noise_sigma must be >= 0 and texture_period >= 2")
        c_lo, c_hi = self.contrast_range
        if not 0 < c_lo <= c_hi < 1:
            raise ValueError("contrast_range must satisfy 0 < min <= max < 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def foreground_per_image(self):
        return self.width * self.height / (self.target_ratio + 1.0)


@dataclass
class SamplePair:
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.mask = check_mask(self.mask)
        if self.image.shape != self.mask.shape or self.image.ndim != 2:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ")


@dataclass
class Dataset:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    spec: DatasetSpec = None

    @staticmethod
    def stack(pairs):
        X = np.stack([p.image for p in pairs])
        y = np.stack([p.mask for p in pairs])
        return X, y


def _sample_rng(spec, split, index):
    return np.random.default_rng([spec.seed, _SPLIT_IDS[split], index])


def _background(rng, spec):
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    phase = rng.uniform(0, 2 * math.pi)
    base = rng.uniform(0.45, 0.65)
    # busbar-like bands, mostly horizontal, occasionally vertical
    coord = rows if rng.random() < 0.7 else cols
    stripes = 0.03 * np.sin(2 * math.pi * coord / spec.texture_period + phase)
    img = base + stripes + np.zeros((h, w))
    return img + rng.normal(0.0, spec.noise_sigma, size=(h, w))


def _stamp(mask, r, c, thickness):
    """Set a thickness x thickness block; return how many pixels were new."""
    h, w = mask.shape
    added = 0
    for dr in range(thickness):
        for dc in range(thickness):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not mask[rr, cc]:
                mask[rr, cc] = 1
                added += 1
    return added


def _draw_cracks(rng, spec, budget):
    """Random-walk polylines until ``budget`` mask pixels are set."""
    h, w = spec.height, spec.width
    mask = np.zeros((h, w), dtype=np.int8)
    n_lines = int(rng.integers(spec.crack_count_range[0], spec.crack_count_range[1] + 1))
    n_lines = max(1, min(n_lines, budget))
    per_line = np.full(n_lines, budget // n_lines)
    per_line[: budget % n_lines] += 1
    max_turn = math.pi / 6
    target = 0
    count = 0
    for quota in per_line:
        target += int(quota)
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        heading = rng.uniform(0, 2 * math.pi)
        steps = 0
        limit = 50 * (h * w)
        while count < target and steps < limit:
            count += _stamp(mask, int(y), int(x), spec.crack_thickness)
            if count >= target:
                break
            heading += rng.uniform(-max_turn, max_turn)
            ny, nx = y + math.sin(heading), x + math.cos(heading)
            if not (0 <= ny < h and 0 <= nx < w):
                heading += math.pi
                ny, nx = y + math.sin(heading), x + math.cos(heading)
                ny = min(max(ny, 0.0), h - 1e-6)
                nx = min(max(nx, 0.0), w - 1e-6)
            y, x = ny, nx
            steps += 1
    return mask


def generate_sample(spec, split="train", index=0):
    rng = _sample_rng(spec, split, index)
    mean = spec.foreground_per_image
    # per-image budget varies, aggregate stays on target
    budget = max(1, int(round(mean * rng.uniform(0.5, 1.5))))
    if budget > 0.75 * spec.width * spec.height:
        raise ValueError(
            f"target_ratio {spec.target_ratio} needs {budget} crack pixels in a "
            f"{spec.width}x{spec.height} image; unreachable"
        )
    img = _background(rng, spec)
    mask = _draw_cracks(rng, spec, budget)
    if mask.sum() < budget:
        raise ValueError(
            f"could not place {budget} crack pixels in sample {split}/{index} "
            f"(placed {int(mask.sum())})"
        )
    contrast = rng.uniform(*spec.contrast_range)
    img = np.where(mask == 1, img - contrast, img)
    return SamplePair(np.clip(img, 0.0, 1.0), mask)


def generate_dataset(spec):
    """Train and validation splits, a pure function of ``spec`` (seed included)."""
    train = [generate_sample(spec, "train", i) for i in range(spec.n_train)]
    val = [generate_sample(spec, "val", i) for i in range(spec.n_val)]
    ds = Dataset(train, val, spec)
    for name, split in (("train", train), ("val", val)):
        ratio = measure_input_imbalance(split)
        achieved = 1.0 / ratio
        if abs(achieved - spec.target_ratio) > RATIO_TOLERANCE * spec.target_ratio:
            raise ValueError(
                f"{name} split reached 1:{achieved:.1f}, outside ±25% of 1:{spec.target_ratio}"
            )
    return ds


def measure_input_imbalance(pairs):
    """Foreground pixels / background pixels pooled over ``pairs``.

    Accepts a list of ``SamplePair`` or an array of masks.
    """
    if isinstance(pairs, np.ndarray):
        masks = [pairs]
    else:
        masks = [p.mask if isinstance(p, SamplePair) else np.asarray(p) for p in pairs]
    if len(masks) == 0:
        raise ValueError("empty dataset")
    fg = sum(int(np.count_nonzero(m)) for m in masks)
    total = sum(int(np.size(m)) for m in masks)
    bg = total - fg
    if bg == 0:
        logger.warning("dataset has no background pixels; returning %g", MAX_RATIO)
        return MAX_RATIO
    return fg / bg


# --------------------------------------------------------------------------
# on-disk format: binary PGM (P5, maxval 255)


class PGMError(ValueError):
    pass


def write_pgm(path, data):
    data = np.asarray(data)
    if data.ndim != 2:
        raise PGMError("PGM data must be 2-D")
    if data.dtype != np.uint8:
        if data.min() < 0 or data.max() > 255:
            raise PGMError("PGM values must be within 0..255")
        data = data.astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(data).tobytes())


def _header_tokens(buf):
    """Parse the three header integers after the magic, skipping comments."""
    tokens = []
    i = 2
    n = len(buf)
    while len(tokens) < 3:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise PGMError("truncated PGM header")
        tok = buf[start:i]
        if not tok.isdigit():
            raise PGMError(f"malformed PGM header token {tok!r}")
        tokens.append(int(tok))
    # exactly one whitespace byte separates maxval from the raster
    if i >= n or not buf[i : i + 1].isspace():
        raise PGMError("truncated PGM header")
    return tokens, i + 1


def read_pgm(path):
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {buf[:2]!r})")
    (w, h, maxval), offset = _header_tokens(buf)
    if w < 1 or h < 1:
        raise PGMError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise PGMError(f"{path}: maxval must be 255, got {maxval}")
    expected = w * h
    got = len(buf) - offset
    if got < expected:
        raise PGMError(f"{path}: expected {expected} raster bytes, found {got}")
    return np.frombuffer(buf, dtype=np.uint8, count=expected, offset=offset).reshape(h, w).copy()


def image_to_bytes(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_pair(stem, pair):
    """Write ``<stem>_img.pgm`` and ``<stem>_mask.pgm``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(f"{stem}_img.pgm", image_to_bytes(pair.image))
    write_pgm(f"{stem}_mask.pgm", pair.mask.astype(np.uint8) * 255)


def load_pair(stem):
    stem = Path(stem)
    img = read_pgm(f"{stem}_img.pgm")
    mask = read_pgm(f"{stem}_mask.pgm")
    if img.shape != mask.shape:
        raise PGMError(f"{stem}: image {img.shape} and mask {mask.shape} differ")
    bad = ~np.isin(mask, (0, 255))
    if bad.any():
        raise PGMError(f"{stem}_mask.pgm: non-binary value {int(mask[bad][0])}")
    return SamplePair(img.astype(np.float64) / 255.0, (mask == 255).astype(np.int8))


# --------------------------------------------------------------------------
# manifest: "key = value" header lines then "split stem" lines


def save_dataset(directory, ds):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["# dibe synthetic dataset manifest"]
    if ds.spec is not None:
        for k, v in asdict(ds.spec).items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
    for split, pairs in (("train", ds.train), ("val", ds.val)):
        for i, pair in enumerate(pairs):
            stem = f"{split}_{i:05d}"
            save_pair(directory / stem, pair)
            lines.append(f"{split} {stem}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory / "manifest.txt"


def load_dataset(directory):
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(manifest)
    ds = Dataset()
    params = {}
    for lineno, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            params[k] = v
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in _SPLIT_IDS:
            raise ValueError(f"{manifest}:{lineno}: expected '<train|val> <stem>'")
        getattr(ds, parts[0]).append(load_pair(directory / parts[1]))
    if params:
        ds.spec = _spec_from_strings(params)
    return ds


def _spec_from_strings(params):
    types = {f: t for f, t in DatasetSpec.__annotations__.items()}
    kwargs = {}
    for k, v in params.items():
        if k not in types:
            raise ValueError(f"unknown manifest key {k!r}")
        t = types[k]
        if t is tuple:
            kwargs[k] = tuple(float(x) for x in v.split(","))
        elif t is int:
            kwargs[k] = int(v)
        else:
            kwargs[k] = float(v)
    return DatasetSpec(**kwargs)
