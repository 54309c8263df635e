"""Manifest-driven dataset loading and a synthetic curvilinear-structure generator.

Manifest format: one record per line, tab separated
``image_path  mask_path  split  domain_id``.  Relative paths resolve against
the manifest's directory; blank lines and lines starting with ``#`` are skipped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

SPLITS = ("train", "val", "test")


class DatasetError(RuntimeError):
    pass


@dataclass
class Record:
    image_path: str
    mask_path: str
    split: str
    domain_id: str


def read_manifest(path) -> list[Record]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DatasetError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
        if fields[2] not in SPLITS:
            raise DatasetError(f"{path}:{lineno}: unknown split {fields[2]!r}")
        records.append(Record(*fields))
    return records


def write_manifest(path, records: list[Record]):
    lines = ["\t".join((r.image_path, r.mask_path, r.split, r.domain_id)) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Dataset:
    images: list[np.ndarray]  # H x W x C float64 in [0, 1]
    masks: list[np.ndarray]   # H x W uint8 in {0, 1}
    ids: list[str]
    domains: list[str]
    splits: list[str]

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return self.images[i], self.masks[i]

    def subset(self, split=None, domain=None) -> "Dataset":
        keep = [i for i in range(len(self))
                if (split is None or self.splits[i] == split)
                and (domain is None or self.domains[i] == domain)]
        pick = lambda xs: [xs[i] for i in keep]  # noqa: E731
        return Dataset(pick(self.images), pick(self.masks), pick(self.ids),
                       pick(self.domains), pick(self.splits))


def _load_image(path: Path, size: int, channels: int) -> np.ndarray:
    img = Image.open(path).convert("RGB" if channels == 3 else "L")
    if img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


def _load_mask(path: Path, size: int) -> np.ndarray:
    img = Image.open(path).convert("L")
    if img.size != (size, size):
        img = img.resize((size, size), Image.NEAREST)
    return (np.asarray(img) >= 128).astype(np.uint8)


def load_dataset(manifest_path, image_size: int = 512, split: str | None = None,
                 channels: int = 3) -> Dataset:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    ds = Dataset([], [], [], [], [])
    for idx, rec in enumerate(read_manifest(manifest_path)):
        if split is not None and rec.split != split:
            continue
        try:
            ds.images.append(_load_image(root / rec.image_path, image_size, channels))
            ds.masks.append(_load_mask(root / rec.mask_path, image_size))
        except (OSError, ValueError) as exc:
            raise DatasetError(f"record {idx} ({rec.image_path}): {exc}") from exc
        ds.ids.append(Path(rec.image_path).stem)
        ds.domains.append(rec.domain_id)
        ds.splits.append(rec.split)
    return ds


def save_png(path, arr: np.ndarray):
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)).save(path)


def save_mask(path, mask: np.ndarray):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


# -- synthetic data ----------------------------------------------------------

@dataclass
class DomainTransform:
    brightness: float = 0.0
    contrast: float = 1.0
    blur_sigma: float = 0.0

    def apply(self, img: np.ndarray) -> np.ndarray:
        out = self.contrast * (img - 0.5) + 0.5 + self.brightness
        if self.blur_sigma > 0:
            out = ndimage.gaussian_filter(out, sigma=(self.blur_sigma, self.blur_sigma, 0), mode="reflect")
        return np.clip(out, 0.0, 1.0)


@dataclass
class SynthConfig:
    image_size: int = 64
    count: int = 10
    curves_per_image: tuple[int, int] = (3, 7)
    thickness: tuple[int, int] = (2, 4)
    background_amplitude: float = 0.15
    noise_amplitude: float = 0.03
    stroke_contrast: float = 0.3
    fg_fraction: tuple[float, float] = (0.02, 0.15)
    domains: list[DomainTransform] = field(default_factory=lambda: [DomainTransform()])
    shared_geometry: bool = True
    val_fraction: float = 0.0
    channels: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.thickness[0] < 1 or self.thickness[0] > self.thickness[1]:
            raise ValueError(f"invalid thickness range {self.thickness}")
        if not self.domains:
            raise ValueError("at least one domain is required")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not 0 <= self.fg_fraction[0] < self.fg_fraction[1] <= 1:
            raise ValueError(f"invalid foreground fraction range {self.fg_fraction}")


@dataclass
class SyntheticSet:
    images: list[np.ndarray]
    masks: list[np.ndarray]
    domains: list[int]
    geometry: list[int]  # index of the geometry each image was rendered from


def _curve_points(rng: np.random.Generator, size: int) -> list[tuple[float, float]]:
    n = int(rng.integers(size // 3, size))
    turn = ndimage.gaussian_filter1d(rng.normal(0.0, 0.6, n), sigma=4.0, mode="nearest")
    angle = rng.uniform(0, 2 * np.pi) + np.cumsum(turn)
    pos = rng.uniform(0, size, 2) + np.cumsum(np.stack([np.cos(angle), np.sin(angle)], 1), axis=0)
    return [tuple(p) for p in pos]


def _render_curve(rng, size: int, thickness: tuple[int, int]) -> np.ndarray:
    canvas = Image.new("L", (size, size), 0)
    width = int(rng.integers(thickness[0], thickness[1] + 1))
    ImageDraw.Draw(canvas).line(_curve_points(rng, size), fill=255, width=width, joint="curve")
    return np.asarray(canvas) > 0


def _smooth_field(rng, size: int, sigma: float) -> np.ndarray:
    f = ndimage.gaussian_filter(rng.normal(size=(size, size)), sigma, mode="wrap")
    return f / (np.abs(f).max() + 1e-12)


def _geometry(rng: np.random.Generator, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    size = cfg.image_size
    lo_n, hi_n = cfg.curves_per_image
    lo_f, hi_f = cfg.fg_fraction
    want = int(rng.integers(lo_n, hi_n + 1))
    mask = np.zeros((size, size), dtype=bool)
    drawn = 0
    for _ in range(20 * hi_n):
        stroke = _render_curve(rng, size, cfg.thickness)
        candidate = mask | stroke
        if candidate.mean() > hi_f or not stroke.any():
            continue
        mask, drawn = candidate, drawn + 1
        if drawn >= want and mask.mean() >= lo_f:
            break

    background = 0.55 + cfg.background_amplitude * _smooth_field(rng, size, size / 6)
    noise = ndimage.gaussian_filter(rng.normal(size=(size, size)), 1.0)
    noise *= cfg.noise_amplitude / (noise.std() + 1e-12)
    gray = background + noise - cfg.stroke_contrast * mask
    tint = np.array([1.0, 0.85, 0.7]) if cfg.channels == 3 else np.array([1.0])
    img = np.clip(gray[:, :, None] * tint, 0.0, 1.0)
    return img, mask.astype(np.uint8)


def synthesize(cfg: SynthConfig) -> SyntheticSet:
    """Render `count` images per domain in memory.

    In shared-geometry mode every domain renders the same `count` geometries,
    so domains differ only by their photometric transform.
    """
    rng = np.random.default_rng(cfg.seed)
    out = SyntheticSet([], [], [], [])
    shared = [_geometry(rng, cfg) for _ in range(cfg.count)] if cfg.shared_geometry else None
    for d, transform in enumerate(cfg.domains):
        for i in range(cfg.count):
            if shared is not None:
                img, mask = shared[i]
                geom = i
            else:
                img, mask = _geometry(rng, cfg)
                geom = d * cfg.count + i
            out.images.append(transform.apply(img))
            out.masks.append(mask)
            out.domains.append(d)
            out.geometry.append(geom)
    return out


def generate_synthetic(cfg: SynthConfig, out_dir) -> Path:
    """Write PNGs plus ``manifest.tsv`` to `out_dir` and return the manifest path.

    The first domain is the training source (its last `val_fraction` share goes
    to ``val``); every other domain is marked ``test``.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    synth = synthesize(cfg)
    n_val = int(round(cfg.val_fraction * cfg.count))
    written = set()
    records = []
    for idx, (img, mask, d, g) in enumerate(zip(synth.images, synth.masks, synth.domains, synth.geometry)):
        i = idx % cfg.count
        image_rel = f"images/d{d}_{i:04d}.png"
        mask_rel = f"masks/g{g:04d}.png"
        save_png(out_dir / image_rel, img)
        if g not in written:
            save_mask(out_dir / mask_rel, mask)
            written.add(g)
        if d == 0:
            split = "val" if i >= cfg.count - n_val else "train"
        else:
            split = "test"
        records.append(Record(image_rel, mask_rel, split, f"domain{d}"))
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest
