"""Cross-regional dataset plumbing.

Manifests map image files to canonical class ids with source/region
provenance.  The regional source datasets themselves are never bundled;
a mapping config translates each source's raw labels into the canonical
taxonomy (or drops them explicitly).  A synthetic generator produces
desk-scale regional-shift data for end-to-end verification.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .errors import ConfigError, DataError, DuplicateRecordError, MappingError, NumericError

#: The ten regional sources of the joint benchmark (region, source, classes,
#: images, year).  Reference metadata only; the datasets are not bundled.
REGION_REGISTRY = [
    {"no": 1, "region": "China", "source": "TT100", "categories": 36, "images": 13012, "year": 2016},
    {"no": 2, "region": "Germany", "source": "GTSRB", "categories": 31, "images": 35939, "year": 2013},
    {"no": 3, "region": "Iran", "source": "PTSD", "categories": 26, "images": 11198, "year": 2024},
    {"no": 4, "region": "India", "source": "IndiaTS", "categories": 41, "images": 3723, "year": 2022},
    {"no": 5, "region": "Turkey", "source": "TurkeyTS", "categories": 43, "images": 9663, "year": 2020},
    {"no": 6, "region": "Belgium", "source": "BelgiumTS", "categories": 36, "images": 4194, "year": 2014},
    {"no": 7, "region": "Russia", "source": "RTSD", "categories": 44, "images": 56138, "year": 2016},
    {"no": 8, "region": "World", "source": "MTSD", "categories": 45, "images": 37053, "year": 2020},
    {"no": 9, "region": "Slovenia", "source": "DFG", "categories": 42, "images": 4769, "year": 2019},
    {"no": 10, "region": "America", "source": "ARTS", "categories": 27, "images": 15393, "year": 2019},
]

DROP = "DROP"


@dataclass(frozen=True)
class SampleRecord:
    image_ref: str
    source_id: str
    region: str
    raw_label: str
    class_id: int

    def __post_init__(self):
        if self.class_id < 0:
            raise DataError(f"invalid class_id {self.class_id} for {self.image_ref}")
        if not self.region:
            raise DataError(f"record {self.image_ref} has an empty region")


@dataclass
class Manifest:
    records: list[SampleRecord]
    provenance: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.image_ref in seen:
                raise DuplicateRecordError(f"duplicate image_ref: {rec.image_ref}")
            seen.add(rec.image_ref)

    def __len__(self) -> int:
        return len(self.records)

    def regions(self) -> list[str]:
        return sorted({rec.region for rec in self.records})

    def digest(self) -> str:
        payload = "\n".join(
            json.dumps(
                [r.image_ref, r.source_id, r.region, r.raw_label, r.class_id],
                sort_keys=True,
            )
            for r in self.records
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "manifest.jsonl", "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.__dict__, sort_keys=True) + "\n")
        (path / "provenance.json").write_text(
            json.dumps(self.provenance, indent=2, sort_keys=True)
        )

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        records = []
        with open(path / "manifest.jsonl") as fh:
            for line in fh:
                if line.strip():
                    records.append(SampleRecord(**json.loads(line)))
        prov_file = path / "provenance.json"
        provenance = json.loads(prov_file.read_text()) if prov_file.exists() else {}
        return cls(records=records, provenance=provenance)


@dataclass
class RegionSplit:
    train_regions: set[str]
    test_regions: set[str]
    train: list[SampleRecord]
    test: list[SampleRecord]


# -- mapping config and manifest construction -----------------------------


@dataclass
class MappingConfig:
    """source_id -> region plus raw-label -> class_id | DROP tables."""

    sources: dict[str, dict]

    @classmethod
    def load(cls, path: str | Path) -> "MappingConfig":
        doc = yaml.safe_load(Path(path).read_text())
        if not isinstance(doc, dict) or "sources" not in doc:
            raise ConfigError(f"mapping config {path} must contain a 'sources' table")
        return cls(sources=doc["sources"])

    def lookup(self, source_id: str, raw_label: str):
        src = self.sources.get(source_id)
        if src is None:
            raise MappingError(f"source {source_id!r} absent from mapping config")
        labels = src.get("labels") or {}
        if raw_label not in labels:
            raise MappingError(
                f"raw label {raw_label!r} from source {source_id!r} has no mapping entry"
            )
        return labels[raw_label]

    def region(self, source_id: str) -> str:
        src = self.sources.get(source_id)
        if src is None or "region" not in src:
            raise MappingError(f"source {source_id!r} has no region in mapping config")
        return str(src["region"])


_IMAGE_SUFFIXES = {".png", ".ppm", ".jpg", ".jpeg", ".bmp"}


def build_manifest(
    source_dirs: dict[str, str | Path], mapping: MappingConfig
) -> tuple[Manifest, dict[str, int]]:
    """Scan <source_dir>/<raw_label>/<image> trees into a canonical manifest.

    Every encountered raw label must map to a class_id or an explicit DROP
    marker; silent drops would bias cross-region comparisons.  Returns the
    manifest plus a per-label count of dropped images.
    """
    records = []
    dropped: dict[str, int] = {}
    provenance: dict[str, dict] = {}
    for source_id in sorted(source_dirs):
        root = Path(source_dirs[source_id])
        if not root.is_dir():
            raise DataError(f"source directory not found: {root}")
        region = mapping.region(source_id)
        count = 0
        for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            target = mapping.lookup(source_id, label_dir.name)
            files = sorted(
                p for p in label_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
            )
            if target == DROP:
                dropped[f"{source_id}/{label_dir.name}"] = (
                    dropped.get(f"{source_id}/{label_dir.name}", 0) + len(files)
                )
                continue
            for f in files:
                records.append(
                    SampleRecord(
                        image_ref=str(f),
                        source_id=source_id,
                        region=region,
                        raw_label=label_dir.name,
                        class_id=int(target),
                    )
                )
                count += 1
        provenance[source_id] = {"region": region, "count": count}
    records.sort(key=lambda r: (r.source_id, r.image_ref))
    return Manifest(records=records, provenance=provenance), dropped


def split_by_region(manifest: Manifest, train_regions) -> RegionSplit:
    train_regions = set(train_regions)
    present = set(manifest.regions())
    unknown = train_regions - present
    if unknown:
        raise DataError(f"train regions not present in manifest: {sorted(unknown)}")
    train = [r for r in manifest.records if r.region in train_regions]
    test = [r for r in manifest.records if r.region not in train_regions]
    if not train:
        raise DataError("region split produced an empty training set")
    if not test:
        import warnings

        warnings.warn("region split has no held-out regions", stacklevel=2)
    return RegionSplit(
        train_regions=train_regions,
        test_regions=present - train_regions,
        train=train,
        test=test,
    )


def coverage_check(manifest: Manifest, n_classes: int = 46) -> list[dict]:
    """Per-region class coverage, plus classes absent from the whole union."""
    rows = []
    union: set[int] = set()
    for region in manifest.regions():
        recs = [r for r in manifest.records if r.region == region]
        classes = sorted({r.class_id for r in recs})
        union.update(classes)
        rows.append({"region": region, "classes": classes, "n_classes": len(classes), "n_images": len(recs)})
    missing = sorted(set(range(n_classes)) - union)
    rows.append({"region": "<union>", "classes": sorted(union), "n_classes": len(union), "n_images": len(manifest), "missing": missing})
    return rows


# -- synthetic regional-shift generator -----------------------------------

_SHAPES = ("circle", "triangle", "square", "octagon", "diamond", "inverted_triangle")
_PALETTE = np.array(
    [
        [200, 30, 30],
        [30, 60, 200],
        [220, 190, 30],
        [30, 160, 60],
        [150, 40, 170],
        [230, 130, 30],
        [30, 180, 190],
        [120, 120, 120],
    ],
    dtype=np.float32,
)


def _shape_mask(shape: str, size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= radius * radius
    if shape == "square":
        return (np.abs(dx) <= radius) & (np.abs(dy) <= radius)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= radius * 1.2
    if shape == "octagon":
        return (np.abs(dx) + np.abs(dy) <= radius * 1.3) & (np.abs(dx) <= radius) & (np.abs(dy) <= radius)
    if shape == "triangle":
        return (dy >= -radius) & (np.abs(dx) <= (dy + radius) * 0.6)
    if shape == "inverted_triangle":
        return (dy <= radius) & (np.abs(dx) <= (radius - dy) * 0.6)
    raise NumericError(f"unknown shape {shape!r}")


def render_sign(
    class_id: int,
    region_index: int,
    n_regions: int,
    style_shift_strength: float,
    sample_rng: np.random.Generator,
    size: int = 32,
) -> np.ndarray:
    """One (size, size, 3) uint8 raster.

    Class fixes the base shape/color; the region applies a systematic style
    perturbation scaled by style_shift_strength.  Per-sample jitter comes
    only from sample_rng, so at strength 0 a given (class, sample index) is
    byte-identical across regions.
    """
    shape = _SHAPES[class_id % len(_SHAPES)]
    color = _PALETTE[class_id % len(_PALETTE)]
    bg = 170.0 + sample_rng.uniform(-12, 12)
    img = np.full((size, size, 3), bg, dtype=np.float32)
    img += sample_rng.normal(0.0, 6.0, size=img.shape).astype(np.float32)

    cx = size / 2 + sample_rng.uniform(-2.5, 2.5)
    cy = size / 2 + sample_rng.uniform(-2.5, 2.5)
    radius = size * 0.34 + sample_rng.uniform(-1.5, 1.5)
    mask = _shape_mask(shape, size, cx, cy, radius)
    inner = _shape_mask(shape, size, cx, cy, radius * 0.55)
    img[mask] = color
    img[inner] = 0.82 * color + 45.0

    if style_shift_strength != 0.0 and n_regions > 1:
        mix = style_shift_strength * region_index / (n_regions - 1)
        rolled = np.roll(img, shift=1 + region_index % 2, axis=2)
        img = (1.0 - 0.7 * mix) * img + 0.7 * mix * rolled
        img *= 1.0 - 0.25 * mix
        # region glyph: corner bar whose width tracks the region index
        bar = 2 + region_index
        img[:3, :bar] = 255.0 * mix + (1 - mix) * img[:3, :bar]

    return np.clip(img, 0, 255).astype(np.uint8)


def generate_synthetic_regions(
    n_classes: int,
    n_regions: int,
    samples_per_class_region: int,
    style_shift_strength: float,
    seed: int,
    out_dir: str | Path,
    size: int = 32,
) -> Manifest:
    """Render a regional-shift dataset to PNGs and return its manifest."""
    if n_classes < 2 or n_regions < 2:
        raise NumericError("need at least 2 classes and 2 regions")
    if samples_per_class_region < 1:
        raise NumericError("samples_per_class_region must be >= 1")
    root = Path(out_dir) / f"synth-seed{seed}"
    records = []
    provenance = {}
    for region_index in range(n_regions):
        region = f"R{region_index}"
        source_id = f"SYN-{region}"
        count = 0
        for class_id in range(n_classes):
            for k in range(samples_per_class_region):
                # jitter keyed by (seed, class, sample) only: regions share it
                rng = np.random.default_rng([seed, class_id, k])
                img = render_sign(
                    class_id, region_index, n_regions, style_shift_strength, rng, size
                )
                rel = Path(region) / f"c{class_id:02d}" / f"{k:04d}.png"
                dest = root / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(img).save(dest)
                records.append(
                    SampleRecord(
                        image_ref=str(dest),
                        source_id=source_id,
                        region=region,
                        raw_label=f"c{class_id:02d}",
                        class_id=class_id,
                    )
                )
                count += 1
        provenance[source_id] = {"region": region, "count": count}
    records.sort(key=lambda r: (r.source_id, r.image_ref))
    return Manifest(records=records, provenance=provenance)


def load_images(records: list[SampleRecord]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Load rasters for records -> (images uint8 NHWC, class_ids, regions)."""
    if not records:
        raise DataError("no records to load")
    images, labels, regions = [], [], []
    for rec in records:
        try:
            with Image.open(rec.image_ref) as im:
                images.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
        except OSError as exc:
            raise DataError(f"unreadable image {rec.image_ref}: {exc}") from exc
        labels.append(rec.class_id)
        regions.append(rec.region)
    return np.stack(images), np.asarray(labels, dtype=np.int64), regions
