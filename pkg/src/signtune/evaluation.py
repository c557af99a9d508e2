"""Cross-region accuracy reports and deltas versus a baseline.

A RegionReport holds per-region top-1 accuracy plus the unweighted
average over test regions (the printed "Avg." of cross-region result
tables); compare() returns the percentage-point delta between two
reports' averages.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import RegionSplit, load_images
from .errors import ComparabilityError, DataError
from .estimators import SignClassifier

ACCURACY_ATOL = 1e-9


@dataclass
class RegionReport:
    per_region: dict[str, float]
    average: float
    n_per_region: dict[str, int]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for region, acc in self.per_region.items():
            if not (0.0 <= acc <= 1.0):
                raise DataError(f"accuracy for {region} outside [0, 1]: {acc}")
        if self.per_region:
            recomputed = float(np.mean(list(self.per_region.values())))
            if abs(recomputed - self.average) > ACCURACY_ATOL:
                raise DataError(
                    f"average {self.average} disagrees with per-region mean {recomputed}"
                )

    def sample_weighted_average(self) -> float:
        """Sample-weighted variant; NOT the headline table metric."""
        total = sum(self.n_per_region.values())
        return (
            sum(self.per_region[r] * self.n_per_region[r] for r in self.per_region) / total
        )

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "per_region": self.per_region,
                    "average": self.average,
                    "n_per_region": self.n_per_region,
                    "meta": self.meta,
                },
                indent=2,
                sort_keys=True,
            )
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RegionReport":
        doc = json.loads(Path(path).read_text())
        return cls(
            per_region={k: float(v) for k, v in doc["per_region"].items()},
            average=float(doc["average"]),
            n_per_region={k: int(v) for k, v in doc["n_per_region"].items()},
            meta=doc.get("meta", {}),
        )


def evaluate(classifier: SignClassifier, split: RegionSplit) -> RegionReport:
    """Per-region top-1 accuracy on the held-out regions of a split."""
    if not split.test:
        raise DataError("evaluation split has no test records")
    per_region: dict[str, float] = {}
    n_per_region: dict[str, int] = {}
    for region in sorted(split.test_regions):
        recs = [r for r in split.test if r.region == region]
        if not recs:
            warnings.warn(f"region {region} has no test samples; excluded", stacklevel=2)
            continue
        images, labels, _ = load_images(recs)
        preds = classifier.predict(images)
        per_region[region] = float(np.mean(preds == labels))
        n_per_region[region] = len(recs)
    if not per_region:
        raise DataError("no test region had any samples")
    return RegionReport(
        per_region=per_region,
        average=float(np.mean(list(per_region.values()))),
        n_per_region=n_per_region,
    )


def compare(candidate: RegionReport, baseline: RegionReport) -> float:
    """Delta in percentage points between the two averages."""
    if set(candidate.per_region) != set(baseline.per_region):
        raise ComparabilityError(
            f"test regions differ: {sorted(candidate.per_region)} vs "
            f"{sorted(baseline.per_region)}"
        )
    return 100.0 * (candidate.average - baseline.average)


def render_table(
    reports: dict[str, RegionReport], baseline: str | None = None
) -> str:
    """Aligned text table: regions as columns, then Avg. and delta."""
    if not reports:
        raise DataError("nothing to render")
    regions = sorted(next(iter(reports.values())).per_region)
    header = ["Method"] + regions + ["Avg.", "D(%)"]
    rows = [header]
    base = reports.get(baseline) if baseline else None
    for name, rep in reports.items():
        delta = "-" if base is None or name == baseline else f"{compare(rep, base):+.2f}"
        rows.append(
            [name]
            + [f"{rep.per_region[r]:.4f}" for r in regions]
            + [f"{rep.average:.4f}", delta]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows
    ]
    return "\n".join(lines)


def export_embeddings(
    classifier: SignClassifier, split: RegionSplit, out_dir: str | Path
) -> None:
    """Write test-set embeddings (float32 .npy) plus a CSV of
    (sample_id, region, class_id, predicted_id) for external projection."""
    if not split.test:
        raise DataError("nothing to export: empty test split")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images, labels, regions = load_images(split.test)
    embs = classifier.embed(images).astype(np.float32)
    preds = classifier.predict(images)
    np.save(out / "embeddings.npy", embs)
    with open(out / "samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "region", "class_id", "predicted_id"])
        for i, rec in enumerate(split.test):
            writer.writerow([rec.image_ref, regions[i], int(labels[i]), int(preds[i])])
