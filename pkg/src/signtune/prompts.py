"""Traffic-sign prompt generation.

A prompt is a scenario description (one phrase from each of four pools)
composed with the sign's canonical category name and its traffic rule.
Separator grammar is fixed: comma-space between scenario elements, period
before the rule sentence.  Text-encoder outputs depend on the exact
string, so the grammar must stay stable.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError, NumericError

#: Prompt composition modes (ablation rows: scenario-only, rules-only, both).
MODES = ("combined", "scenario", "rules")


@dataclass(frozen=True)
class TaxonomyEntry:
    class_id: int
    canonical_name: str
    rule_text: str
    source_aliases: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.class_id < 0:
            raise ConfigError(f"class_id must be nonnegative, got {self.class_id}")
        if not self.canonical_name.strip():
            raise ConfigError(f"class {self.class_id}: canonical_name must be nonempty")
        if not self.rule_text.strip():
            raise ConfigError(f"class {self.class_id}: rule_text must be nonempty")


class Taxonomy:
    """Dense, ordered collection of TaxonomyEntry keyed by class_id."""

    def __init__(self, entries: list[TaxonomyEntry]):
        ids = sorted(e.class_id for e in entries)
        if not entries:
            raise ConfigError("taxonomy must contain at least one class")
        if ids != list(range(len(entries))):
            raise ConfigError(
                f"class ids must be unique and dense over [0, {len(entries)}), got {ids}"
            )
        self.entries = sorted(entries, key=lambda e: e.class_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, class_id: int) -> TaxonomyEntry:
        return self.entries[class_id]

    def subset(self, n_classes: int) -> "Taxonomy":
        """First n_classes entries, e.g. for desk-scale synthetic runs."""
        if not (1 <= n_classes <= len(self)):
            raise ConfigError(f"cannot take {n_classes} classes from {len(self)}")
        return Taxonomy(self.entries[:n_classes])

    def class_names(self) -> list[str]:
        return [e.canonical_name for e in self.entries]


@dataclass(frozen=True)
class ScenarioPools:
    detail_pool: list[str]
    appearance_pool: list[str]
    background_pool: list[str]
    image_pool: list[str]

    def __post_init__(self):
        for slot in ("detail_pool", "appearance_pool", "background_pool", "image_pool"):
            pool = getattr(self, slot)
            if not pool:
                raise ConfigError(f"{slot} must be nonempty")
            for phrase in pool:
                if not phrase.strip():
                    raise ConfigError(f"{slot} contains an empty phrase")
                if "{" in phrase or "}" in phrase:
                    raise ConfigError(f"{slot} phrase contains a placeholder: {phrase!r}")

    def as_tuple(self) -> tuple[list[str], ...]:
        return (self.detail_pool, self.appearance_pool, self.background_pool, self.image_pool)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: int
    class_id: int
    text: str


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("signtune") / "configs" / "taxonomy.yaml"))


def default_pools_path() -> Path:
    return Path(str(resources.files("signtune") / "configs" / "scenario_pools.yaml"))


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    path = Path(path) if path is not None else default_taxonomy_path()
    if not path.exists():
        raise ConfigError(f"taxonomy file not found: {path}")
    doc = yaml.safe_load(path.read_text())
    try:
        entries = [
            TaxonomyEntry(
                class_id=int(rec["class_id"]),
                canonical_name=str(rec["canonical_name"]),
                rule_text=str(rec["rule_text"]),
                source_aliases={
                    str(k): [str(v) for v in vals]
                    for k, vals in (rec.get("source_aliases") or {}).items()
                },
            )
            for rec in doc["classes"]
        ]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed taxonomy file {path}: {exc}") from exc
    return Taxonomy(entries)


def load_pools(path: str | Path | None = None) -> ScenarioPools:
    path = Path(path) if path is not None else default_pools_path()
    if not path.exists():
        raise ConfigError(f"pools file not found: {path}")
    doc = yaml.safe_load(path.read_text())
    try:
        return ScenarioPools(
            detail_pool=[str(p) for p in doc["detail_pool"]],
            appearance_pool=[str(p) for p in doc["appearance_pool"]],
            background_pool=[str(p) for p in doc["background_pool"]],
            image_pool=[str(p) for p in doc["image_pool"]],
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed pools file {path}: {exc}") from exc


def compose_scenario(pools: ScenarioPools, rng: random.Random | int) -> str:
    """One phrase from each pool, in slot order, joined by comma-space."""
    if isinstance(rng, int):
        rng = random.Random(rng)
    return ", ".join(rng.choice(pool) for pool in pools.as_tuple())


def compose_prompt(
    scenario: str,
    entry: TaxonomyEntry,
    template_id: int = 0,
    mode: str = "combined",
) -> PromptTemplate:
    """Compose scenario + category + rule into one prompt string."""
    if mode not in MODES:
        raise ConfigError(f"unknown prompt mode {mode!r}; expected one of {MODES}")
    category = f"a '{entry.canonical_name}' traffic sign"
    if mode == "rules":
        text = f"{category}. {entry.rule_text}."
    else:
        if not scenario.strip():
            raise ConfigError("scenario must be nonempty")
        if mode == "scenario":
            text = f"{scenario}, {category}."
        else:
            text = f"{scenario}, {category}. {entry.rule_text}."
    return PromptTemplate(template_id=template_id, class_id=entry.class_id, text=text)


def generate_prompt_set(
    taxonomy: Taxonomy,
    pools: ScenarioPools,
    n_per_class: int = 8,
    seed: int = 0,
    mode: str = "combined",
) -> list[PromptTemplate]:
    """n_per_class templates per class, ids contiguous per class, seeded."""
    if n_per_class < 1:
        raise NumericError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = random.Random(seed)
    templates = []
    for entry in taxonomy:
        for j in range(n_per_class):
            scenario = compose_scenario(pools, rng)
            templates.append(
                compose_prompt(
                    scenario,
                    entry,
                    template_id=entry.class_id * n_per_class + j,
                    mode=mode,
                )
            )
    return templates


def prompt_set_digest(templates: list[PromptTemplate]) -> str:
    payload = json.dumps(
        [[t.template_id, t.class_id, t.text] for t in templates], ensure_ascii=False
    ).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def save_prompt_set(templates: list[PromptTemplate], path: str | Path) -> None:
    with open(Path(path), "w") as fh:
        for t in templates:
            fh.write(
                json.dumps(
                    {"template_id": t.template_id, "class_id": t.class_id, "text": t.text},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_prompt_set(path: str | Path) -> list[PromptTemplate]:
    templates = []
    with open(Path(path)) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                templates.append(
                    PromptTemplate(int(rec["template_id"]), int(rec["class_id"]), rec["text"])
                )
    return templates
