"""Batch entry points: prompts -> manifest -> train -> ensemble -> evaluate.

Exit codes: 0 success, 2 usage (click), 3 config, 4 data, 5 numeric.
Every command echoes its resolved configuration (including the seed) so a
run can be reproduced from its log alone.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from . import prompts as prompts_mod
from .errors import ConfigError, DataError, NumericError, SignTuneError
from .estimators import FineTuner, SignClassifier
from .evaluation import RegionReport, compare, evaluate, export_embeddings, render_table
from .model import EncoderConfig, EncoderPair
from .training import Strategy, zero_shot_checkpoint
from .weights import Checkpoint, load_checkpoint, save_checkpoint
from .schedule import FactorTrace, AdaptiveFactorConfig  # noqa: F401  (re-export for scripts)


def _echo_config(command: str, options: dict) -> None:
    click.echo(f"[{command}] resolved config: " + json.dumps(options, sort_keys=True, default=str))


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(3)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(4)
        except NumericError as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(5)
        except SignTuneError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Robust fine-tuning toolkit for cross-regional traffic sign recognition."""


@main.command("gen-prompts")
@click.option("--taxonomy", type=click.Path(), default=None, help="Taxonomy YAML (default: bundled 46-class file).")
@click.option("--pools", type=click.Path(), default=None, help="Scenario pools YAML (default: bundled).")
@click.option("--n-per-class", type=int, default=8, show_default=True)
@click.option("--n-classes", type=int, default=None, help="Use only the first N taxonomy classes.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(prompts_mod.MODES), default="combined", show_default=True)
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def cmd_gen_prompts(taxonomy, pools, n_per_class, n_classes, seed, mode, out):
    """Generate a prompt-set JSONL file."""
    _echo_config("gen-prompts", dict(taxonomy=taxonomy, pools=pools, n_per_class=n_per_class,
                                     n_classes=n_classes, seed=seed, mode=mode, out=out))
    tax = prompts_mod.load_taxonomy(taxonomy)
    if n_classes is not None:
        tax = tax.subset(n_classes)
    pool = prompts_mod.load_pools(pools)
    templates = prompts_mod.generate_prompt_set(tax, pool, n_per_class=n_per_class, seed=seed, mode=mode)
    prompts_mod.save_prompt_set(templates, out)
    click.echo(f"wrote {len(templates)} templates to {out} "
               f"(digest {prompts_mod.prompt_set_digest(templates)[:12]})")


@main.command("build-manifest")
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), required=True)
@click.option("--source", "sources", multiple=True, help="source_id=path, repeatable.")
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def cmd_build_manifest(mapping_path, sources, out):
    """Build a canonical manifest from raw source directories."""
    _echo_config("build-manifest", dict(mapping=mapping_path, sources=list(sources), out=out))
    source_dirs = {}
    for item in sources:
        if "=" not in item:
            raise ConfigError(f"--source expects source_id=path, got {item!r}")
        sid, path = item.split("=", 1)
        source_dirs[sid] = path
    if not source_dirs:
        raise ConfigError("at least one --source is required")
    mapping = data_mod.MappingConfig.load(mapping_path)
    manifest, dropped = data_mod.build_manifest(source_dirs, mapping)
    manifest.save(out)
    click.echo(f"manifest: {len(manifest)} records, digest {manifest.digest()[:12]}")
    for label, count in sorted(dropped.items()):
        click.echo(f"dropped {count} images for {label}")
    for row in data_mod.coverage_check(manifest):
        click.echo(f"coverage {row['region']}: {row['n_classes']} classes, {row['n_images']} images")


@main.command("synth-data")
@click.option("--classes", "n_classes", type=int, default=6, show_default=True)
@click.option("--regions", "n_regions", type=int, default=3, show_default=True)
@click.option("--per-class", type=int, default=20, show_default=True)
@click.option("--shift", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def cmd_synth_data(n_classes, n_regions, per_class, shift, seed, out):
    """Generate the synthetic regional-shift dataset and its manifest."""
    _echo_config("synth-data", dict(classes=n_classes, regions=n_regions, per_class=per_class,
                                    shift=shift, seed=seed, out=out))
    manifest = data_mod.generate_synthetic_regions(
        n_classes, n_regions, per_class, shift, seed, out
    )
    manifest.save(Path(out) / "manifest")
    click.echo(f"wrote {len(manifest)} samples; manifest digest {manifest.digest()[:12]}")


def _load_manifest(path) -> data_mod.Manifest:
    path = Path(path)
    if not (path / "manifest.jsonl").exists():
        raise DataError(f"no manifest.jsonl under {path}")
    return data_mod.Manifest.load(path)


def _encoders_for(prompt_path, seed, init_from) -> tuple[EncoderPair, list]:
    prompt_set = prompts_mod.load_prompt_set(prompt_path)
    if init_from:
        ckpt = load_checkpoint(init_from)
        classifier = SignClassifier.from_checkpoint(ckpt, prompt_set)
        return classifier.encoders, prompt_set
    return EncoderPair(EncoderConfig(), seed=seed), prompt_set


@main.command("zero-shot")
@click.option("--prompts", "prompt_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--init-from", type=click.Path(), default=None,
              help="Existing checkpoint to snapshot (default: fresh seeded encoders).")
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def cmd_zero_shot(prompt_path, seed, init_from, out):
    """Write the zero-shot (pretrained, untouched) checkpoint."""
    _echo_config("zero-shot", dict(prompts=prompt_path, seed=seed, init_from=init_from, out=out))
    encoders, prompt_set = _encoders_for(prompt_path, seed, init_from)
    save_checkpoint(zero_shot_checkpoint(encoders, prompt_set, seed), out)
    click.echo(f"zero-shot checkpoint written to {out}")


def _split_train_val(records, val_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_val = max(1, int(round(val_fraction * len(records)))) if val_fraction > 0 else 0
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val


@main.command("train")
@click.option("--strategy", type=click.Choice([s.value for s in Strategy]), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--prompts", "prompt_path", type=click.Path(exists=True), required=True)
@click.option("--train-regions", required=True, help="Comma-separated region names.")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=0.05, show_default=True,
              help="Desk-scale default; use 3e-5 for real pretrained backbones.")
@click.option("--gamma", type=float, default=5.0, show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--lambda", "lambda_anchor", type=float, default=0.0, show_default=True)
@click.option("--clamp-lo", type=float, default=0.0, show_default=True)
@click.option("--clamp-hi", type=float, default=1.0, show_default=True)
@click.option("--loss-mode", type=click.Choice(["contrastive", "cross_entropy"]),
              default="contrastive", show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--init-from", type=click.Path(), default=None)
@click.option("--fine-tuned", type=click.Path(), default=None,
              help="Finished full fine-tune checkpoint (wise_ft only).")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Run directory (default runs/<timestamp>-seed<seed>).")
@handle_errors
def cmd_train(strategy, manifest_path, prompt_path, train_regions, epochs, batch_size, lr,
              gamma, alpha, lambda_anchor, clamp_lo, clamp_hi, loss_mode, val_fraction,
              seed, init_from, fine_tuned, out_dir):
    """Train one strategy and write checkpoint + trace + epoch log."""
    out = Path(out_dir) if out_dir else Path("runs") / f"{time.strftime('%Y%m%d-%H%M%S')}-seed{seed}"
    options = dict(strategy=strategy, manifest=manifest_path, prompts=prompt_path,
                   train_regions=train_regions, epochs=epochs, batch_size=batch_size, lr=lr,
                   gamma=gamma, alpha=alpha, lambda_anchor=lambda_anchor, clamp_lo=clamp_lo,
                   clamp_hi=clamp_hi, loss_mode=loss_mode, val_fraction=val_fraction, seed=seed,
                   init_from=init_from, fine_tuned=fine_tuned, out=str(out))
    _echo_config("train", options)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(options, indent=2, sort_keys=True))

    encoders, prompt_set = _encoders_for(prompt_path, seed, init_from)

    if strategy == Strategy.WISE_FT.value and fine_tuned:
        ft = load_checkpoint(fine_tuned)
        from .training import wise_ft_ensemble

        mixed = wise_ft_ensemble(encoders.to_parameter_set(), ft.params, alpha)
        ckpt = Checkpoint(params=mixed,
                          meta=dict(ft.meta, strategy=Strategy.WISE_FT.value, alpha=alpha))
        save_checkpoint(ckpt, out / "checkpoint")
        click.echo(f"wise-ft ensemble written to {out / 'checkpoint'}")
        return
    if strategy == Strategy.WISE_FT.value and not fine_tuned and not init_from:
        raise ConfigError("wise_ft needs --fine-tuned (finished full fine-tune checkpoint) "
                          "or will fine-tune itself from --init-from")

    manifest = _load_manifest(manifest_path)
    split = data_mod.split_by_region(manifest, [r.strip() for r in train_regions.split(",")])
    train_recs, val_recs = _split_train_val(split.train, val_fraction, seed)
    X, y, _ = data_mod.load_images(train_recs)
    X_val = y_val = None
    if val_recs:
        X_val, y_val, _ = data_mod.load_images(val_recs)

    tuner = FineTuner(
        encoders, prompt_set, strategy=strategy, epochs=epochs, batch_size=batch_size,
        learning_rate=lr, lambda_anchor=lambda_anchor, alpha=alpha, gamma=gamma,
        clamp_lo=clamp_lo, clamp_hi=clamp_hi, seed=seed, loss_mode=loss_mode,
    )
    tuner.fit(X, y, X_val=X_val, y_val=y_val)
    save_checkpoint(tuner.checkpoint_, out / "checkpoint")
    if tuner.trace_ is not None:
        tuner.trace_.to_csv(out / "trace.csv")
    if tuner.results_:
        from .training import save_epoch_results

        save_epoch_results(tuner.results_, out / "epochs.jsonl")
    click.echo(f"checkpoint written to {out / 'checkpoint'}")


@main.command("ensemble")
@click.option("--zero-shot", "zs_path", type=click.Path(exists=True), required=True)
@click.option("--fine-tuned", "ft_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def cmd_ensemble(zs_path, ft_path, alpha, out):
    """Wise-FT style interpolation of two checkpoints."""
    _echo_config("ensemble", dict(zero_shot=zs_path, fine_tuned=ft_path, alpha=alpha, out=out))
    from .training import wise_ft_ensemble

    zs = load_checkpoint(zs_path)
    ft = load_checkpoint(ft_path)
    mixed = wise_ft_ensemble(zs.params, ft.params, alpha)
    save_checkpoint(
        Checkpoint(params=mixed, meta=dict(ft.meta, strategy=Strategy.WISE_FT.value, alpha=alpha)),
        out,
    )
    click.echo(f"ensembled checkpoint written to {out}")


@main.command("evaluate")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--prompts", "prompt_path", type=click.Path(exists=True), required=True)
@click.option("--train-regions", required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--export-embeddings", "emb_dir", type=click.Path(), default=None)
@handle_errors
def cmd_evaluate(ckpt_path, manifest_path, prompt_path, train_regions, out, emb_dir):
    """Evaluate a checkpoint across held-out regions; write a report."""
    _echo_config("evaluate", dict(checkpoint=ckpt_path, manifest=manifest_path,
                                  prompts=prompt_path, train_regions=train_regions,
                                  out=out, export_embeddings=emb_dir))
    prompt_set = prompts_mod.load_prompt_set(prompt_path)
    ckpt = load_checkpoint(ckpt_path)
    classifier = SignClassifier.from_checkpoint(ckpt, prompt_set).fit()
    manifest = _load_manifest(manifest_path)
    split = data_mod.split_by_region(manifest, [r.strip() for r in train_regions.split(",")])
    report = evaluate(classifier, split)
    report.meta = {"strategy": ckpt.meta.get("strategy"), "seed": ckpt.meta.get("seed"),
                   "checkpoint_digest": ckpt.params.digest()}
    report.to_json(out)
    click.echo(render_table({str(report.meta.get("strategy")): report}))
    if emb_dir:
        export_embeddings(classifier, split, emb_dir)
        click.echo(f"embeddings exported to {emb_dir}")


@main.command("report")
@click.option("--candidate", type=click.Path(exists=True), required=True)
@click.option("--baseline", type=click.Path(exists=True), required=True)
@handle_errors
def cmd_report(candidate, baseline):
    """Compare two report files and print the delta table."""
    _echo_config("report", dict(candidate=candidate, baseline=baseline))
    cand = RegionReport.from_json(candidate)
    base = RegionReport.from_json(baseline)
    delta = compare(cand, base)
    click.echo(render_table({"baseline": base, "candidate": cand}, baseline="baseline"))
    click.echo(f"delta: {delta:+.2f} percentage points")


if __name__ == "__main__":
    main()
