"""Command line: dataset, training stages, editing, evaluation, serving."""

from __future__ import annotations

import functools
import json
from pathlib import Path

import click

from semani.config import (
    ClassifierConfig,
    ClipConfig,
    DataConfig,
    DiffConfig,
    EvalConfig,
    MaskPromptConfig,
    SegmenterConfig,
    TransConfig,
    VqaeConfig,
    config_dict,
)
from semani.errors import SemaniError
from semani.service.app import _run_edit, create_app
from semani.service.registry import ModelRegistry, resolve_home
from semani.service.schemas import ManipulateParams
from semani.storage import image_to_png, mask_to_png, png_to_image, png_to_mask

STAGE_CONFIGS = {
    "vqae": VqaeConfig,
    "clip": ClipConfig,
    "maskprompt": MaskPromptConfig,
    "segmenter": SegmenterConfig,
    "trans": TransConfig,
    "diff": DiffConfig,
    "classifier": ClassifierConfig,
}

# train stage -> checkpoint name in the registry
STAGE_CHECKPOINTS = {
    "vqae": "vqae",
    "clip": "cliplite",
    "maskprompt": "mask_prompt",
    "segmenter": "segmenter",
    "trans": "transgen",
    "diff": "diffgen",
    "classifier": "classifier",
}


def guarded(f):
    @functools.wraps(f)
    def inner(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except SemaniError as exc:
            raise click.ClickException(str(exc)) from exc

    return inner


def _build_config(cls, section: str, config_path: str | None, overrides: dict):
    """Defaults <- config file section <- explicit flags, in that order."""
    merged = config_dict(cls())
    if config_path:
        payload = json.loads(Path(config_path).read_text())
        extra = payload.get(section, {})
        unknown = set(extra) - set(merged)
        if unknown:
            raise click.ClickException(
                f"unknown {section} config field(s): {', '.join(sorted(unknown))}"
            )
        merged.update(extra)
    flags = {k: v for k, v in overrides.items() if v is not None}
    bad = set(flags) - set(merged)
    if bad:
        raise click.ClickException(
            f"{section} config has no field(s): {', '.join(sorted(bad))}"
        )
    merged.update(flags)
    cfg = cls.from_dict(merged) if hasattr(cls, "from_dict") else cls(**merged)
    if hasattr(cfg, "validate"):
        cfg.validate()
    return cfg


def _registry(home: str | None) -> ModelRegistry:
    return ModelRegistry(resolve_home(home))


home_option = click.option(
    "--home",
    envvar="SEMANI_HOME",
    default=None,
    help="Run directory (or set SEMANI_HOME).",
)
config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file with per-stage config overrides.",
)


@click.group()
def main() -> None:
    """Entity-level text-guided image editing toolkit."""


@main.command("gen-data")
@home_option
@config_option
@click.option("--n", default=10000, show_default=True, help="Total scene count.")
@click.option("--seed", default=0, show_default=True)
@guarded
def gen_data(home: str | None, config_path: str | None, n: int, seed: int) -> None:
    """Write the procedural dataset manifest under HOME/data."""
    from semani.corpus.manifest import build_dataset

    registry = _registry(home)
    cfg = _build_config(DataConfig, "data", config_path, {})
    manifest = build_dataset(n, seed, cfg, out_dir=registry.data_dir)
    counts = {k: len(v) for k, v in manifest.splits.items()}
    click.echo(f"wrote manifest for {n} scenes to {registry.data_dir} {counts}")


@main.command()
@click.argument("stage", type=click.Choice(sorted(STAGE_CONFIGS)))
@home_option
@config_option
@click.option("--steps", type=int, default=None, help="Override optimizer steps.")
@click.option("--seed", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--log-every", default=200, show_default=True)
@guarded
def train(
    stage: str,
    home: str | None,
    config_path: str | None,
    steps: int | None,
    seed: int | None,
    batch_size: int | None,
    lr: float | None,
    log_every: int,
) -> None:
    """Train one stage and save its checkpoint under HOME/checkpoints."""
    registry = _registry(home)
    manifest = registry.manifest
    overrides = {"steps": steps, "seed": seed, "batch_size": batch_size, "lr": lr}
    cfg = _build_config(STAGE_CONFIGS[stage], stage, config_path, overrides)
    out = registry.checkpoint_path(STAGE_CHECKPOINTS[stage])
    out.parent.mkdir(parents=True, exist_ok=True)

    if stage == "vqae":
        from semani.vqae.train import train_vqae

        train_vqae(manifest, cfg, out, log_every)
    elif stage == "clip":
        from semani.cliplite.train import train_clip

        train_clip(manifest, cfg, out, log_every)
    elif stage == "maskprompt":
        from semani.cliplite.prompt import tune_mask_prompt

        tune_mask_prompt(manifest, registry.cliplite, cfg, out, log_every)
    elif stage == "segmenter":
        from semani.align.segmenter import train_segmenter

        train_segmenter(manifest, cfg, out, log_every)
    elif stage == "trans":
        from semani.transgen.train import train_transgen

        train_transgen(manifest, registry.vqae, registry.cliplite, cfg, out, log_every)
    elif stage == "diff":
        from semani.diffgen.train import train_diffgen

        train_diffgen(manifest, cfg, out, log_every)
    else:
        from semani.evaluation.classifier import train_classifier

        train_classifier(manifest, cfg, out, log_every)
    click.echo(f"saved {out}")


@main.command()
@home_option
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--text", required=True, help="Target description for the region.")
@click.option("--prompt", default=None, help="Entity word; alignment picks the mask.")
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option(
    "--method", type=click.Choice(["trans", "diff"]), default="diff", show_default=True
)
@click.option("--steps", default=50, show_default=True, help="Denoising steps.")
@click.option("--guidance", default=9.0, show_default=True, help="Guidance scale s.")
@click.option("--eta", default=0.0, show_default=True)
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--top-k", default=32, show_default=True)
@click.option("--use-gray", is_flag=True, help="Condition token edits on grayscale.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out-mask", "out_mask_path", type=click.Path(dir_okay=False), default=None)
@guarded
def manipulate(
    home: str | None,
    image_path: str,
    text: str,
    prompt: str | None,
    mask_path: str | None,
    method: str,
    steps: int,
    guidance: float,
    eta: float,
    temperature: float,
    top_k: int,
    use_gray: bool,
    seed: int,
    out_path: str,
    out_mask_path: str | None,
) -> None:
    """Edit one image; mask comes from --prompt alignment or --mask PNG."""
    if (prompt is None) == (mask_path is None):
        raise click.ClickException("exactly one of --prompt or --mask is required")
    registry = _registry(home)
    image = png_to_image(Path(image_path).read_bytes())
    if mask_path is not None:
        mask = png_to_mask(Path(mask_path).read_bytes())
    else:
        result = registry.engine().align(image, prompt)
        mask = result.selected_mask()
    params = ManipulateParams(
        seed=seed,
        steps=steps,
        guidance=guidance,
        eta=eta,
        temperature=temperature,
        top_k=top_k,
        use_gray=use_gray,
    )
    out = _run_edit(registry, method, image, mask, text, params)
    Path(out_path).write_bytes(image_to_png(out))
    click.echo(f"wrote {out_path}")
    if out_mask_path is not None:
        Path(out_mask_path).write_bytes(mask_to_png(mask))
        click.echo(f"wrote {out_mask_path}")


@main.command("eval")
@home_option
@config_option
@click.option(
    "--pipeline",
    type=click.Choice(["trans", "diff", "both"]),
    default="both",
    show_default=True,
)
@click.option("--split", default="test", show_default=True)
@click.option("--n", "n_scenes", type=int, default=None, help="Scenes per suite.")
@click.option("--seed", type=int, default=None)
@click.option("--alignment/--no-alignment", default=True, show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@guarded
def eval_cmd(
    home: str | None,
    config_path: str | None,
    pipeline: str,
    split: str,
    n_scenes: int | None,
    seed: int | None,
    alignment: bool,
    plots: bool,
) -> None:
    """Run the metric suites and write JSON reports under HOME/reports."""
    from semani.evaluation.suite import alignment_report, calibrate_theta, run_suite

    registry = _registry(home)
    manifest = registry.manifest
    cfg = _build_config(
        EvalConfig, "eval", config_path, {"n_scenes": n_scenes, "seed": seed}
    )
    pipelines = ["trans", "diff"] if pipeline == "both" else [pipeline]
    needed = ["cliplite", "classifier"]
    if "trans" in pipelines:
        needed += ["vqae", "transgen"]
    if "diff" in pipelines:
        needed += ["diffgen"]
    if alignment:
        needed += ["mask_prompt"]
    registry.require(*needed)
    registry.reports_dir.mkdir(parents=True, exist_ok=True)

    reports = {}
    for p in pipelines:
        out = registry.reports_dir / f"eval_{p}_{split}.json"
        rep = run_suite(
            manifest,
            split,
            p,
            vqae=registry.vqae if p == "trans" else None,
            trans=registry.transgen if p == "trans" else None,
            diff=registry.diffgen if p == "diff" else None,
            clip=registry.cliplite,
            classifier=registry.classifier,
            config=cfg,
            out_path=out,
        )
        reports[p] = rep
        click.echo(
            f"{p}: fidelity={rep.fidelity:.3f} clip_pref={rep.clip_preference:.3f} "
            f"IS={rep.is_mean:.3f} R@10={rep.recall['10']:.3f} "
            f"l2+={rep.l2_positive:.4f} l2_out={rep.l2_outside_mask:.1e} -> {out}"
        )

    if alignment:
        engine = registry.engine()
        out = registry.reports_dir / "alignment.json"
        rep = alignment_report(manifest, engine, split="val", seed=cfg.seed, out_path=out)
        learned = rep["learned_iou_mean"]
        click.echo(
            f"alignment: acc={rep['two_entity_accuracy']:.3f} "
            f"token_iou={rep['token_mask_iou_mean']:.3f} "
            f"learned_iou={'n/a' if learned is None else f'{learned:.3f}'} -> {out}"
        )
        theta_out = registry.reports_dir / "theta.json"
        cal = calibrate_theta(manifest, engine, split="val", seed=cfg.seed, out_path=theta_out)
        click.echo(
            f"theta: {cal['theta']:.4f} "
            f"(balanced acc {cal['balanced_accuracy']:.3f}) -> {theta_out}"
        )

    if len(reports) == 2:
        out = registry.reports_dir / f"comparison_{split}.json"
        _write_comparison(reports["trans"], reports["diff"], cfg.seed, out)
        click.echo(f"comparison -> {out}")
    if plots and reports:
        out = registry.reports_dir / f"metrics_{split}.png"
        _plot_reports(list(reports.values()), out)
        click.echo(f"plots -> {out}")


def _write_comparison(trans_rep, diff_rep, seed: int, out_path: Path) -> None:
    """Side-by-side metrics; records whether diff R@10 >= trans R@10."""
    r10_trans = trans_rep.recall["10"]
    r10_diff = diff_rep.recall["10"]
    payload = {
        "seed": seed,
        "split": trans_rep.split,
        "n_samples": trans_rep.n_samples,
        "trans": trans_rep.to_json(),
        "diff": diff_rep.to_json(),
        "r_at_10": {"trans": r10_trans, "diff": r10_diff},
        "diff_geq_trans_at_10": bool(r10_diff >= r10_trans),
    }
    out_path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def _plot_reports(reports: list, out_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = ["fidelity", "clip_preference", "is_mean", "clip_score_target"]
    recalls = sorted(reports[0].recall, key=int)
    labels = metrics + [f"R@{n}" for n in recalls]
    fig, ax = plt.subplots(figsize=(9, 4))
    width = 0.8 / len(reports)
    for i, rep in enumerate(reports):
        values = [getattr(rep, m) for m in metrics] + [rep.recall[n] for n in recalls]
        ax.bar(
            [j + i * width for j in range(len(values))],
            values,
            width,
            label=rep.pipeline,
        )
    ax.set_xticks([j + width * (len(reports) - 1) / 2 for j in range(len(labels))])
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_title(f"evaluation on {reports[0].split}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


@main.command()
@home_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8756, show_default=True)
@click.option("--workers", default=2, show_default=True, help="Job pool size.")
@guarded
def serve(home: str | None, host: str, port: int, workers: int) -> None:
    """Serve the /v1 HTTP API over HOME's checkpoints."""
    import uvicorn

    app = create_app(home, max_workers=workers)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@home_option
@config_option
@click.option("--n", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--split", default="test", show_default=True)
@click.option("--log-every", default=200, show_default=True)
@guarded
def pipeline(
    home: str | None,
    config_path: str | None,
    n: int,
    seed: int,
    split: str,
    log_every: int,
) -> None:
    """Dataset, every training stage, then both eval suites; skips done work."""
    ctx = click.get_current_context()
    registry = _registry(home)
    if not registry.has_dataset():
        ctx.invoke(gen_data, home=home, config_path=config_path, n=n, seed=seed)
    for stage in ("vqae", "clip", "maskprompt", "segmenter", "classifier", "trans", "diff"):
        if registry.checkpoint_path(STAGE_CHECKPOINTS[stage]).exists():
            click.echo(f"{stage}: checkpoint present, skipping")
            continue
        click.echo(f"training {stage}")
        ctx.invoke(
            train, stage=stage, home=home, config_path=config_path, log_every=log_every
        )
    ctx.invoke(
        eval_cmd, home=home, config_path=config_path, pipeline="both", split=split
    )


if __name__ == "__main__":
    main()
