"""Batch command-line surface: one subcommand per pipeline stage.

Each subcommand accepts ``--config FILE`` (a flat JSON object of defaults);
explicit flags override config values, which override built-in defaults.
Exit codes: 0 success, 2 usage/config error, 1 runtime error.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from . import eval_harness, fusion, matcher, prompt_embed, synthetic, tensor_io
from .errors import EngineError, GeometryError, ParamError

app = typer.Typer(
    name="ipseg",
    help="Image-prompt segmentation pipeline: fuse features, build embeddings, "
    "generate point prompts, evaluate masks.",
    add_completion=False,
    pretty_exceptions_enable=False,
)


def _fail(exc: BaseException) -> "typer.Exit":
    typer.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    if isinstance(exc, (ParamError, GeometryError)):
        return typer.Exit(2)
    return typer.Exit(1)


class _Config:
    """Flat JSON defaults; explicit flags win, built-ins lose."""

    def __init__(self, path: Optional[Path], allowed: set[str]):
        self.values: dict = {}
        if path is None:
            return
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise typer.BadParameter(f"cannot load config {path}: {exc}")
        if not isinstance(doc, dict):
            raise typer.BadParameter(f"config {path} must be a JSON object")
        unknown = set(doc) - allowed
        if unknown:
            raise typer.BadParameter(
                f"config {path} has unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}"
            )
        self.values = doc

    def resolve(self, flag_value, key: str, default):
        if flag_value is not None:
            return flag_value
        if key in self.values:
            return self.values[key]
        return default


def _parse_grid(value) -> fusion.TargetGrid:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    if value in ("dino", "sd"):
        return value
    if isinstance(value, str):
        parts = value.lower().split("x")
        if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
            return (int(parts[0]), int(parts[1]))
    raise typer.BadParameter(f"expected 'dino', 'sd' or HxW, got {value!r}")


def _parse_mask_mode(value: str) -> prompt_embed.MaskMode:
    try:
        return prompt_embed.MaskMode.from_name(value)
    except ParamError as exc:
        raise typer.BadParameter(str(exc))


@app.command("fuse")
def cmd_fuse(
    sd: Path = typer.Option(..., "--sd", help="SD feature file (IPFT)"),
    dino: Path = typer.Option(..., "--dino", help="DINO feature file (IPFT)"),
    out: Path = typer.Option(..., "--out", help="Output fused feature file"),
    grid: Optional[str] = typer.Option(None, "--grid", help="Target grid: dino, sd or HxW"),
    normalize: Optional[bool] = typer.Option(
        None, "--normalize/--no-normalize", help="Per-source L2 normalization"
    ),
    interp: Optional[str] = typer.Option(None, "--interp", help="bilinear or nearest"),
    config: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
) -> None:
    """Align two feature maps and concatenate their channels (SD first)."""
    conf = _Config(config, {"grid", "normalize", "interp"})
    target = _parse_grid(conf.resolve(grid, "grid", "dino"))
    try:
        cfg = fusion.FusionConfig(
            target_grid=target,
            per_source_l2_normalize=conf.resolve(normalize, "normalize", True),
            interpolation=conf.resolve(interp, "interp", "bilinear"),
        )
        fused = fusion.fuse(
            tensor_io.read_feature_map(sd), tensor_io.read_feature_map(dino), cfg
        )
        tensor_io.write_feature_map(fused, out)
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    typer.echo(f"wrote {out} ({fused.height}x{fused.width}x{fused.channels})")


@app.command("embed")
def cmd_embed(
    features: Path = typer.Option(..., "--features", help="Prompt feature file (IPFT)"),
    out: Path = typer.Option(..., "--out", help="Output embedding file (1x1xC IPFT)"),
    mode: Optional[str] = typer.Option(None, "--mode", help="saliency, gt or none"),
    mask: Optional[Path] = typer.Option(None, "--mask", help="Foreground mask (P5 PGM)"),
    min_coverage: Optional[float] = typer.Option(
        None, "--min-coverage", help="Cell coverage threshold"
    ),
    literal_average: Optional[bool] = typer.Option(
        None,
        "--literal-average/--no-literal-average",
        help="Divide by all cells instead of selected cells",
    ),
    config: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
) -> None:
    """Pool a prompt feature map into an embedding, stored as a 1x1xC feature file."""
    conf = _Config(config, {"mode", "min_coverage", "literal_average"})
    mask_mode = _parse_mask_mode(conf.resolve(mode, "mode", "saliency"))
    if mask_mode is not prompt_embed.MaskMode.NONE and mask is None:
        raise typer.BadParameter(f"--mode {mask_mode.value} requires --mask")
    try:
        fm = tensor_io.read_feature_map(features)
        seg = tensor_io.read_mask(mask) if mask is not None else None
        embedding = prompt_embed.build_prompt_embedding(
            fm,
            seg,
            mask_mode,
            min_coverage=conf.resolve(min_coverage, "min_coverage", 0.5),
            divide_by="total"
            if conf.resolve(literal_average, "literal_average", False)
            else "selected",
        )
        out_fm = tensor_io.FeatureMap(
            embedding.values.reshape(1, 1, -1).astype(np.float32),
            fm.source_tag,
            fm.geometry,
        )
        tensor_io.write_feature_map(out_fm, out)
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    suffix = " (fallback to global mean)" if embedding.fallback_to_global else ""
    typer.echo(f"wrote {out} ({embedding.channels} channels){suffix}")


@app.command("prompt")
def cmd_prompt(
    input_path: Path = typer.Option(..., "--input", help="Input feature file (IPFT)"),
    embedding_path: Path = typer.Option(..., "--embedding", help="Embedding file (1x1xC IPFT)"),
    out: Path = typer.Option(..., "--out", help="Output prompt JSON"),
    k: Optional[int] = typer.Option(None, "--k", help="TopK size per polarity"),
    c: Optional[int] = typer.Option(None, "--c", help="Cluster centers per polarity"),
    kmeans_max_iters: Optional[int] = typer.Option(None, "--kmeans-max-iters"),
    snap: Optional[bool] = typer.Option(
        None, "--snap/--no-snap", help="Snap cluster centers onto member cells"
    ),
    config: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
) -> None:
    """Generate positive/negative point prompts for a promptable segmenter."""
    conf = _Config(config, {"k", "c", "kmeans_max_iters", "snap"})
    try:
        params = matcher.MatchParams(
            k=conf.resolve(k, "k", 32),
            c=conf.resolve(c, "c", 4),
            kmeans_max_iters=conf.resolve(kmeans_max_iters, "kmeans_max_iters", 50),
            snap_to_member=conf.resolve(snap, "snap", True),
        )
        input_fm = tensor_io.read_feature_map(input_path)
        emb_fm = tensor_io.read_feature_map(embedding_path)
        if emb_fm.height != 1 or emb_fm.width != 1:
            raise ParamError(
                f"embedding file must be 1x1xC, got {emb_fm.height}x{emb_fm.width}x{emb_fm.channels}"
            )
        embedding = prompt_embed.PromptEmbedding(
            emb_fm.data.reshape(-1).astype(np.float64), emb_fm.source_tag
        )
        pset = matcher.generate_prompts(input_fm, embedding, params)
        tensor_io.write_prompts(pset, out)
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    typer.echo(f"wrote {out} ({len(pset.positives)} positive / {len(pset.negatives)} negative)")


@app.command("eval")
def cmd_eval(
    manifest: Path = typer.Option(..., "--manifest", help="Dataset manifest JSON"),
    report: Path = typer.Option(..., "--report", help="Report output directory"),
    segmenter: Optional[str] = typer.Option(None, "--segmenter", help="simulated or external"),
    adapter: Optional[str] = typer.Option(None, "--adapter", help="External segmenter command"),
    k: Optional[int] = typer.Option(None, "--k"),
    c: Optional[int] = typer.Option(None, "--c"),
    mask_mode: Optional[str] = typer.Option(None, "--mask-mode", help="saliency, gt or none"),
    config: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
) -> None:
    """Evaluate a manifest and write report.csv plus report.json."""
    conf = _Config(config, {"segmenter", "adapter", "k", "c", "mask_mode"})
    segmenter = conf.resolve(segmenter, "segmenter", "simulated")
    adapter = conf.resolve(adapter, "adapter", None)
    if segmenter not in ("simulated", "external"):
        raise typer.BadParameter(f"--segmenter must be simulated or external, got {segmenter!r}")
    if segmenter == "external" and not adapter:
        raise typer.BadParameter("--segmenter external requires --adapter")
    mode = _parse_mask_mode(conf.resolve(mask_mode, "mask_mode", "saliency"))
    try:
        result = eval_harness.evaluate(
            eval_harness.load_manifest(manifest),
            matcher.MatchParams(k=conf.resolve(k, "k", 32), c=conf.resolve(c, "c", 4)),
            segmenter,
            mask_mode=mode,
            adapter_command=adapter,
        )
        csv_path, json_path = eval_harness.write_eval_report(result, report)
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    typer.echo(f"mean mIoU: {result.mean_miou}")
    if result.failures:
        typer.echo(f"flagged entries: {len(result.failures)}", err=True)
    typer.echo(f"wrote {csv_path} and {json_path}")


def _parse_int_list(raw, flag: str) -> list[int]:
    if isinstance(raw, (list, tuple)):
        values = list(raw)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise typer.BadParameter(f"{flag} config list must hold integers, got {raw!r}")
    else:
        try:
            values = [int(v) for v in str(raw).replace(",", " ").split()]
        except ValueError:
            raise typer.BadParameter(f"{flag} expects comma-separated integers, got {raw!r}")
    if not values:
        raise typer.BadParameter(f"{flag} must not be empty")
    return values


@app.command("sweep")
def cmd_sweep(
    manifest: Path = typer.Option(..., "--manifest", help="Dataset manifest JSON"),
    report: Path = typer.Option(..., "--report", help="Report output directory"),
    k_list: Optional[str] = typer.Option(None, "--k-list", help="Comma-separated K values"),
    c_list: Optional[str] = typer.Option(None, "--c-list", help="Comma-separated c values"),
    segmenter: Optional[str] = typer.Option(None, "--segmenter", help="simulated or external"),
    adapter: Optional[str] = typer.Option(None, "--adapter", help="External segmenter command"),
    mask_mode: Optional[str] = typer.Option(None, "--mask-mode", help="saliency, gt or none"),
    config: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
) -> None:
    """Evaluate every (K, c) pair and write sweep.csv plus sweep.json."""
    conf = _Config(config, {"segmenter", "adapter", "k_list", "c_list", "mask_mode"})
    k_raw = conf.resolve(k_list, "k_list", None)
    c_raw = conf.resolve(c_list, "c_list", None)
    if k_raw is None or c_raw is None:
        raise typer.BadParameter("--k-list and --c-list are required (flag or config)")
    ks = _parse_int_list(k_raw, "--k-list")
    cs = _parse_int_list(c_raw, "--c-list")
    segmenter = conf.resolve(segmenter, "segmenter", "simulated")
    adapter = conf.resolve(adapter, "adapter", None)
    if segmenter not in ("simulated", "external"):
        raise typer.BadParameter(f"--segmenter must be simulated or external, got {segmenter!r}")
    if segmenter == "external" and not adapter:
        raise typer.BadParameter("--segmenter external requires --adapter")
    mode = _parse_mask_mode(conf.resolve(mask_mode, "mask_mode", "saliency"))
    try:
        loaded = eval_harness.load_manifest(manifest)
        items = eval_harness.sweep(
            loaded, ks, cs, segmenter, mask_mode=mode, adapter_command=adapter
        )
        csv_path, json_path = eval_harness.write_sweep_report(
            items, report, loaded.prompt_set_id, mode
        )
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    evaluated = sum(1 for i in items if i.report is not None)
    skipped = sum(1 for i in items if i.skipped_reason is not None)
    typer.echo(f"evaluated {evaluated} configs, skipped {skipped}")
    typer.echo(f"wrote {csv_path} and {json_path}")


@app.command("fixture")
def cmd_fixture(
    out: Path = typer.Option(..., "--out", help="Output dataset directory"),
    images: int = typer.Option(20, "--images"),
    grid: int = typer.Option(16, "--grid"),
    channels: int = typer.Option(16, "--channels"),
    region: int = typer.Option(6, "--region"),
    patch: int = typer.Option(4, "--patch"),
    sigma: float = typer.Option(0.0, "--sigma", help="Noise amplitude on planted regions"),
    seed: int = typer.Option(0, "--seed"),
    classes: int = typer.Option(4, "--classes"),
    folds: int = typer.Option(4, "--folds"),
) -> None:
    """Generate a synthetic planted-recovery dataset with a manifest."""
    try:
        manifest_path = synthetic.make_planted_dataset(
            out,
            images=images,
            grid=grid,
            channels=channels,
            region=region,
            patch=patch,
            sigma=sigma,
            seed=seed,
            classes=classes,
            folds=folds,
        )
    except (EngineError, OSError) as exc:
        raise _fail(exc)
    typer.echo(f"wrote {manifest_path}")


def main() -> None:
    app()


if __name__ == "__main__":
    main()
