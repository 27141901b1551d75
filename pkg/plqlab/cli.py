"""plqlab CLI: face image quality and pixel-level quality maps."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

try:
    from typer._click.exceptions import Abort, Exit, UsageError
except ImportError:  # typer before 0.26 raises click's own
    from click.exceptions import Abort, Exit, UsageError

from . import __version__
from .banner import print_banner, print_divider, status_icon
from .constants import (
    DEFAULT_CLIP_NORM,
    DEFAULT_DROPOUT,
    DEFAULT_PASSES,
    DEFAULT_REPEATS,
    DEFAULT_SEED,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    MASK_FILL_VALUE,
    PRESETS,
    TOY_ACCURACY_GATE,
    TOY_BATCH_SIZE,
    TOY_EPOCHS,
    TOY_IDENTITIES,
    TOY_LEARNING_RATE,
    TOY_SAMPLES_PER_IDENTITY,
    WEIGHT_SUFFIX,
    ScalingPreset,
    fmt_float,
)
from .errors import ConfigError, DataError, PlqError
from .experiments import (
    FillMode,
    RegionSource,
    make_restoration_pairs,
    records_frame,
    restoration_frame,
    run_mask_experiment,
    run_restoration_experiment,
    summary_frame,
    write_csv,
)
from .facemodel import EmbeddingModel, load, make_dataset, save, trace, train_toy
from .fiq import FiqConfig, calibrate_scaling, quality, quality_distribution, quality_stats
from .imageio import load_corpus, read_image, render_heatmap, write_image, write_rendered
from .logs import configure_logging
from .parallel import ordered_map
from .plq import (
    PlqOptions,
    WeightMode,
    build_head,
    calibrate_gamma,
    check_saliency,
    plq_map_with,
    read_plq_csv,
    write_plq_csv,
)
from .regions import Region

console = Console(stderr=True)
app = typer.Typer(
    name="plqlab",
    help="plqlab: pixel-level face image quality",
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)


# ── Shared options ─────────────────────────────────────
ModelOpt = typer.Option(..., "--model", help=f"Weight file ({WEIGHT_SUFFIX}).")
SeedOpt = typer.Option(DEFAULT_SEED, "--seed", min=0, help="Seed for every random stream.")
PassesOpt = typer.Option(DEFAULT_PASSES, "--m", help="Stochastic forward passes.")
DropoutOpt = typer.Option(DEFAULT_DROPOUT, "--dropout", help="Dropout probability p_d.")
AlphaOpt = typer.Option(None, "--alpha", help="Scaling slope (default: preset).")
ROpt = typer.Option(None, "--r", help="Scaling center (default: preset).")
GammaOpt = typer.Option(None, "--gamma", help="Visualization exponent (default: preset).")
PresetOpt = typer.Option("arcface", "--preset", help="arcface | facenet")
NormalizeOpt = typer.Option(False, "--normalize-embeddings", help="Unit-normalize stochastic embeddings.")
ClipOpt = typer.Option(DEFAULT_CLIP_NORM, "--clip-norm", help="Backward-step gradient norm bound.")
NoClipOpt = typer.Option(False, "--no-clip", help="Disable gradient clipping.")
WeightModeOpt = typer.Option(
    WeightMode.LITERAL.value, "--weight-mode", help="paper-literal (alias: uniform) | sign-corrected"
)
WorkersOpt = typer.Option(None, "--workers", min=1, help="Worker threads (default: physical cores).")
OutTextOpt = typer.Option(None, "--out", help="Also write the result lines to this file.")


def _preset(name: str) -> ScalingPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}") from None


def _fiq_config(
    preset: str, m: int, dropout: float, alpha: float | None, r: float | None, normalize: bool, seed: int
) -> FiqConfig:
    p = _preset(preset)
    return FiqConfig(
        m=m,
        p_d=dropout,
        alpha=p.alpha if alpha is None else alpha,
        r=p.r if r is None else r,
        normalize_embeddings=normalize,
        seed=seed,
    )


def _plq_options(preset: str, gamma: float | None, weight_mode: str, clip_norm: float, no_clip: bool) -> PlqOptions:
    try:
        mode = WeightMode(weight_mode)
    except ValueError:
        raise ConfigError(f"unknown weight mode {weight_mode!r}") from None
    return PlqOptions(
        gamma=_preset(preset).gamma if gamma is None else gamma,
        weight_mode=mode,
        clip_norm=None if no_clip else clip_norm,
    )


def _corpus(directory: Path, model: EmbeddingModel) -> list[tuple[str, np.ndarray]]:
    corpus = load_corpus(directory)
    if not corpus:
        raise DataError(f"no .ppm or .png images in {directory}")
    for image_id, image in corpus:
        if image.shape != model.input_shape:
            raise DataError(f"{image_id}: image shape {image.shape} does not match model input {model.input_shape}")
    return corpus


def _q_line(q_raw: float, q_scaled: float) -> str:
    return f"q_raw={fmt_float(q_raw)} q_scaled={fmt_float(q_scaled)}"


def _emit(lines: list[str], out: Path | None) -> None:
    for line in lines:
        typer.echo(line)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(lines) + "\n")


# ── callback ───────────────────────────────────────────
def _version_callback(value: bool) -> None:
    if value:
        print_banner(console, compact=True)
        raise typer.Exit()


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", help="Debug logging on stderr."),
    version: bool = typer.Option(
        False, "--version", callback=_version_callback, is_eager=True, help="Show version and exit.",
    ),
) -> None:
    """plqlab: pixel-level face image quality."""
    configure_logging(verbose)


# ── version ────────────────────────────────────────────
@app.command()
def version() -> None:
    """Print version information."""
    print_banner(console)
    console.print(f"  numpy {np.__version__}  pandas {pd.__version__}")
    typer.echo(__version__)


# ── quality ────────────────────────────────────────────
@app.command("quality")
def quality_cmd(
    image: Path = typer.Argument(..., help="Face image (.ppm / .png)."),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    alpha: Optional[float] = AlphaOpt,
    r: Optional[float] = ROpt,
    preset: str = PresetOpt,
    normalize_embeddings: bool = NormalizeOpt,
    repeats: Optional[int] = typer.Option(None, "--repeats", help="Also report mean and std over N reseeded runs."),
    out: Optional[Path] = OutTextOpt,
    gamma: Optional[float] = GammaOpt,
    clip_norm: float = ClipOpt,
    no_clip: bool = NoClipOpt,
    weight_mode: str = WeightModeOpt,
    workers: Optional[int] = WorkersOpt,
) -> None:
    """Image-level quality from stochastic embeddings.

    Map flags (--gamma, --clip-norm, --weight-mode) are validated but do
    not change the quality.
    """
    config = _fiq_config(preset, m, dropout, alpha, r, normalize_embeddings, seed)
    _plq_options(preset, gamma, weight_mode, clip_norm, no_clip)
    net = load(model)
    img = read_image(image)
    result = quality(net, img, config)
    lines = [_q_line(result.q_raw, result.q_scaled)]
    if repeats is not None:
        stats = quality_stats(net, img, config, repeats, workers=workers)
        lines.append(f"mean={fmt_float(stats.mean)} std={fmt_float(stats.std)}")
    _emit(lines, out)


# ── map ────────────────────────────────────────────────
@app.command("map")
def map_cmd(
    image: Path = typer.Argument(..., help="Face image (.ppm / .png)."),
    out: Path = typer.Option(..., "--out", help="PLQ map CSV."),
    heatmap: Optional[Path] = typer.Option(None, "--heatmap", help="Heatmap image (default: --out with .ppm)."),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    alpha: Optional[float] = AlphaOpt,
    r: Optional[float] = ROpt,
    gamma: Optional[float] = GammaOpt,
    preset: str = PresetOpt,
    normalize_embeddings: bool = NormalizeOpt,
    clip_norm: float = ClipOpt,
    no_clip: bool = NoClipOpt,
    weight_mode: str = WeightModeOpt,
) -> None:
    """Pixel-level quality map: CSV plus ryg-v1 heatmap."""
    config = _fiq_config(preset, m, dropout, alpha, r, normalize_embeddings, seed)
    options = _plq_options(preset, gamma, weight_mode, clip_norm, no_clip)
    result, plq = plq_map_with(load(model), read_image(image), config, options)
    write_plq_csv(plq, out)
    write_rendered(render_heatmap(plq), heatmap or out.with_suffix(".ppm"))
    typer.echo(_q_line(result.q_raw, result.q_scaled))


# ── render ─────────────────────────────────────────────
@app.command()
def render(
    csv: Path = typer.Argument(..., help="PLQ map CSV."),
    out: Path = typer.Option(..., "--out", help="Heatmap image (.ppm / .png)."),
) -> None:
    """Render a PLQ CSV with the ryg-v1 colormap."""
    if not csv.is_file():
        raise DataError(f"PLQ CSV not found: {csv}")
    write_rendered(render_heatmap(read_plq_csv(csv)), out)
    typer.echo(str(out))


# ── calibrate-scale ────────────────────────────────────
@app.command("calibrate-scale")
def calibrate_scale_cmd(
    directory: Path = typer.Argument(..., help="Development images."),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    normalize_embeddings: bool = NormalizeOpt,
    out: Optional[Path] = OutTextOpt,
    workers: Optional[int] = WorkersOpt,
) -> None:
    """Fit α and r so the development mean ± 2 std maps to 0.05 / 0.95."""
    net = load(model)
    corpus = _corpus(directory, net)
    config = FiqConfig(m=m, p_d=dropout, normalize_embeddings=normalize_embeddings, seed=seed)
    q_raws = ordered_map(lambda item: quality(net, item[1], config).q_raw, corpus, workers)
    cal = calibrate_scaling(q_raws)
    dist = quality_distribution(q_raws, cal.alpha, cal.r)

    table = Table(title="Quality distribution", show_header=True, header_style="bold")
    table.add_column("")
    for name in ("min", "q1", "median", "q3", "max"):
        table.add_column(name, justify="right")
    for row, values in dist.items():
        table.add_row(row, *(f"{v:.4f}" for v in values))
    console.print(table)
    _emit([f"alpha={fmt_float(cal.alpha)} r={fmt_float(cal.r)}"], out)


# ── calibrate-gamma ────────────────────────────────────
@app.command("calibrate-gamma")
def calibrate_gamma_cmd(
    directory: Path = typer.Argument(..., help="Reference images."),
    face_box: str = typer.Option(..., "--face-box", help="top,left,height,width"),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    alpha: Optional[float] = AlphaOpt,
    r: Optional[float] = ROpt,
    preset: str = PresetOpt,
    normalize_embeddings: bool = NormalizeOpt,
    clip_norm: float = ClipOpt,
    no_clip: bool = NoClipOpt,
    weight_mode: str = WeightModeOpt,
    out: Optional[Path] = OutTextOpt,
    workers: Optional[int] = WorkersOpt,
) -> None:
    """Pick γ so the 95th percentile of face-box saliency renders at 0.9."""
    box = Region.parse(face_box)
    net = load(model)
    corpus = _corpus(directory, net)
    config = _fiq_config(preset, m, dropout, alpha, r, normalize_embeddings, seed)
    options = _plq_options(preset, None, weight_mode, clip_norm, no_clip)
    s_hats = ordered_map(lambda item: plq_map_with(net, item[1], config, options)[1].merged_saliency, corpus, workers)
    _emit([f"gamma={fmt_float(calibrate_gamma(s_hats, box))}"], out)


# ── mask-exp ───────────────────────────────────────────
def _parse_sizes(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"sizes must be comma-separated integers, got {text!r}") from None


def _parse_fill(text: str) -> float | tuple[float, ...]:
    try:
        parts = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise ConfigError(f"fill value must be one or three numbers, got {text!r}") from None
    return parts[0] if len(parts) == 1 else parts


@app.command("mask-exp")
def mask_exp_cmd(
    directory: Path = typer.Argument(..., help="Corpus of face images."),
    out: Path = typer.Option(..., "--out", help="Output directory for records.csv and summary.csv."),
    sizes: Optional[str] = typer.Option(None, "--sizes", help="Mask sides in pixels (default: by resolution)."),
    fill_value: str = typer.Option(str(MASK_FILL_VALUE), "--fill-value", help="Gray level or r,g,b."),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    alpha: Optional[float] = AlphaOpt,
    r: Optional[float] = ROpt,
    gamma: Optional[float] = GammaOpt,
    preset: str = PresetOpt,
    normalize_embeddings: bool = NormalizeOpt,
    clip_norm: float = ClipOpt,
    no_clip: bool = NoClipOpt,
    weight_mode: str = WeightModeOpt,
    workers: Optional[int] = WorkersOpt,
) -> None:
    """Random black squares: Δ quality per image and size."""
    net = load(model)
    corpus = _corpus(directory, net)
    result = run_mask_experiment(
        net,
        corpus,
        sizes=_parse_sizes(sizes),
        fiq_config=_fiq_config(preset, m, dropout, alpha, r, normalize_embeddings, seed),
        options=_plq_options(preset, gamma, weight_mode, clip_norm, no_clip),
        seed=seed,
        fill_value=_parse_fill(fill_value),
        workers=workers,
    )
    summary = summary_frame(result.records)
    write_csv(records_frame(result.records), out / "records.csv")
    write_csv(summary, out / "summary.csv")

    print_divider(console)
    for row in summary.itertuples(index=False):
        console.print(
            f"  {status_icon(row.frac_positive_dq > 0.5)} size {row.size:>3}  "
            f"n={row.n}  Δq>0 {row.frac_positive_dq:.0%}  median Δq {row.median_dq:+.4f}"
        )
    for skip in result.skipped:
        console.print(f"  [yellow]skipped[/] {skip.image_id} size {skip.size}")
    print_divider(console)
    typer.echo(str(out / "records.csv"))


# ── restore-exp ────────────────────────────────────────
@app.command("restore-exp")
def restore_exp_cmd(
    directory: Path = typer.Argument(..., help="Corpus of clean face images."),
    out: Path = typer.Option(..., "--out", help="Output directory for restoration.csv."),
    size: int = typer.Option(..., "--size", help="Side of the masked and refilled square."),
    fill_mode: str = typer.Option(FillMode.MEAN_FILL.value, "--fill-mode", help="mean_fill | blur_fill"),
    region_source: str = typer.Option(RegionSource.RANDOM.value, "--region-source", help="random | lowest-plq"),
    repeats: int = typer.Option(DEFAULT_REPEATS, "--repeats", help="Reseeded quality runs per image."),
    model: Path = ModelOpt,
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    alpha: Optional[float] = AlphaOpt,
    r: Optional[float] = ROpt,
    gamma: Optional[float] = GammaOpt,
    preset: str = PresetOpt,
    normalize_embeddings: bool = NormalizeOpt,
    clip_norm: float = ClipOpt,
    no_clip: bool = NoClipOpt,
    weight_mode: str = WeightModeOpt,
    workers: Optional[int] = WorkersOpt,
) -> None:
    """Mask, refill, and measure how much quality the fill recovers."""
    try:
        mode, source = FillMode(fill_mode), RegionSource(region_source)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    net = load(model)
    corpus = _corpus(directory, net)
    config = _fiq_config(preset, m, dropout, alpha, r, normalize_embeddings, seed)
    options = _plq_options(preset, gamma, weight_mode, clip_norm, no_clip)
    pairs, skipped = make_restoration_pairs(net, corpus, size, mode, source, config, options, seed)
    report = run_restoration_experiment(net, pairs, config, options, repeats, workers)
    write_csv(restoration_frame(report.outcomes), out / "restoration.csv")

    print_divider(console)
    console.print(f"  {status_icon(report.fraction_improved > 0.5)} improved   {report.fraction_improved:.0%}")
    console.print(f"  {status_icon(report.median_gain > 0)} median Δq  {report.median_gain:+.4f}")
    if report.median_std is not None:
        console.print(f"  {status_icon(bool(report.gain_exceeds_noise))} median std {report.median_std:.4f}")
    for skip in skipped:
        console.print(f"  [yellow]skipped[/] {skip.image_id} size {skip.size}")
    print_divider(console)
    typer.echo(
        f"fraction_improved={fmt_float(report.fraction_improved)} median_gain={fmt_float(report.median_gain)}"
    )


# ── train-toy ──────────────────────────────────────────
@app.command("train-toy")
def train_toy_cmd(
    out: Path = typer.Option(..., "--out", help=f"Weight file to write ({WEIGHT_SUFFIX})."),
    identities: int = typer.Option(TOY_IDENTITIES, "--identities", help="Synthetic identities."),
    samples: int = typer.Option(TOY_SAMPLES_PER_IDENTITY, "--samples", help="Samples per identity."),
    epochs: int = typer.Option(TOY_EPOCHS, "--epochs"),
    lr: float = typer.Option(TOY_LEARNING_RATE, "--lr", help="Peak Adam step size (cosine-decayed)."),
    batch_size: int = typer.Option(TOY_BATCH_SIZE, "--batch-size"),
    seed: int = SeedOpt,
    dropout: float = DropoutOpt,
) -> None:
    """Train the toy-16 embedding model on synthetic faces."""
    data = make_dataset(identities, samples, seed=seed)
    result = train_toy(data, epochs=epochs, lr=lr, seed=seed, batch_size=batch_size, dropout_p=dropout)
    save(result.model, out)
    console.print(f"  {status_icon(result.accuracy > TOY_ACCURACY_GATE)} training accuracy {result.accuracy:.1%}")
    typer.echo(str(out))


# ── gen-synthetic ──────────────────────────────────────
@app.command("gen-synthetic")
def gen_synthetic_cmd(
    out: Path = typer.Option(..., "--out", help="Output directory."),
    identities: int = typer.Option(10, "--identities"),
    samples: int = typer.Option(4, "--samples", help="Samples per identity."),
    seed: int = SeedOpt,
) -> None:
    """Write a synthetic PPM corpus plus faces.csv with labels and head boxes."""
    data = make_dataset(identities, samples, seed=seed)
    rows = []
    for sample in data:
        write_image(sample.image, out / f"{sample.image_id}.ppm")
        box = sample.spec.head_box()
        rows.append((sample.image_id, sample.label, box.top, box.left, box.height, box.width))
    frame = pd.DataFrame(rows, columns=["image_id", "label", "top", "left", "height", "width"])
    write_csv(frame, out / "faces.csv")
    typer.echo(f"{len(data)} images written to {out}")


# ── check-grad ─────────────────────────────────────────
@app.command("check-grad")
def check_grad_cmd(
    image: Path = typer.Argument(..., help="Face image (.ppm / .png)."),
    model: Path = ModelOpt,
    top_k: int = typer.Option(100, "--top-k", help="Largest-magnitude entries to compare."),
    tolerance: float = typer.Option(1e-5, "--tolerance"),
    seed: int = SeedOpt,
    m: int = PassesOpt,
    dropout: float = DropoutOpt,
    preset: str = PresetOpt,
    weight_mode: str = WeightModeOpt,
) -> None:
    """Compare analytic saliency with central finite differences."""
    net = load(model)
    img = read_image(image)
    config = _fiq_config(preset, m, dropout, None, None, False, seed)
    head = build_head(trace(net, img).output, quality(net, img, config).q_scaled, weight_mode)
    report = check_saliency(net, img, head, top_k=top_k)
    ok = report.passed(tolerance)
    console.print(f"  {status_icon(ok)} {len(report.indices)} entries, {report.retried} kink retries")
    typer.echo(f"max_rel_error={fmt_float(report.max_error)}")
    if not ok:
        raise typer.Exit(EXIT_NUMERIC)


# ── entry points ───────────────────────────────────────
def cli_dispatch(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        result = app(args=list(argv) if argv is not None else None, prog_name="plqlab", standalone_mode=False)
    except UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except Exit as exc:
        return exc.exit_code
    except Abort:
        return EXIT_USAGE
    except PlqError as exc:
        console.print(f"[red]error:[/] {exc}")
        return exc.exit_code
    return result if isinstance(result, int) else EXIT_OK


def run() -> None:
    sys.exit(cli_dispatch())
