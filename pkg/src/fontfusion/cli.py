"""Command-line entry point: corpus preparation, training, and inference.

One executable with subcommands — ``prepare``, ``synth``, ``train``,
``mix``, ``reconstruct``, ``sample``, ``grid`` — all driven by the same
flat dotted-key configuration (see :mod:`fontfusion.config`).  Shared
flags: ``--config`` (TOML file), ``--seed``, ``--out``, and repeatable
``--set key=value`` overrides; a few common keys also have dedicated
flags.  When ``--out`` is omitted, outputs land under ``$FFG_OUT`` (or
``./runs``) in a per-command subdirectory.

Exit codes: 0 success; 2 usage or configuration error; 3 I/O error
(missing or unreadable files); 4 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from fontfusion import __version__
from fontfusion.checkpoint import CheckpointCorrupt, CheckpointVersionMismatch
from fontfusion.config import (
    ConfigValueError,
    RunConfig,
    echo_config,
    load_config,
    parse_override,
)
from fontfusion.glyph_data import (
    CATEGORIES,
    FontDataset,
    FontRecord,
    GlyphDataError,
    ManifestMismatch,
    UnreadableFont,
    build_dataset,
    load_png,
    save_png,
    synth_glyph_dataset,
)
from fontfusion.mixer import load_model, mix_fonts, reconstruct, render_grid, sample_font
from fontfusion.trainer import NonFiniteLoss, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="TOML config file")
    common.add_argument("--seed", type=int, help="root random seed (config key: seed)")
    common.add_argument(
        "--out", metavar="DIR", help="output directory (default: $FFG_OUT or ./runs, per command)"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="fontfusion",
        description="Glyph style fusion: corpus tools, label-free training, style mixing.",
    )
    parser.add_argument("--version", action="version", version=f"fontfusion {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="rasterize a real-font corpus")
    p.add_argument("--fonts-dir", help="directory of .ttf/.otf files (data.fonts_dir)")
    p.add_argument("--charset-file", help="text file of characters (data.charset_file)")

    p = sub.add_parser("synth", parents=[common], help="build a synthetic corpus")
    p.add_argument("--n-fonts", type=int, help="synth.n_fonts")
    p.add_argument("--n-chars", type=int, help="synth.n_chars")
    p.add_argument("--size", type=int, help="raster size in pixels (synth.size)")

    p = sub.add_parser("train", parents=[common], help="train on a prepared corpus")
    p.add_argument("--data", help="corpus directory (train.data)")
    p.add_argument("--resume", help="checkpoint to continue from (train.resume)")
    p.add_argument("--steps", type=int, help="total iterations (train.total_steps)")

    p = sub.add_parser("mix", parents=[common], help="mix two glyph styles")
    p.add_argument("--content", help="content glyph PNG (mix.content)")
    p.add_argument("--style", help="style glyph PNG (mix.style)")
    p.add_argument("--inject-index", type=int, help="crossover site (mix.inject_index)")
    p.add_argument("--checkpoint", help="training checkpoint (mix.checkpoint)")

    p = sub.add_parser("reconstruct", parents=[common], help="encode and regenerate a glyph")
    p.add_argument("--input", help="glyph PNG (reconstruct.input)")
    p.add_argument("--checkpoint", help="training checkpoint (reconstruct.checkpoint)")

    p = sub.add_parser("sample", parents=[common], help="render glyphs from random styles")
    p.add_argument("--checkpoint", help="training checkpoint (sample.checkpoint)")
    p.add_argument("--n", type=int, help="number of samples (sample.n)")

    p = sub.add_parser("grid", parents=[common], help="tile a directory of PNGs into one image")
    p.add_argument("--inputs", help="directory of PNGs (grid.inputs)")
    p.add_argument("--columns", type=int, help="cells per row (grid.columns)")
    return parser


# Dedicated flags and the config keys they override, per command.
_FLAG_KEYS = {
    "prepare": {"fonts_dir": "data.fonts_dir", "charset_file": "data.charset_file"},
    "synth": {"n_fonts": "synth.n_fonts", "n_chars": "synth.n_chars", "size": "synth.size"},
    "train": {"data": "train.data", "resume": "train.resume", "steps": "train.total_steps"},
    "mix": {
        "content": "mix.content",
        "style": "mix.style",
        "inject_index": "mix.inject_index",
        "checkpoint": "mix.checkpoint",
    },
    "reconstruct": {"input": "reconstruct.input", "checkpoint": "reconstruct.checkpoint"},
    "sample": {"checkpoint": "sample.checkpoint", "n": "sample.n"},
    "grid": {"inputs": "grid.inputs", "columns": "grid.columns"},
}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, object] = {}
    for text in args.overrides:
        key, value = parse_override(text)
        overrides[key] = value
    for attr, key in _FLAG_KEYS[args.command].items():
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _resolve_out(args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get("FFG_OUT") or "runs"
    return Path(root) / args.command


def _require(cfg: RunConfig, key: str, hint: str) -> str:
    value = str(cfg[key])
    if not value:
        raise ConfigValueError(f"{key} must be set ({hint})")
    return value


def _charset(cfg: RunConfig) -> tuple[int, ...]:
    file_key = str(cfg["data.charset_file"])
    if file_key:
        text = Path(file_key).read_text(encoding="utf-8")
    else:
        text = str(cfg["data.charset"])
    chars = [c for c in text if not c.isspace()]
    if not chars:
        raise ConfigValueError("no characters: set data.charset or data.charset_file")
    return tuple(ord(c) for c in chars)


def cmd_prepare(cfg: RunConfig, out: Path) -> int:
    fonts_dir = Path(_require(cfg, "data.fonts_dir", "or pass --fonts-dir"))
    if not fonts_dir.is_dir():
        raise FileNotFoundError(f"font directory not found: {fonts_dir}")
    files = sorted(p for p in fonts_dir.rglob("*") if p.suffix.lower() in {".ttf", ".otf"})
    if not files:
        raise FileNotFoundError(f"no .ttf/.otf files under {fonts_dir}")
    default_category = str(cfg["data.default_category"])
    records = [
        FontRecord(
            font_id=path.stem,
            name=path.stem,
            category=path.parent.name if path.parent.name in CATEGORIES else default_category,
            source=str(path),
        )
        for path in files
    ]
    train_n, test_n = int(cfg["data.train_chars"]), int(cfg["data.test_chars"])
    if (train_n > 0) != (test_n > 0):
        raise ConfigValueError("set both data.train_chars and data.test_chars, or neither")
    char_holdout = float(cfg["data.char_holdout"])
    if not 0.0 <= char_holdout < 1.0:
        raise ConfigValueError(f"data.char_holdout must be in [0, 1), got {char_holdout}")
    char_counts = (train_n, test_n) if train_n > 0 else 1.0 - char_holdout
    dataset = build_dataset(
        records,
        _charset(cfg),
        font_holdout=float(cfg["data.font_holdout"]),
        char_counts=char_counts,
        seed=int(cfg["seed"]),
        size=int(cfg["data.size"]),
        workers=int(cfg["data.workers"]),
    )
    dataset.save(out)
    echo_config(out, cfg, __version__)
    print(f"prepared {len(dataset.images)} glyphs ({len(dataset.skips)} skipped) -> {out}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    dataset = synth_glyph_dataset(
        seed=int(cfg["seed"]),
        n_fonts=int(cfg["synth.n_fonts"]),
        n_chars=int(cfg["synth.n_chars"]),
        size=int(cfg["synth.size"]),
        holdout_fonts=int(cfg["synth.holdout_fonts"]),
        holdout_chars=int(cfg["synth.holdout_chars"]),
    )
    dataset.save(out)
    echo_config(out, cfg, __version__)
    print(f"synthesized {len(dataset.images)} glyphs -> {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Path) -> int:
    data_dir = _require(cfg, "train.data", "corpus directory from prepare/synth")
    dataset = FontDataset.load(data_dir)
    echo_config(out, cfg, __version__)  # before the long run, so crashes stay traceable
    resume = str(cfg["train.resume"]) or None
    state, rows = train(cfg.train_config(), dataset, out_dir=out, resume=resume)
    last = rows[-1] if rows else {}
    summary = " ".join(f"{k}={v:.4f}" for k, v in last.items() if k != "step")
    print(f"trained {state.step} steps -> {out}")
    if summary:
        print(f"last logged step {int(last['step'])}: {summary}")
    return EXIT_OK


def cmd_mix(cfg: RunConfig, out: Path) -> int:
    model = load_model(
        _require(cfg, "mix.checkpoint", "or pass --checkpoint"),
        use_ema=bool(cfg["mix.use_ema"]),
    )
    content = load_png(_require(cfg, "mix.content", "or pass --content"))
    style = load_png(_require(cfg, "mix.style", "or pass --style"))
    result = mix_fonts(model, content, style, int(cfg["mix.inject_index"]))
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "mixed.png", result.pixels)
    echo_config(out, cfg, __version__)
    print(f"mixed at index {int(cfg['mix.inject_index'])} -> {out / 'mixed.png'}")
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, out: Path) -> int:
    model = load_model(
        _require(cfg, "reconstruct.checkpoint", "or pass --checkpoint"),
        use_ema=bool(cfg["reconstruct.use_ema"]),
    )
    image = load_png(_require(cfg, "reconstruct.input", "or pass --input"))
    result = reconstruct(model, image)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "reconstructed.png", result.pixels)
    echo_config(out, cfg, __version__)
    print(f"reconstructed -> {out / 'reconstructed.png'}")
    return EXIT_OK


def cmd_sample(cfg: RunConfig, out: Path) -> int:
    model = load_model(
        _require(cfg, "sample.checkpoint", "or pass --checkpoint"),
        use_ema=bool(cfg["sample.use_ema"]),
    )
    glyphs = sample_font(model, seed=int(cfg["seed"]), n=int(cfg["sample.n"]))
    out.mkdir(parents=True, exist_ok=True)
    for glyph in glyphs:
        save_png(out / f"{glyph.font_id}.png", glyph.pixels)
    echo_config(out, cfg, __version__)
    print(f"sampled {len(glyphs)} glyphs -> {out}")
    return EXIT_OK


def cmd_grid(cfg: RunConfig, out: Path) -> int:
    inputs = Path(_require(cfg, "grid.inputs", "directory of PNGs, or pass --inputs"))
    if not inputs.is_dir():
        raise FileNotFoundError(f"grid input directory not found: {inputs}")
    files = sorted(inputs.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no .png files under {inputs}")
    columns = int(cfg["grid.columns"])
    if columns < 1:
        raise ConfigValueError("grid.columns must be >= 1")
    if len(files) % columns:
        raise ConfigValueError(f"{len(files)} PNGs cannot tile into rows of {columns}")
    images = [load_png(p) for p in files]
    rows = [images[i : i + columns] for i in range(0, len(images), columns)]
    labels_text = str(cfg["grid.labels"])
    labels = [s.strip() for s in labels_text.split(",")] if labels_text else None
    render_grid(rows, out / "grid.png", col_labels=labels)
    echo_config(out, cfg, __version__)
    print(f"tiled {len(files)} PNGs into {len(rows)}x{columns} -> {out / 'grid.png'}")
    return EXIT_OK


_COMMANDS = {
    "prepare": cmd_prepare,
    "synth": cmd_synth,
    "train": cmd_train,
    "mix": cmd_mix,
    "reconstruct": cmd_reconstruct,
    "sample": cmd_sample,
    "grid": cmd_grid,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        cfg = _resolve_config(args)
        return _COMMANDS[args.command](cfg, _resolve_out(args))
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        CheckpointCorrupt,
        CheckpointVersionMismatch,
        ManifestMismatch,
        UnreadableFont,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, GlyphDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
