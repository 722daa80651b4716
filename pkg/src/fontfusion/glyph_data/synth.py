"""Procedural glyph corpus with content and style separated by construction.

Each synthetic *character* is a fixed stroke skeleton (polylines in the
unit square) drawn once from the corpus seed and shared by every font.
Each synthetic *font* is a parameter bundle: stroke width, slant, jitter
amplitude, corner rounding.  Rendering composes skeleton with parameters,
so two fonts show the same character structure in different styles.
Even-indexed fonts are "printed" (zero jitter), odd-indexed fonts are
"handwritten" (visible jitter).  Everything is a pure function of the
seed: rebuilding with the same arguments is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from fontfusion.glyph_data.corpus import FontDataset, make_split
from fontfusion.glyph_data.types import FontRecord
from fontfusion.rng import fork_seed

# synthetic codepoints live in the Unicode private use area
SYNTH_CODEPOINT_BASE = 0xE000

_OVERSAMPLE = 4
_MIN_SEGMENT = 0.3  # minimum skeleton segment length, unit-square units


@dataclass(frozen=True)
class SynthFont:
    """Style parameters of one synthetic font."""

    index: int
    category: str
    stroke_width: float  # fraction of the canvas side
    slant: float  # horizontal shear factor
    jitter_amp: float  # point displacement stddev, unit-square units
    corner_round: float  # 0 = square joints, 1 = fully rounded caps


def _char_skeleton(seed: int, index: int) -> list[np.ndarray]:
    """Strokes for synthetic character ``index``: 2-4 polylines of 2-3 points."""
    rng = np.random.default_rng(fork_seed(seed, "char", index))
    strokes = []
    for _ in range(int(rng.integers(2, 5))):
        n_pts = int(rng.integers(2, 4))
        pts = [rng.uniform(0.15, 0.85, size=2)]
        while len(pts) < n_pts:
            cand = rng.uniform(0.15, 0.85, size=2)
            if np.linalg.norm(cand - pts[-1]) >= _MIN_SEGMENT:
                pts.append(cand)
        strokes.append(np.array(pts))
    return strokes


def _font_params(seed: int, index: int) -> SynthFont:
    rng = np.random.default_rng(fork_seed(seed, "font", index))
    width = float(rng.uniform(0.06, 0.12))
    slant = float(rng.uniform(-0.2, 0.2))
    corner = float(rng.uniform(0.0, 1.0))
    jitter = float(rng.uniform(0.015, 0.05))
    printed = index % 2 == 0
    return SynthFont(
        index=index,
        category="printed" if printed else "handwritten",
        stroke_width=width,
        slant=slant,
        jitter_amp=0.0 if printed else jitter,
        corner_round=corner,
    )


def _render(seed: int, font: SynthFont, char_index: int, strokes: list[np.ndarray], size: int) -> np.ndarray:
    n = size * _OVERSAMPLE
    img = Image.new("L", (n, n), 0)
    draw = ImageDraw.Draw(img)
    jitter_rng = np.random.default_rng(fork_seed(seed, "jitter", font.index, char_index))
    width_px = max(1, round(font.stroke_width * n))
    cap = font.corner_round * width_px / 2.0
    for pts in strokes:
        p = pts.copy()
        if font.jitter_amp > 0:
            p = np.clip(p + jitter_rng.normal(0.0, font.jitter_amp, p.shape), 0.05, 0.95)
        p[:, 0] = p[:, 0] + font.slant * (0.5 - p[:, 1])
        xy = [(float(x) * n, float(y) * n) for x, y in p]
        draw.line(xy, fill=255, width=width_px, joint="curve")
        if cap >= 1.0:
            for x, y in xy:
                draw.ellipse([x - cap, y - cap, x + cap, y + cap], fill=255)
    small = img.resize((size, size), Image.BOX)
    return np.asarray(small, dtype=np.float32) / 255.0 * 2.0 - 1.0


def synth_glyph_dataset(
    seed: int,
    n_fonts: int,
    n_chars: int,
    size: int = 32,
    holdout_fonts: int = 0,
    holdout_chars: int = 0,
) -> FontDataset:
    """Build a fully in-memory synthetic corpus.

    By default everything lands in the train partition; pass holdout
    counts to carve out test fonts/characters with the standard protocol.
    """
    if n_fonts < 1 or n_chars < 1:
        raise ValueError("need at least one font and one character")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")

    records = []
    fonts = []
    for i in range(n_fonts):
        params = _font_params(seed, i)
        fonts.append(params)
        records.append(
            FontRecord(
                font_id=f"synth{i:03d}",
                name=f"Synthetic {i} ({params.category})",
                category=params.category,
                source="synthetic",
            )
        )
    charset = tuple(SYNTH_CODEPOINT_BASE + j for j in range(n_chars))
    split = make_split(
        [r.font_id for r in records],
        charset,
        font_holdout=holdout_fonts,
        char_counts=(n_chars - holdout_chars, holdout_chars),
        seed=seed,
    )

    skeletons = [_char_skeleton(seed, j) for j in range(n_chars)]
    images: dict[tuple[str, int], np.ndarray] = {}
    for rec, params in zip(records, fonts):
        for j, cp in enumerate(charset):
            px = _render(seed, params, j, skeletons[j], size)
            ink = float((px > 0).mean())
            if not 0.0 < ink < 1.0:
                raise RuntimeError(f"synthetic glyph {rec.font_id}/U+{cp:04X} degenerate (ink {ink})")
            px.flags.writeable = False
            images[(rec.font_id, cp)] = px

    return FontDataset(
        records=records,
        charset=charset,
        split=split,
        size=size,
        images=images,
        skips=[],
        seed=seed,
    )
