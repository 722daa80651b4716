"""Inference operations on a trained model: reconstruction, controllable
two-font mixing, random style sampling, and grid rendering.

Bit-exactness contract: every image is encoded and generated one at a
time (batch size 1), because batched and single-sample CPU convolution
reductions are not bit-identical.  With that rule, ``mix_fonts(x, x, k)``
equals ``reconstruct(x)`` exactly for every crossover ``k``, and the
``k = 0`` / ``k = S`` boundaries ignore one input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageFont

from fontfusion.glyph_data import GlyphImage
from fontfusion.networks import (
    FusionEncoder,
    Generator,
    GeneratorSpec,
    IndexOutOfRange,
    make_style_schedule,
    uniform_schedule,
)
from fontfusion.rng import fork_seed
from fontfusion.trainer import TrainConfig, load_checkpoint


class SizeMismatch(ValueError):
    """An input image does not match the model's configured size."""


class RaggedRows(ValueError):
    """Grid rows are empty or of unequal length."""


@dataclass(frozen=True)
class MixRequest:
    """A single mixing job: content image, style image, crossover index."""

    content: np.ndarray
    style: np.ndarray
    inject_index: int = 6
    checkpoint: str = ""
    use_ema: bool = True


@dataclass(frozen=True)
class LoadedModel:
    """Inference bundle: generator + encoder, gradient-free and in eval
    mode; shareable across threads."""

    g: Generator
    e: FusionEncoder
    spec: GeneratorSpec
    config: TrainConfig
    use_ema: bool

    @property
    def n_sites(self) -> int:
        return self.g.n_sites


def load_model(path: str | Path, use_ema: bool = True) -> LoadedModel:
    """Load generator (EMA weights by default) and encoder from a
    training checkpoint."""
    state = load_checkpoint(path)
    g = state.g_ema if use_ema else state.g
    for net in (g, state.e):
        net.eval()
        net.requires_grad_(False)
    return LoadedModel(
        g=g, e=state.e, spec=state.config.generator_spec(), config=state.config, use_ema=use_ema
    )


def _as_pixels(image: GlyphImage | np.ndarray, size: int) -> np.ndarray:
    px = image.pixels if isinstance(image, GlyphImage) else np.asarray(image, dtype=np.float32)
    if px.ndim != 2 or px.shape != (size, size):
        raise SizeMismatch(f"expected a {size}x{size} image, got shape {tuple(px.shape)}")
    return px


def _encode(model: LoadedModel, pixels: np.ndarray) -> torch.Tensor:
    with torch.no_grad():
        tensor = torch.from_numpy(pixels.astype(np.float32, copy=True))
        return model.e(tensor.reshape(1, 1, *pixels.shape))


def _generate(model: LoadedModel, schedule) -> np.ndarray:
    with torch.no_grad():
        out = model.g(schedule)
    return out[0, 0].numpy()


def _codepoint_of(image: GlyphImage | np.ndarray) -> int:
    return image.codepoint if isinstance(image, GlyphImage) else 0


def mix_fonts(
    model: LoadedModel,
    content_img: GlyphImage | np.ndarray,
    style_img: GlyphImage | np.ndarray,
    k: int = 6,
) -> GlyphImage:
    """Generate with the content image's code at sites below ``k`` and the
    style image's code at the rest.

    ``k = S`` ignores the style image entirely, ``k = 0`` the content
    image; the default ``k = 6`` on the 7-site model keeps structure from
    the content font and takes only the last injection from the style
    font.
    """
    if not 0 <= k <= model.n_sites:
        raise IndexOutOfRange(f"inject index {k} outside [0, {model.n_sites}]")
    w1 = _encode(model, _as_pixels(content_img, model.spec.size))
    w2 = _encode(model, _as_pixels(style_img, model.spec.size))
    pixels = _generate(model, make_style_schedule(w1, w2, k, model.n_sites))
    return GlyphImage(pixels, "mixed", _codepoint_of(content_img), model.spec.size)


def reconstruct(model: LoadedModel, img: GlyphImage | np.ndarray) -> GlyphImage:
    """Encode an image and regenerate it with its own code at every site."""
    w = _encode(model, _as_pixels(img, model.spec.size))
    pixels = _generate(model, uniform_schedule(w, model.n_sites))
    return GlyphImage(pixels, "reconstructed", _codepoint_of(img), model.spec.size)


def sample_font(model: LoadedModel, seed: int, n: int) -> list[GlyphImage]:
    """Draw ``n`` random style vectors and render one glyph per style."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = torch.Generator().manual_seed(fork_seed(seed, "sample"))
    out = []
    for i in range(n):
        z = torch.randn(1, model.spec.style_dim, generator=rng)
        pixels = _generate(model, uniform_schedule(z, model.n_sites))
        out.append(GlyphImage(pixels, f"sample{i:03d}", 0, model.spec.size))
    return out


# ---------------------------------------------------------------------------
# grid rendering
# ---------------------------------------------------------------------------

GRID_SEP = 2
_GRID_BG = 200  # separator gray
_HEADER_HEIGHT = 14


def render_grid(
    rows: Sequence[Sequence[GlyphImage | np.ndarray]],
    path: str | Path,
    col_labels: Sequence[str] | None = None,
) -> Path:
    """Tile glyphs into one PNG: cells left-to-right, rows top-to-bottom.

    Layout: width = cols * cell + (cols + 1) * sep and height mirrors it
    (plus a header band when ``col_labels`` is given), with sep = 2.
    Cells use the storage convention (0 = ink).  Deterministic bytes for
    fixed inputs.
    """
    if not rows or any(len(r) == 0 for r in rows):
        raise RaggedRows("grid needs at least one row and no empty rows")
    cols = len(rows[0])
    if any(len(r) != cols for r in rows):
        raise RaggedRows(f"rows have unequal lengths: {[len(r) for r in rows]}")
    if col_labels is not None and len(col_labels) != cols:
        raise RaggedRows(f"{len(col_labels)} labels for {cols} columns")

    first = rows[0][0]
    cell = (first.pixels if isinstance(first, GlyphImage) else np.asarray(first)).shape[0]
    grids = [[_as_pixels(img, cell) for img in row] for row in rows]

    header = _HEADER_HEIGHT if col_labels is not None else 0
    width = cols * cell + (cols + 1) * GRID_SEP
    height = len(rows) * cell + (len(rows) + 1) * GRID_SEP + header
    canvas = np.full((height, width), _GRID_BG, dtype=np.uint8)
    for ri, row in enumerate(grids):
        y = header + GRID_SEP + ri * (cell + GRID_SEP)
        for ci, px in enumerate(row):
            x = GRID_SEP + ci * (cell + GRID_SEP)
            gray = np.round((1.0 - px.astype(np.float64)) * 127.5).astype(np.uint8)
            canvas[y : y + cell, x : x + cell] = gray

    image = Image.fromarray(canvas, "L")
    if col_labels is not None:
        draw = ImageDraw.Draw(image)
        font = ImageFont.load_default()
        for ci, label in enumerate(col_labels):
            x = GRID_SEP + ci * (cell + GRID_SEP)
            draw.text((x + 1, 1), str(label), fill=0, font=font)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(str(path), format="PNG")
    return path
