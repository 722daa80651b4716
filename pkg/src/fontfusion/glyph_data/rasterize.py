"""Render single glyphs from TrueType/OpenType files to normalized rasters.

Placement convention: the glyph is drawn at high resolution, cropped to
its ink bounding box, scaled so the longer side fills 90% of the target
square, and pasted with the bounding box centered.  Grayscale coverage is
mapped linearly to [-1, +1] with full ink at +1.  The whole pipeline is
deterministic for identical inputs.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageFont

from fontfusion.glyph_data.types import EmptyGlyph, GlyphImage, MissingGlyph, UnreadableFont

# supersampled render is SUPERSAMPLE x the target size before downscaling
_SUPERSAMPLE = 4
_FILL_FRACTION = 0.9
_EMPTY_INK_THRESHOLD = 1e-4

# caches keyed by (path, mtime_ns) so rewritten files are re-read
_cmap_cache: dict[tuple[str, int], dict[int, str]] = {}
_font_cache: dict[tuple[str, int, int], ImageFont.FreeTypeFont] = {}


def _stat_key(path: Path) -> tuple[str, int]:
    try:
        st = os.stat(path)
    except OSError as exc:
        raise UnreadableFont(f"cannot read font file {path}: {exc}") from exc
    return (str(path), st.st_mtime_ns)


def _cmap(path: Path) -> dict[int, str]:
    key = _stat_key(path)
    cmap = _cmap_cache.get(key)
    if cmap is None:
        try:
            with TTFont(str(path), lazy=True) as tt:
                cmap = dict(tt.getBestCmap())
        except Exception as exc:
            raise UnreadableFont(f"cannot parse font file {path}: {exc}") from exc
        _cmap_cache[key] = cmap
    return cmap


def _pil_font(path: Path, point_size: int) -> ImageFont.FreeTypeFont:
    key = (*_stat_key(path), point_size)
    font = _font_cache.get(key)
    if font is None:
        try:
            font = ImageFont.truetype(str(path), point_size)
        except Exception as exc:
            raise UnreadableFont(f"cannot open font file {path}: {exc}") from exc
        _font_cache[key] = font
    return font


def rasterize_glyph(
    font_file: str | Path,
    codepoint: int,
    size: int = 128,
    font_id: str | None = None,
) -> GlyphImage:
    """Render one codepoint from ``font_file`` to a ``size`` x ``size`` glyph.

    Raises ``MissingGlyph`` if the font's character map lacks the
    codepoint, ``EmptyGlyph`` if the rendered ink fraction is <= 1e-4
    (e.g. spaces), and ``UnreadableFont`` for unparseable files.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    path = Path(font_file)
    if codepoint not in _cmap(path):
        raise MissingGlyph(f"U+{codepoint:04X} not in character map of {path.name}")

    font = _pil_font(path, size * _SUPERSAMPLE)
    mask = font.getmask(chr(codepoint), mode="L")
    mw, mh = mask.size
    if mw == 0 or mh == 0:
        raise EmptyGlyph(f"U+{codepoint:04X} in {path.name} rendered no ink")
    arr = np.asarray(mask, dtype=np.uint8).reshape(mh, mw)

    ys, xs = np.nonzero(arr)
    if ys.size == 0:
        raise EmptyGlyph(f"U+{codepoint:04X} in {path.name} rendered no ink")
    arr = arr[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]

    box = max(1, round(_FILL_FRACTION * size))
    scale = box / max(arr.shape)
    tw = max(1, round(arr.shape[1] * scale))
    th = max(1, round(arr.shape[0] * scale))
    glyph = Image.fromarray(arr, "L").resize((tw, th), Image.LANCZOS)

    canvas = Image.new("L", (size, size), 0)
    canvas.paste(glyph, ((size - tw) // 2, (size - th) // 2))
    pixels = np.asarray(canvas, dtype=np.float32) / 255.0 * 2.0 - 1.0

    if float((pixels > 0).mean()) <= _EMPTY_INK_THRESHOLD:
        raise EmptyGlyph(f"U+{codepoint:04X} in {path.name}: ink fraction below threshold")
    return GlyphImage(pixels, font_id if font_id is not None else path.stem, codepoint, size)
