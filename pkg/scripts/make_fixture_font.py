"""Regenerate tests/fixtures/fixture.ttf.

A tiny TrueType font with exactly four drawable entries:

  A        filled square
  B        hollow square (square with a square hole)
  U+AC00   filled tall rectangle
  space    advance width but no contours (renders empty)

'C' (and everything else) is deliberately absent from the cmap so tests
can rely on a guaranteed missing glyph.  Deterministic output: building
twice produces byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

from fontTools.fontBuilder import FontBuilder
from fontTools.pens.ttGlyphPen import TTGlyphPen

UPM = 1000
OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "fixture.ttf"


def box(pen: TTGlyphPen, x0: int, y0: int, x1: int, y1: int, reverse: bool = False) -> None:
    pts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    if reverse:
        pts.reverse()
    pen.moveTo(pts[0])
    for p in pts[1:]:
        pen.lineTo(p)
    pen.closePath()


def main() -> None:
    glyphs = {}

    pen = TTGlyphPen(None)
    box(pen, 100, 0, 700, 700)
    glyphs["A"] = pen.glyph()

    pen = TTGlyphPen(None)
    box(pen, 100, 0, 700, 700)
    box(pen, 250, 150, 550, 550, reverse=True)
    glyphs["B"] = pen.glyph()

    pen = TTGlyphPen(None)
    box(pen, 150, -100, 650, 800)
    glyphs["uniAC00"] = pen.glyph()

    glyphs["space"] = TTGlyphPen(None).glyph()
    glyphs[".notdef"] = TTGlyphPen(None).glyph()

    order = [".notdef", "space", "A", "B", "uniAC00"]
    fb = FontBuilder(UPM, isTTF=True)
    fb.setupGlyphOrder(order)
    fb.setupCharacterMap({0x20: "space", 0x41: "A", 0x42: "B", 0xAC00: "uniAC00"})
    fb.setupGlyf(glyphs)
    fb.setupHorizontalMetrics({name: (800, 50) for name in order})
    fb.setupHorizontalHeader(ascent=800, descent=-200)
    fb.setupOS2(sTypoAscender=800, sTypoDescender=-200, usWinAscent=800, usWinDescent=200)
    fb.setupNameTable({"familyName": "Fixture", "styleName": "Regular"})
    fb.setupPost()
    # pin the head timestamps so rebuilds are byte-identical
    fb.font["head"].created = 0
    fb.font["head"].modified = 0
    OUT.parent.mkdir(parents=True, exist_ok=True)
    fb.save(str(OUT))
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
