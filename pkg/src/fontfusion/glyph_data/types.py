"""Core corpus datatypes and the glyph-data error taxonomy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CATEGORIES = ("handwritten", "printed")


class GlyphDataError(Exception):
    """Base class for corpus construction and access failures."""


class UnreadableFont(GlyphDataError):
    """Font file missing, truncated, or not parseable as TrueType/OpenType."""


class MissingGlyph(GlyphDataError):
    """The font's character map has no entry for the requested codepoint."""


class EmptyGlyph(GlyphDataError):
    """The rendered glyph carries (almost) no ink, e.g. a space."""


class InsufficientFonts(GlyphDataError):
    """Requested split needs more fonts than the corpus provides."""


class InsufficientChars(GlyphDataError):
    """Requested split needs more characters than the charset provides."""


class EmptyPartition(GlyphDataError):
    """Asked to iterate a partition that holds no images."""


class ManifestMismatch(GlyphDataError):
    """Stored corpus disagrees with its manifest (checksum or inventory)."""


@dataclass(frozen=True)
class GlyphImage:
    """One character raster: float32, square, values in [-1, +1].

    Convention: -1 is background, +1 is full ink.  Corpus producers and
    stores reject blank and fully-inked rasters before they are kept;
    the type itself also houses model outputs, which may carry any ink
    fraction.
    """

    pixels: np.ndarray
    font_id: str
    codepoint: int
    size: int = 128

    def __post_init__(self) -> None:
        px = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ValueError(f"glyph raster must be square 2-D, got shape {px.shape}")
        if px.shape[0] != self.size:
            raise ValueError(f"raster is {px.shape[0]}px but size field says {self.size}")
        if not np.isfinite(px).all():
            raise ValueError("glyph raster contains non-finite values")
        if px.min() < -1.0 or px.max() > 1.0:
            raise ValueError("glyph raster values outside [-1, +1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def ink_fraction(self) -> float:
        """Share of pixels above the ink midpoint (value > 0)."""
        return float((self.pixels > 0).mean())


@dataclass(frozen=True)
class FontRecord:
    """Identity and provenance of one font in a corpus."""

    font_id: str
    name: str
    category: str  # "handwritten" or "printed"
    source: str  # file path, or "synthetic"

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")
        if not self.font_id:
            raise ValueError("font_id must be non-empty")


@dataclass(frozen=True)
class DatasetSplit:
    """Which fonts and characters belong to training vs testing.

    Test material is (a) ``test_chars`` rendered in ``train_fonts`` and
    (b) every in-play character of the held-out ``test_fonts``.
    """

    train_fonts: tuple[str, ...]
    test_fonts: tuple[str, ...]
    train_chars: tuple[int, ...]
    test_chars: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        if set(self.train_fonts) & set(self.test_fonts):
            raise ValueError("train and test font sets overlap")
        if set(self.train_chars) & set(self.test_chars):
            raise ValueError("train and test char sets overlap")

    def to_dict(self) -> dict:
        return {
            "train_fonts": list(self.train_fonts),
            "test_fonts": list(self.test_fonts),
            "train_chars": list(self.train_chars),
            "test_chars": list(self.test_chars),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(
            train_fonts=tuple(d["train_fonts"]),
            test_fonts=tuple(d["test_fonts"]),
            train_chars=tuple(int(c) for c in d["train_chars"]),
            test_chars=tuple(int(c) for c in d["test_chars"]),
            seed=int(d["seed"]),
        )
