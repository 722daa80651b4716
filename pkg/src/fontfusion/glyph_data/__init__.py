"""Glyph-image corpora: rasterization from font files, a procedural
synthetic generator, split protocol, on-disk layout, and batching."""

from fontfusion.glyph_data.types import (
    CATEGORIES,
    DatasetSplit,
    EmptyGlyph,
    EmptyPartition,
    FontRecord,
    GlyphDataError,
    GlyphImage,
    InsufficientChars,
    InsufficientFonts,
    ManifestMismatch,
    MissingGlyph,
    UnreadableFont,
)
from fontfusion.glyph_data.rasterize import rasterize_glyph
from fontfusion.glyph_data.synth import synth_glyph_dataset
from fontfusion.glyph_data.corpus import (
    BatchIterator,
    FontDataset,
    batch_iterator,
    build_dataset,
    load_png,
    make_split,
    save_png,
)

__all__ = [
    "CATEGORIES",
    "BatchIterator",
    "DatasetSplit",
    "EmptyGlyph",
    "EmptyPartition",
    "FontDataset",
    "FontRecord",
    "GlyphDataError",
    "GlyphImage",
    "InsufficientChars",
    "InsufficientFonts",
    "ManifestMismatch",
    "MissingGlyph",
    "UnreadableFont",
    "batch_iterator",
    "build_dataset",
    "load_png",
    "make_split",
    "rasterize_glyph",
    "save_png",
    "synth_glyph_dataset",
]
