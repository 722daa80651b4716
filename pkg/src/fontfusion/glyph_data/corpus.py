"""Corpus assembly, the split protocol, on-disk layout, and batching.

On-disk layout (see README for the full contract):

    <root>/images/<font_id>/U+XXXX.png   8-bit grayscale, no alpha, 0 = ink
    <root>/manifest.json                 records, charset, split, seed,
                                         skip log, per-file sha256 checksums

Pixel mapping is linear: PNG gray g <-> float value 1 - 2*g/255, so ink
(g = 0) is +1 and background (g = 255) is -1.  Saving then loading is
bit-exact for rasters produced by this package.
"""

from __future__ import annotations

import hashlib
import json
import math
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from fontfusion.glyph_data.rasterize import rasterize_glyph
from fontfusion.glyph_data.types import (
    DatasetSplit,
    EmptyGlyph,
    EmptyPartition,
    FontRecord,
    GlyphImage,
    InsufficientChars,
    InsufficientFonts,
    ManifestMismatch,
    MissingGlyph,
)
from fontfusion.rng import fork_seed

MANIFEST_VERSION = 1

# guards float-noise in floor(fraction * n) when the product is integral
_FLOOR_GUARD = 1e-9


def save_png(path: str | Path, pixels: np.ndarray) -> None:
    """Write a [-1, +1] raster as an 8-bit grayscale PNG (0 = full ink)."""
    gray = np.round((1.0 - np.asarray(pixels, dtype=np.float64)) * 127.5)
    Image.fromarray(gray.astype(np.uint8), "L").save(str(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG back to float32 in [-1, +1] (+1 = ink)."""
    with Image.open(str(path)) as im:
        gray = np.asarray(im.convert("L"), dtype=np.float32)
    ink = 255.0 - gray
    pixels = ink / 255.0 * 2.0 - 1.0
    if pixels.min() < -1.0 or pixels.max() > 1.0:
        raise ValueError(f"decoded pixels outside [-1, +1] in {path}")
    return pixels


def _codepoint_name(cp: int) -> str:
    return f"U+{cp:04X}"


def make_split(
    font_ids: Sequence[str],
    charset: Sequence[int],
    font_holdout: float | int,
    char_counts: float | tuple[int, int],
    seed: int,
) -> DatasetSplit:
    """Draw the train/test split deterministically from ``seed``.

    ``font_holdout``: a float is a held-out fraction (train fonts =
    floor((1 - fraction) * n)), an int is an exact held-out count.
    ``char_counts``: a float fraction (train chars = floor(fraction * n))
    or an explicit ``(train_n, test_n)`` pair; explicit counts win over
    fractions and may leave part of the charset unused.
    """
    font_ids = list(font_ids)
    charset = list(charset)
    if len(set(font_ids)) != len(font_ids):
        raise ValueError("font_ids contain duplicates")
    if len(set(charset)) != len(charset):
        raise ValueError("charset contains duplicates")
    if not font_ids:
        raise InsufficientFonts("no fonts supplied")
    if not charset:
        raise InsufficientChars("empty charset")

    rng = np.random.default_rng(fork_seed(seed, "split"))
    font_order = [font_ids[i] for i in rng.permutation(len(font_ids))]
    char_order = [charset[i] for i in rng.permutation(len(charset))]

    if isinstance(font_holdout, float):
        if not 0.0 <= font_holdout < 1.0:
            raise ValueError(f"font_holdout fraction must be in [0, 1), got {font_holdout}")
        n_train_fonts = math.floor((1.0 - font_holdout) * len(font_ids) + _FLOOR_GUARD)
    else:
        if font_holdout < 0:
            raise ValueError("font_holdout count must be >= 0")
        n_train_fonts = len(font_ids) - font_holdout
    if n_train_fonts < 1:
        raise InsufficientFonts(
            f"holdout {font_holdout} leaves {n_train_fonts} train fonts out of {len(font_ids)}"
        )

    if isinstance(char_counts, tuple):
        train_n, test_n = (int(c) for c in char_counts)
        if train_n < 1 or test_n < 0:
            raise InsufficientChars(f"invalid explicit char counts {char_counts}")
        if train_n + test_n > len(charset):
            raise InsufficientChars(
                f"requested {train_n}+{test_n} chars but charset has {len(charset)}"
            )
    else:
        if not 0.0 < char_counts <= 1.0:
            raise ValueError(f"char fraction must be in (0, 1], got {char_counts}")
        train_n = math.floor(char_counts * len(charset) + _FLOOR_GUARD)
        test_n = len(charset) - train_n
        if train_n < 1:
            raise InsufficientChars(f"fraction {char_counts} yields no train chars")

    return DatasetSplit(
        train_fonts=tuple(sorted(font_order[:n_train_fonts])),
        test_fonts=tuple(sorted(font_order[n_train_fonts:])),
        train_chars=tuple(sorted(char_order[:train_n])),
        test_chars=tuple(sorted(char_order[train_n : train_n + test_n])),
        seed=seed,
    )


@dataclass
class FontDataset:
    """A fonts x characters corpus with split metadata and an image store.

    ``images`` maps ``(font_id, codepoint)`` to a read-only float32 raster.
    Pair enumeration follows record order then charset order, so training
    never depends on codepoint values or category labels, only on pixels
    and stored order.
    """

    records: list[FontRecord]
    charset: tuple[int, ...]
    split: DatasetSplit
    size: int
    images: dict[tuple[str, int], np.ndarray]
    skips: list[tuple[str, int, str]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        ids = [r.font_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate font_id in records")
        for key, px in self.images.items():
            if px.shape != (self.size, self.size):
                raise ValueError(f"image {key} has shape {px.shape}, expected {(self.size,)*2}")
            ink = float((px > 0).mean())
            if not 0.0 < ink < 1.0:
                raise ValueError(f"stored glyph {key} is degenerate: ink fraction {ink}")

    def record(self, font_id: str) -> FontRecord:
        for rec in self.records:
            if rec.font_id == font_id:
                return rec
        raise KeyError(font_id)

    def glyph(self, font_id: str, codepoint: int) -> GlyphImage:
        px = self.images[(font_id, codepoint)]
        return GlyphImage(px, font_id, codepoint, self.size)

    def _pairs(self, fonts: Iterable[str], chars: Iterable[int]) -> list[tuple[str, int]]:
        fonts = set(fonts)
        chars = set(chars)
        out = []
        for rec in self.records:
            if rec.font_id not in fonts:
                continue
            for cp in self.charset:
                if cp in chars and (rec.font_id, cp) in self.images:
                    out.append((rec.font_id, cp))
        return out

    def train_pairs(self) -> list[tuple[str, int]]:
        return self._pairs(self.split.train_fonts, self.split.train_chars)

    def test_pairs(self) -> list[tuple[str, int]]:
        in_play = set(self.split.train_chars) | set(self.split.test_chars)
        held_chars = self._pairs(self.split.train_fonts, self.split.test_chars)
        held_fonts = self._pairs(self.split.test_fonts, in_play)
        return held_chars + held_fonts

    def pairs(self, partition: str) -> list[tuple[str, int]]:
        if partition == "train":
            return self.train_pairs()
        if partition == "test":
            return self.test_pairs()
        raise ValueError(f"partition must be 'train' or 'test', got {partition!r}")

    # ---------------------------------------------------------------- disk

    def save(self, root: str | Path) -> Path:
        """Write the corpus as PNGs plus ``manifest.json``; returns root."""
        root = Path(root)
        (root / "images").mkdir(parents=True, exist_ok=True)
        checksums: dict[str, str] = {}
        for (font_id, cp), px in sorted(self.images.items()):
            rel = f"images/{font_id}/{_codepoint_name(cp)}.png"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            save_png(path, px)
            checksums[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest = {
            "format_version": MANIFEST_VERSION,
            "size": self.size,
            "seed": self.seed,
            "records": [
                {"font_id": r.font_id, "name": r.name, "category": r.category, "source": r.source}
                for r in self.records
            ],
            "charset": list(self.charset),
            "split": self.split.to_dict(),
            "skips": [list(s) for s in self.skips],
            "checksums": checksums,
        }
        (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        return root

    @classmethod
    def load(cls, root: str | Path, verify: bool = True) -> "FontDataset":
        """Read a saved corpus; with ``verify`` checks every file checksum."""
        root = Path(root)
        manifest_path = root / "manifest.json"
        if not manifest_path.is_file():
            raise FileNotFoundError(f"no manifest.json under {root}")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format_version") != MANIFEST_VERSION:
            raise ManifestMismatch(
                f"manifest format {manifest.get('format_version')}, supported {MANIFEST_VERSION}"
            )
        records = [
            FontRecord(r["font_id"], r["name"], r["category"], r["source"])
            for r in manifest["records"]
        ]
        images: dict[tuple[str, int], np.ndarray] = {}
        for rel, digest in manifest["checksums"].items():
            path = root / rel
            if not path.is_file():
                raise ManifestMismatch(f"manifest lists {rel} but the file is missing")
            if verify:
                actual = hashlib.sha256(path.read_bytes()).hexdigest()
                if actual != digest:
                    raise ManifestMismatch(f"checksum mismatch for {rel}")
            font_id, fname = rel.split("/")[1:]
            cp = int(fname[2:-4], 16)
            px = load_png(path)
            px = np.ascontiguousarray(px, dtype=np.float32)
            px.flags.writeable = False
            images[(font_id, cp)] = px
        return cls(
            records=records,
            charset=tuple(int(c) for c in manifest["charset"]),
            split=DatasetSplit.from_dict(manifest["split"]),
            size=int(manifest["size"]),
            images=images,
            skips=[(s[0], int(s[1]), s[2]) for s in manifest["skips"]],
            seed=int(manifest["seed"]),
        )


def build_dataset(
    fonts: Sequence[FontRecord],
    charset: Sequence[int],
    font_holdout: float | int,
    char_counts: float | tuple[int, int],
    seed: int,
    size: int = 128,
    workers: int = 1,
) -> FontDataset:
    """Rasterize a real-font corpus under the split protocol.

    Every font is rendered over the in-play characters (train plus test).
    Missing or empty glyphs are skipped and logged, never fatal; an
    unreadable font file is.  Deterministic for fixed arguments, including
    across ``workers`` settings (each file depends only on its inputs).
    """
    fonts = list(fonts)
    if not fonts:
        raise InsufficientFonts("no fonts supplied")
    split = make_split([r.font_id for r in fonts], charset, font_holdout, char_counts, seed)
    in_play = set(split.train_chars) | set(split.test_chars)
    wanted = [(rec, cp) for rec in fonts for cp in charset if cp in in_play]

    def render(rec: FontRecord, cp: int):
        try:
            g = rasterize_glyph(rec.source, cp, size=size, font_id=rec.font_id)
            return (rec.font_id, cp), g.pixels, None
        except (MissingGlyph, EmptyGlyph) as exc:
            return (rec.font_id, cp), None, type(exc).__name__

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda rc: render(*rc), wanted))
    else:
        results = [render(rec, cp) for rec, cp in wanted]

    images: dict[tuple[str, int], np.ndarray] = {}
    skips: list[tuple[str, int, str]] = []
    for key, px, skip_reason in results:
        if skip_reason is None:
            images[key] = px
        else:
            skips.append((key[0], key[1], skip_reason))

    return FontDataset(
        records=fonts,
        charset=tuple(charset),
        split=split,
        size=size,
        images=images,
        skips=skips,
        seed=seed,
    )


class BatchIterator:
    """Repeatable shuffled batches over one partition.

    Epoch ``e`` uses a permutation derived from ``(seed, e)`` alone, so
    the stream is stateless: ``batch_at(step)`` addresses any batch
    directly, which makes resumed training bit-identical to an unbroken
    run.  Handed-out batches are read-only arrays of shape (B, 1, H, W).
    """

    def __init__(
        self,
        dataset: FontDataset,
        partition: str,
        batch_size: int,
        seed: int,
        drop_last: bool = False,
    ) -> None:
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        pairs = dataset.pairs(partition)
        if not pairs:
            raise EmptyPartition(f"partition {partition!r} holds no images")
        if drop_last and len(pairs) < batch_size:
            raise EmptyPartition(
                f"partition {partition!r} has {len(pairs)} items, fewer than one batch of {batch_size}"
            )
        self._stack = np.stack([dataset.images[p] for p in pairs])[:, None, :, :]
        self.batch_size = batch_size
        self.seed = seed
        self.drop_last = drop_last

    @property
    def n_items(self) -> int:
        return self._stack.shape[0]

    @property
    def batches_per_epoch(self) -> int:
        if self.drop_last:
            return self.n_items // self.batch_size
        return math.ceil(self.n_items / self.batch_size)

    def _perm(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng(fork_seed(self.seed, "epoch", epoch))
        return rng.permutation(self.n_items)

    def _take(self, indices: np.ndarray) -> np.ndarray:
        batch = np.ascontiguousarray(self._stack[indices], dtype=np.float32)
        batch.flags.writeable = False
        return batch

    def epoch(self, epoch_index: int) -> Iterator[np.ndarray]:
        perm = self._perm(epoch_index)
        for start in range(0, self.n_items, self.batch_size):
            chunk = perm[start : start + self.batch_size]
            if self.drop_last and chunk.size < self.batch_size:
                return
            yield self._take(chunk)

    def batch_at(self, step: int) -> np.ndarray:
        """Batch for global step ``step`` (epochs concatenated in order)."""
        if step < 0:
            raise ValueError("step must be >= 0")
        per = self.batches_per_epoch
        perm = self._perm(step // per)
        offset = (step % per) * self.batch_size
        chunk = perm[offset : offset + self.batch_size]
        return self._take(chunk)

    def __iter__(self) -> Iterator[np.ndarray]:
        epoch_index = 0
        while True:
            yield from self.epoch(epoch_index)
            epoch_index += 1

    def prefetch(self, depth: int = 2) -> Iterator[np.ndarray]:
        """Iterate with a background thread keeping ``depth`` batches ready."""
        if depth < 1:
            raise ValueError("prefetch depth must be >= 1")
        q: queue.Queue = queue.Queue(maxsize=depth)

        def worker() -> None:
            for batch in self:
                q.put(batch)

        threading.Thread(target=worker, daemon=True).start()
        while True:
            yield q.get()


def batch_iterator(
    dataset: FontDataset,
    partition: str,
    batch_size: int,
    seed: int,
    drop_last: bool = False,
) -> BatchIterator:
    """Construct a ``BatchIterator`` (thin functional alias)."""
    return BatchIterator(dataset, partition, batch_size, seed, drop_last=drop_last)
