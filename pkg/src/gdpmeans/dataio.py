"""Dataset loading, RMS standardization, shuffling and image blocks."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .errors import BadDimensions, EmptyDataset, InputError, ZeroVariance

__all__ = [
    "BLOCK",
    "Dataset",
    "ImageBlocks",
    "apply_label_map",
    "blockify",
    "deblockify",
    "load_csv",
    "load_label_map",
    "quantized_image",
    "read_ppm",
    "shuffle",
    "standardize",
    "write_ppm",
]

log = logging.getLogger(__name__)

BLOCK = 8
MISSING = {"", "?", "na", "nan", "null"}


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray
    true_labels: np.ndarray | None = None
    feature_names: list | None = None
    label_names: list | None = None
    dropped_rows: int = 0

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def L(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ImageBlocks:
    blocks: np.ndarray
    grid: tuple
    pixel_depth: int = 8


def _parse(cell: str):
    s = cell.strip()
    if s.lower() in MISSING:
        return None
    try:
        return float(s)
    except ValueError:
        return None


def _is_header(row, label_column) -> bool:
    cells = [c.strip() for c in row]
    if _is_index(label_column):
        del cells[int(label_column) % len(cells)]
    elif label_column is not None:
        return label_column in cells
    return any(_parse(c) is None and c.lower() not in MISSING for c in cells)


def _is_index(label_column) -> bool:
    if isinstance(label_column, int):
        return True
    return isinstance(label_column, str) and label_column.lstrip("-").isdigit()


def load_csv(path, label_column=None) -> Dataset:
    """Read a comma-separated numeric table.

    A first row with any non-numeric cell is taken as the header.
    ``label_column`` is a header name or a column index (negative indices
    count from the end); its values are factorized in order of first
    appearance.  Rows with a missing or unparsable feature cell, or a blank
    label, are dropped and counted.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyDataset(f"{path} contains no rows")
    header = None
    if _is_header(rows[0], label_column):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(header) if header else len(rows[0])
    label_idx = None
    if label_column is not None:
        if not _is_index(label_column):
            if header is None or label_column not in header:
                raise InputError(f"label column {label_column!r} not found")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column) % width
    feature_idx = [j for j in range(width) if j != label_idx]

    features, raw_labels, dropped = [], [], 0
    for row in rows:
        if len(row) != width:
            dropped += 1
            continue
        values = [_parse(row[j]) for j in feature_idx]
        if any(v is None for v in values):
            dropped += 1
            continue
        if label_idx is not None:
            lab = row[label_idx].strip()
            if lab.lower() in MISSING:
                dropped += 1
                continue
            raw_labels.append(lab)
        features.append(values)
    if dropped:
        log.info("dropped %d row(s) with missing values from %s", dropped, path)
    if not features:
        raise EmptyDataset(f"no complete rows in {path}")

    labels = names = None
    if label_idx is not None:
        codes: dict[str, int] = {}
        labels = np.array([codes.setdefault(v, len(codes)) for v in raw_labels], dtype=np.int64)
        names = list(codes)
    feature_names = [header[j] for j in feature_idx] if header else None
    return Dataset(np.array(features, dtype=float), labels, feature_names, names, dropped)


def load_label_map(path) -> dict:
    """Two-column CSV ``from_label,to_label``; a header row is skipped."""
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputError(f"label map row {i + 1} must have two columns")
            src, dst = (c.strip() for c in row)
            if i == 0 and (src, dst) == ("from_label", "to_label"):
                continue
            mapping[src] = dst
    return mapping


def apply_label_map(ds: Dataset, mapping: dict) -> Dataset:
    """Relabel by original label name and refactorize."""
    if ds.true_labels is None:
        raise InputError("a label map needs a label column")
    raw = [ds.label_names[k] for k in ds.true_labels]
    mapped = [mapping.get(v, v) for v in raw]
    codes: dict[str, int] = {}
    labels = np.array([codes.setdefault(v, len(codes)) for v in mapped], dtype=np.int64)
    return replace(ds, true_labels=labels, label_names=list(codes))


def standardize(ds: Dataset) -> Dataset:
    """Divide each column by its root mean square (no centering)."""
    rms = np.sqrt(np.mean(ds.data**2, axis=0))
    if np.any(rms == 0):
        cols = np.flatnonzero(rms == 0).tolist()
        raise ZeroVariance(f"column(s) {cols} are identically zero")
    return replace(ds, data=ds.data / rms)


def shuffle(ds: Dataset, seed) -> Dataset:
    perm = np.random.default_rng(seed).permutation(ds.n)
    labels = None if ds.true_labels is None else ds.true_labels[perm]
    return replace(ds, data=ds.data[perm], true_labels=labels)


def blockify(image, width: int | None = None, height: int | None = None) -> ImageBlocks:
    """Split an ``(height, width, 3)`` uint8 array into 8x8 blocks.

    Blocks are scanned row-major; inside a block the 64 pixels are
    row-major with R, G, B interleaved, giving 192 values per block.
    A flat byte buffer is accepted together with ``width`` and ``height``.
    """
    img = np.asarray(image)
    if img.ndim == 1 or width is not None:
        if width is None or height is None:
            raise BadDimensions("a flat pixel buffer needs width and height")
        if img.size != width * height * 3:
            raise BadDimensions("pixel buffer does not match width x height x 3")
        img = img.reshape(height, width, 3)
    if img.ndim != 3 or img.shape[2] != 3:
        raise BadDimensions("expected an RGB image of shape (height, width, 3)")
    h, w, _ = img.shape
    if h % BLOCK or w % BLOCK or h == 0 or w == 0:
        raise BadDimensions(f"image size {w}x{h} is not a positive multiple of {BLOCK}")
    rows, cols = h // BLOCK, w // BLOCK
    blocks = (
        img.reshape(rows, BLOCK, cols, BLOCK, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * cols, BLOCK * BLOCK * 3)
        .astype(float)
    )
    return ImageBlocks(blocks, (rows, cols))


def deblockify(ib: ImageBlocks) -> np.ndarray:
    """Inverse of :func:`blockify`; values are rounded and clamped to 0..255."""
    rows, cols = ib.grid
    blocks = np.asarray(ib.blocks, dtype=float)
    if blocks.shape != (rows * cols, BLOCK * BLOCK * 3):
        raise BadDimensions("block matrix does not match the grid")
    pix = np.clip(np.rint(blocks), 0, 255).astype(np.uint8)
    return (
        pix.reshape(rows, cols, BLOCK, BLOCK, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * BLOCK, cols * BLOCK, 3)
    )


def quantized_image(ib: ImageBlocks, centers, labels) -> np.ndarray:
    """Replace every block by its cluster center and reassemble."""
    centers = np.asarray(centers, dtype=float)
    return deblockify(replace(ib, blocks=centers[np.asarray(labels)]))


def read_ppm(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PPM":
                raise InputError(f"{path} is not a PPM image")
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def write_ppm(path, image) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PPM")
