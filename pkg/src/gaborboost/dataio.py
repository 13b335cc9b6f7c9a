"""Loading, normalizing, and serializing images and feature tables.

Images come in as 8/16-bit PGM (P2 or P5) or plain CSV matrices and are
normalized to [0, 1] float64 on load. Feature tables are CSV files with a
fixed column layout shared by every producer and consumer in the package.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SchemaError


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image; ``data`` is float64 with shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("image data must be a nonempty 2D array")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite intensities")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class LabeledDataset:
    """Images with parallel string labels and per-image names."""

    images: list[GrayImage]
    labels: list[str]
    names: list[str]

    def __post_init__(self):
        if not (len(self.images) == len(self.labels) == len(self.names)):
            raise ValueError("images, labels, and names must have equal length")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))


# ---------------------------------------------------------------------------
# image loading


def _pgm_header_tokens(buf: bytes, path):
    """Yield (token, line) for the three header fields after the magic."""
    pos = 0
    line = 1
    tokens = []
    while len(tokens) < 4 and pos < len(buf):
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        if ch in b" \t\r\n":
            if ch == b"\n":
                line += 1
            pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos : pos + 1] not in b" \t\r\n#":
            pos += 1
        tokens.append((buf[start:pos].decode("ascii", "replace"), line))
    if len(tokens) < 4:
        raise ParseError(f"{path}: line {line}: truncated PGM header")
    # raster begins after exactly one whitespace byte following maxval
    return tokens, pos + 1


def load_pgm(path: str | Path) -> GrayImage:
    """Read an 8- or 16-bit P2/P5 PGM and normalize by its declared maxval."""
    path = Path(path)
    buf = path.read_bytes()
    magic = buf[:2].decode("ascii", "replace")
    if magic not in ("P2", "P5"):
        raise ParseError(f"{path}: line 1: not a PGM file (magic {magic!r})")
    tokens, raster_at = _pgm_header_tokens(buf, path)
    try:
        width = int(tokens[1][0])
        height = int(tokens[2][0])
        maxval = int(tokens[3][0])
    except ValueError:
        bad = next(t for t in tokens[1:] if not t[0].isdigit())
        raise ParseError(f"{path}: line {bad[1]}: bad header token {bad[0]!r}") from None
    if width <= 0 or height <= 0:
        raise ParseError(f"{path}: non-positive dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise ParseError(f"{path}: maxval {maxval} out of range")

    count = width * height
    if magic == "P5":
        itemsize = 2 if maxval > 255 else 1
        raster = buf[raster_at : raster_at + count * itemsize]
        if len(raster) < count * itemsize:
            raise ParseError(f"{path}: raster truncated ({len(raster)} bytes)")
        dtype = ">u2" if itemsize == 2 else np.uint8
        values = np.frombuffer(raster, dtype=dtype, count=count).astype(np.float64)
    else:
        text = buf[raster_at - 1 :].decode("ascii", "replace")
        parts = text.split()
        if len(parts) < count:
            raise ParseError(f"{path}: expected {count} pixels, found {len(parts)}")
        try:
            values = np.array([int(p) for p in parts[:count]], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{path}: non-integer pixel in P2 raster") from None
    return GrayImage(values.reshape(height, width) / maxval)


def load_csv_image(path: str | Path) -> GrayImage:
    """Read a CSV matrix; values are scaled by the max absolute value."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise ParseError(f"{path}: ragged row at line {lineno}")
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
        for v in values:
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {lineno}: non-finite value {v}")
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: empty CSV image")
    arr = np.array(rows, dtype=np.float64)
    peak = np.abs(arr).max()
    if peak > 0:
        arr = arr / peak
    return GrayImage(arr)


def load_image(path: str | Path, format: str | None = None) -> GrayImage:
    """Load one image; format 'pgm' or 'csv', inferred from suffix if None."""
    path = Path(path)
    if format is None:
        suffix = path.suffix.lower().lstrip(".")
        if suffix in ("pgm", "csv"):
            format = suffix
        else:
            raise ConfigError(f"cannot infer image format from {path.name!r}")
    if format == "pgm":
        return load_pgm(path)
    if format == "csv":
        return load_csv_image(path)
    raise ConfigError(f"unsupported image format {format!r}")


def write_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a 16-bit binary PGM; intensities are clipped to [0, 1]."""
    arr = np.clip(img.data, 0.0, 1.0)
    quantized = np.round(arr * 65535.0).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + quantized.tobytes())


def load_dataset(directory: str | Path) -> LabeledDataset:
    """Load every image listed in <directory>/labels.csv, sorted by filename."""
    directory = Path(directory)
    manifest = directory / "labels.csv"
    if not manifest.is_file():
        raise ParseError(f"{manifest}: missing labels manifest")
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["filename", "label"]:
            raise SchemaError(f"{manifest}: expected header filename,label, got {header}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{manifest}: ragged row at line {lineno}")
            entries.append((row[0], row[1]))
    entries.sort(key=lambda e: e[0])
    images, labels, names = [], [], []
    for fname, label in entries:
        images.append(load_image(directory / fname))
        labels.append(label)
        names.append(fname)
    return LabeledDataset(images, labels, names)


# ---------------------------------------------------------------------------
# label-preserving transforms


def flip_horizontal(img: GrayImage) -> GrayImage:
    """Mirror an image about its vertical center line."""
    return GrayImage(img.data[:, ::-1].copy())


def reduce_classes(
    ds: LabeledDataset,
    merge_map: dict[str, str],
    flip_set: set[str] | frozenset[str] = frozenset(),
) -> LabeledDataset:
    """Map labels through ``merge_map``; flip images whose original label is
    in ``flip_set`` (for orientation classes folded into their mirror class).
    """
    images, labels = [], []
    for img, label in zip(ds.images, ds.labels):
        if label not in merge_map:
            raise ConfigError(f"label {label!r} missing from merge map")
        images.append(flip_horizontal(img) if label in flip_set else img)
        labels.append(merge_map[label])
    return LabeledDataset(images, labels, list(ds.names))


# ---------------------------------------------------------------------------
# feature tables

PF_COLUMNS = ("pf_amp", "pf_center", "pf_width", "pf_skew", "pf_offset")
BASE_COLUMNS = (
    "id",
    "sigma_x",
    "sigma_y",
    "lambda",
    "x_star",
    "y_star",
    "q_tl",
    "q_tr",
    "q_bl",
    "q_br",
    "egf_tl_bl",
    "egf_tr_br",
    "egf_tl_tr",
    "egf_bl_br",
)

_COLUMN_TO_ATTR = {"lambda": "lam"}


@dataclass
class FeatureRow:
    """One image's extracted features plus its label.

    ``lam`` maps to the CSV column named ``lambda``. The five ``pf_*``
    fields are either all present or all None; NaN values mark a failed
    profile fit. ``roi_clamped`` is diagnostic only and is not serialized.
    """

    id: str
    sigma_x: float
    sigma_y: float
    lam: float
    x_star: float
    y_star: float
    q_tl: float
    q_tr: float
    q_bl: float
    q_br: float
    egf_tl_bl: float
    egf_tr_br: float
    egf_tl_tr: float
    egf_bl_br: float
    label: str
    pf_amp: float | None = None
    pf_center: float | None = None
    pf_width: float | None = None
    pf_skew: float | None = None
    pf_offset: float | None = None
    roi_clamped: bool = False

    @property
    def has_pf(self) -> bool:
        return self.pf_amp is not None

    @property
    def pf_failed(self) -> bool:
        return self.has_pf and math.isnan(self.pf_amp)

    def value(self, column: str) -> float | str:
        return getattr(self, _COLUMN_TO_ATTR.get(column, column))


def _table_columns(with_pf: bool) -> tuple[str, ...]:
    cols = BASE_COLUMNS + (PF_COLUMNS if with_pf else ()) + ("label",)
    return cols


def write_feature_table(rows: list[FeatureRow], path: str | Path) -> None:
    """Write rows as CSV; floats use repr so they round-trip exactly.

    An empty row list still writes the header line (base schema).
    """
    with_pf = rows[0].has_pf if rows else False
    if any(r.has_pf != with_pf for r in rows):
        raise SchemaError("rows mix PF and non-PF schemas")
    columns = _table_columns(with_pf)
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row.value(col)
            cells.append(v if isinstance(v, str) else repr(float(v)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_table(path: str | Path) -> list[FeatureRow]:
    """Read a feature CSV written by :func:`write_feature_table`."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty feature table")
        for expect_pf in (False, True):
            if tuple(header) == _table_columns(expect_pf):
                with_pf = expect_pf
                break
        else:
            known = set(_table_columns(True))
            unknown = [c for c in header if c not in known]
            if unknown:
                raise SchemaError(f"{path}: unknown column {unknown[0]!r}")
            raise SchemaError(f"{path}: header mismatch: {header}")
        columns = _table_columns(with_pf)
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(columns):
                raise ParseError(f"{path}: ragged row at line {lineno}")
            kwargs = {}
            for col, cell in zip(columns, record):
                attr = _COLUMN_TO_ATTR.get(col, col)
                if col in ("id", "label"):
                    kwargs[attr] = cell
                else:
                    try:
                        kwargs[attr] = float(cell)
                    except ValueError:
                        raise ParseError(
                            f"{path}: line {lineno}: bad value {cell!r} in {col}"
                        ) from None
            rows.append(FeatureRow(**kwargs))
    return rows


def rows_close(a: FeatureRow, b: FeatureRow, tol: float = 1e-12) -> bool:
    """Field-wise comparison treating NaN as equal to NaN."""
    for f in fields(FeatureRow):
        if f.name == "roi_clamped":
            continue
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, str) or va is None or vb is None:
            if va != vb:
                return False
            continue
        if math.isnan(va) and math.isnan(vb):
            continue
        if abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
            return False
    return True
