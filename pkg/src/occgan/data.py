"""Dataset loading, one-class protocols and synthetic fixtures.

File formats handled here (byte layouts are documented in docs/formats.md):

* IDX (MNIST): big-endian ``u32`` magic (2051 images / 2049 labels), ``u32``
  dims, then raw ``u8`` values; gzip-compressed files are read transparently.
* CSV with a JSON schema declaring continuous/categorical columns.
* Binary PGM (P5) frames.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import logging
import os
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass
class FeatureMeta:
    name: str
    kind: str  # "continuous" | "categorical"
    width: int = 1
    categories: tuple[str, ...] = ()


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    feature_meta: list[FeatureMeta] = field(default_factory=list)
    split: str = "all"
    name: str = ""
    label_names: tuple[str, ...] = ()
    source_index: np.ndarray | None = None
    rows: list[list[str]] | None = None
    schema: "TabularSchema | None" = None
    encoder: "TabularEncoder | None" = None
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DataFormatError(f"samples must be 2-D, got {self.samples.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != len(self.samples):
                raise DataFormatError("labels and samples differ in length")
        if self.source_index is None:
            self.source_index = np.arange(len(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.samples, dtype="<f8").tobytes())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()

    def subset(self, idx: np.ndarray, split: str | None = None) -> "Dataset":
        return replace(
            self,
            samples=self.samples[idx],
            labels=None if self.labels is None else self.labels[idx],
            split=split or self.split,
            source_index=self.source_index[idx],
            rows=None if self.rows is None else [self.rows[i] for i in idx],
        )


# ---------------------------------------------------------------------------
# IDX

def _open_maybe_gzip(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file (any rank) into a uint8 array."""
    raw = _open_maybe_gzip(path)
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header")
    zero, dtype_code, ndim = raw[0] << 8 | raw[1], raw[2], raw[3]
    if zero != 0 or dtype_code != 0x08:
        raise DataFormatError(f"{path}: bad magic number {struct.unpack('>I', raw[:4])[0]}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    n = int(np.prod(dims))
    if len(raw) - header < n:
        raise DataFormatError(f"{path}: truncated data ({len(raw) - header} of {n} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=header).reshape(dims)


def write_idx(path, arr: np.ndarray, compress: bool | None = None) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    payload = struct.pack(">I", 0x0800 | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    compress = str(path).endswith(".gz") if compress is None else compress
    if compress:
        payload = gzip.compress(payload, mtime=0)
    with open(path, "wb") as f:
        f.write(payload)


def load_mnist_idx(images_path, labels_path=None) -> Dataset:
    """MNIST-style images scaled to [0, 1], flattened to ``(n, rows*cols)``."""
    raw = _open_maybe_gzip(images_path)
    if len(raw) < 4 or struct.unpack(">I", raw[:4])[0] != IDX_IMAGES_MAGIC:
        magic = struct.unpack(">I", raw[:4])[0] if len(raw) >= 4 else None
        raise DataFormatError(f"{images_path}: bad magic number {magic} (expected {IDX_IMAGES_MAGIC})")
    images = read_idx(images_path)
    labels = None
    if labels_path is not None:
        raw_l = _open_maybe_gzip(labels_path)
        if len(raw_l) < 4 or struct.unpack(">I", raw_l[:4])[0] != IDX_LABELS_MAGIC:
            raise DataFormatError(f"{labels_path}: bad magic number (expected {IDX_LABELS_MAGIC})")
        labels = read_idx(labels_path).astype(np.int64)
        if len(labels) != len(images):
            raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    n, rows, cols = images.shape
    return Dataset(
        samples=images.reshape(n, rows * cols).astype(np.float64) / 255.0,
        labels=labels,
        feature_meta=[FeatureMeta("pixels", "continuous", rows * cols)],
        name=Path(images_path).name,
        label_names=tuple(str(i) for i in range(10)) if labels is not None else (),
        image_shape=(rows, cols),
    )


def _resource(name: str):
    return resources.files("occgan").joinpath("resources", name)


def load_mnist5k() -> Dataset:
    """Bundled 5000-image MNIST subset (500 images per digit)."""
    with resources.as_file(_resource("mnist5k-images-idx3-ubyte.gz")) as img, \
            resources.as_file(_resource("mnist5k-labels-idx1-ubyte.gz")) as lab:
        ds = load_mnist_idx(img, lab)
    ds.name = "mnist5k"
    return ds


def load_mnist(directory=None, split: str = "train") -> Dataset:
    """Full MNIST from ``directory`` (or ``$OCCGAN_MNIST_DIR``) if present, else the bundled subset."""
    directory = directory or os.environ.get("OCCGAN_MNIST_DIR")
    if directory:
        prefix = "train" if split == "train" else "t10k"
        for suffix in ("", ".gz"):
            img = Path(directory) / f"{prefix}-images-idx3-ubyte{suffix}"
            lab = Path(directory) / f"{prefix}-labels-idx1-ubyte{suffix}"
            if img.exists() and lab.exists():
                return load_mnist_idx(img, lab)
        raise FileNotFoundError(f"no {prefix} IDX files in {directory}")
    return load_mnist5k()


# ---------------------------------------------------------------------------
# tabular CSV

@dataclass
class ColumnSpec:
    name: str
    type: str
    categories: tuple[str, ...] | None = None


@dataclass
class TabularSchema:
    """Column declarations for a CSV file.

    JSON form::

        {"columns": [{"name": "duration", "type": "continuous"},
                     {"name": "protocol_type", "type": "categorical",
                      "categories": ["tcp", "udp", "icmp"]}],
         "label": "class", "header": true, "delimiter": ",",
         "missing": ["?"], "ignore": ["id"]}

    Categorical columns without ``categories`` learn them from the rows the
    encoder is fitted on. Rows containing a ``missing`` token are dropped.
    """

    columns: list[ColumnSpec]
    label: str | None = None
    header: bool = True
    delimiter: str = ","
    missing: tuple[str, ...] = ("?", "")
    ignore: tuple[str, ...] = ()
    label_values: tuple[str, ...] | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataFormatError("duplicate column names in schema")
        for c in self.columns:
            if c.type not in ("continuous", "categorical"):
                raise DataFormatError(f"column {c.name!r}: unknown type {c.type!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSchema":
        allowed = {"columns", "label", "header", "delimiter", "missing", "ignore", "label_values"}
        unknown = set(d) - allowed
        if unknown:
            raise DataFormatError(f"unknown schema keys: {sorted(unknown)}")
        cols = [ColumnSpec(c["name"], c["type"], tuple(c["categories"]) if c.get("categories") else None)
                for c in d["columns"]]
        return cls(
            columns=cols,
            label=d.get("label"),
            header=d.get("header", True),
            delimiter=d.get("delimiter", ","),
            missing=tuple(d.get("missing", ("?", ""))),
            ignore=tuple(d.get("ignore", ())),
            label_values=tuple(d["label_values"]) if d.get("label_values") else None,
        )

    @classmethod
    def load(cls, path) -> "TabularSchema":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "columns": [{"name": c.name, "type": c.type, **({"categories": list(c.categories)} if c.categories else {})}
                        for c in self.columns],
            "header": self.header,
            "delimiter": self.delimiter,
            "missing": list(self.missing),
        }
        if self.label:
            out["label"] = self.label
        if self.ignore:
            out["ignore"] = list(self.ignore)
        if self.label_values:
            out["label_values"] = list(self.label_values)
        return out


class TabularEncoder:
    """One-hot categorical columns and min-max scale continuous ones to [0, 1].

    Statistics come from the rows passed to ``fit``. Unknown categories at
    transform time become an all-zero block and are counted in
    ``unknown_count``.
    """

    def __init__(self, schema: TabularSchema):
        self.schema = schema
        self.mins: dict[str, float] = {}
        self.maxs: dict[str, float] = {}
        self.categories: dict[str, tuple[str, ...]] = {}
        self.unknown_count = 0
        self.fitted = False

    def fit(self, rows: Sequence[Sequence[str]]) -> "TabularEncoder":
        for j, col in enumerate(self.schema.columns):
            values = [r[j] for r in rows]
            if col.type == "continuous":
                arr = _floats(values, col.name)
                self.mins[col.name] = float(arr.min()) if len(arr) else 0.0
                self.maxs[col.name] = float(arr.max()) if len(arr) else 1.0
            else:
                self.categories[col.name] = col.categories or tuple(sorted(set(values)))
        self.fitted = True
        return self

    @property
    def output_dim(self) -> int:
        return sum(1 if c.type == "continuous" else len(self.categories[c.name]) for c in self.schema.columns)

    def feature_meta(self) -> list[FeatureMeta]:
        return [FeatureMeta(c.name, c.type, 1 if c.type == "continuous" else len(self.categories[c.name]),
                            () if c.type == "continuous" else self.categories[c.name]) for c in self.schema.columns]

    def to_dict(self) -> dict:
        return {"schema": self.schema.to_dict(), "mins": self.mins, "maxs": self.maxs,
                "categories": {k: list(v) for k, v in self.categories.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularEncoder":
        enc = cls(TabularSchema.from_dict(d["schema"]))
        enc.mins = {k: float(v) for k, v in d["mins"].items()}
        enc.maxs = {k: float(v) for k, v in d["maxs"].items()}
        enc.categories = {k: tuple(v) for k, v in d["categories"].items()}
        enc.fitted = True
        return enc

    def transform(self, rows: Sequence[Sequence[str]]) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("encoder is not fitted")
        blocks = []
        for j, col in enumerate(self.schema.columns):
            values = [r[j] for r in rows]
            if col.type == "continuous":
                arr = _floats(values, col.name)
                lo, hi = self.mins[col.name], self.maxs[col.name]
                span = hi - lo
                blocks.append(((arr - lo) / span if span > 0 else np.zeros_like(arr))[:, None])
            else:
                cats = self.categories[col.name]
                lookup = {c: i for i, c in enumerate(cats)}
                block = np.zeros((len(values), len(cats)))
                for i, v in enumerate(values):
                    k = lookup.get(v)
                    if k is None:
                        self.unknown_count += 1
                    else:
                        block[i, k] = 1.0
                blocks.append(block)
        if unknown := self.unknown_count:
            logger.debug("%d unknown categorical values so far", unknown)
        return np.hstack(blocks) if blocks else np.zeros((len(rows), 0))


def _floats(values: Sequence[str], name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"column {name!r}: {exc}") from None


def read_csv_rows(path, schema: TabularSchema) -> tuple[list[list[str]], list[str] | None]:
    """Parse feature cells (schema order) and raw label strings; drops rows with missing tokens."""
    with open(path, newline="") as f:
        reader = csv.reader(f, delimiter=schema.delimiter)
        lines = [row for row in reader if row and any(cell.strip() for cell in row)]
    if schema.header:
        header, lines = [h.strip() for h in lines[0]], lines[1:]
    else:
        header = [c.name for c in schema.columns] + ([schema.label] if schema.label else [])
        header = _fill_ignored(header, schema, len(lines[0]) if lines else 0)
    pos = {name: i for i, name in enumerate(header)}
    missing_cols = [c.name for c in schema.columns if c.name not in pos]
    if schema.label and schema.label not in pos:
        missing_cols.append(schema.label)
    if missing_cols:
        raise DataFormatError(f"{path}: columns not found: {missing_cols}")
    feats, labels, dropped = [], [] if schema.label else None, 0
    for lineno, row in enumerate(lines, start=2 if schema.header else 1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        cells = [row[pos[c.name]].strip() for c in schema.columns]
        label = row[pos[schema.label]].strip() if schema.label else None
        if any(c in schema.missing for c in cells) or (label is not None and label in schema.missing):
            dropped += 1
            continue
        feats.append(cells)
        if labels is not None:
            labels.append(label)
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path, dropped)
    return feats, labels


def _fill_ignored(header: list[str], schema: TabularSchema, width: int) -> list[str]:
    # header-less files list ignored columns first (e.g. a sample id)
    if width == len(header) + len(schema.ignore):
        return list(schema.ignore) + header
    return header


def load_csv_tabular(path, schema: TabularSchema | str | os.PathLike,
                     encoder: TabularEncoder | None = None) -> Dataset:
    """Load a CSV into a Dataset; fits a new encoder on this file unless one is given."""
    if not isinstance(schema, TabularSchema):
        schema = TabularSchema.load(schema)
    rows, raw_labels = read_csv_rows(path, schema)
    if encoder is None:
        encoder = TabularEncoder(schema).fit(rows)
    labels, names = None, ()
    if raw_labels is not None:
        names = schema.label_values or tuple(sorted(set(raw_labels)))
        lookup = {v: i for i, v in enumerate(names)}
        unknown = sorted(set(raw_labels) - set(lookup))
        if unknown:
            raise DataFormatError(f"{path}: label values not in schema: {unknown[:5]}")
        labels = np.array([lookup[v] for v in raw_labels], dtype=np.int64)
    return Dataset(
        samples=encoder.transform(rows),
        labels=labels,
        feature_meta=encoder.feature_meta(),
        name=Path(path).name,
        label_names=tuple(names),
        rows=rows,
        schema=schema,
        encoder=encoder,
    )


WBCD_FEATURES = (
    "clump_thickness", "cell_size_uniformity", "cell_shape_uniformity", "marginal_adhesion",
    "single_epithelial_cell_size", "bare_nuclei", "bland_chromatin", "normal_nucleoli", "mitoses",
)


def wbcd_schema() -> TabularSchema:
    return TabularSchema([ColumnSpec(n, "continuous") for n in WBCD_FEATURES], label="class",
                         label_values=("benign", "malignant"))


def load_wbcd_original(path=None) -> Dataset:
    """Wisconsin breast cancer (original); benign = 0, malignant = 1.

    Without ``path`` the bundled 683-row copy is used. A path to the UCI
    ``breast-cancer-wisconsin.data`` file (id, nine attributes, class 2/4,
    '?' for missing) is also accepted; incomplete rows are dropped.
    """
    if path is None:
        with resources.as_file(_resource("wbcd_original.csv")) as p:
            ds = load_csv_tabular(p, wbcd_schema())
        ds.name = "wbcd_original"
        return ds
    with open(path) as f:
        first = f.readline()
    if "class" in first:
        return load_csv_tabular(path, wbcd_schema())
    feats, labels = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = [p.strip() for p in line.strip().split(",")]
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != 11:
                raise DataFormatError(f"{path}:{lineno}: expected 11 fields")
            if "?" in parts:
                continue
            feats.append(parts[1:10])
            labels.append({"2": "benign", "4": "malignant"}[parts[10]])
    schema = wbcd_schema()
    enc = TabularEncoder(schema).fit(feats)
    return Dataset(enc.transform(feats), np.array([0 if v == "benign" else 1 for v in labels]),
                   enc.feature_meta(), name="wbcd_original", label_names=("benign", "malignant"),
                   rows=feats, schema=schema, encoder=enc)


KDD_COLUMNS = (
    ("duration", "continuous"), ("protocol_type", "categorical"), ("service", "categorical"),
    ("flag", "categorical"), ("src_bytes", "continuous"), ("dst_bytes", "continuous"),
    ("land", "categorical"), ("wrong_fragment", "continuous"), ("urgent", "continuous"),
    ("hot", "continuous"), ("num_failed_logins", "continuous"), ("logged_in", "categorical"),
    ("num_compromised", "continuous"), ("root_shell", "continuous"), ("su_attempted", "continuous"),
    ("num_root", "continuous"), ("num_file_creations", "continuous"), ("num_shells", "continuous"),
    ("num_access_files", "continuous"), ("num_outbound_cmds", "continuous"),
    ("is_host_login", "categorical"), ("is_guest_login", "categorical"), ("count", "continuous"),
    ("srv_count", "continuous"), ("serror_rate", "continuous"), ("srv_serror_rate", "continuous"),
    ("rerror_rate", "continuous"), ("srv_rerror_rate", "continuous"), ("same_srv_rate", "continuous"),
    ("diff_srv_rate", "continuous"), ("srv_diff_host_rate", "continuous"), ("dst_host_count", "continuous"),
    ("dst_host_srv_count", "continuous"), ("dst_host_same_srv_rate", "continuous"),
    ("dst_host_diff_srv_rate", "continuous"), ("dst_host_same_src_port_rate", "continuous"),
    ("dst_host_srv_diff_host_rate", "continuous"), ("dst_host_serror_rate", "continuous"),
    ("dst_host_srv_serror_rate", "continuous"), ("dst_host_rerror_rate", "continuous"),
    ("dst_host_srv_rerror_rate", "continuous"),
)


def kddcup_schema(categories: dict[str, Sequence[str]] | None = None) -> TabularSchema:
    """KDDCUP99 layout: 41 features (34 continuous, 7 categorical) and a ``label`` column, no header."""
    categories = categories or {}
    cols = [ColumnSpec(n, t, tuple(categories[n]) if n in categories else None) for n, t in KDD_COLUMNS]
    return TabularSchema(cols, label="label", header=False)


def load_kddcup(path, max_rows: int | None = 20000, rng: np.random.Generator | None = None) -> Dataset:
    """KDDCUP99-style CSV, optionally uniformly subsampled to ``max_rows`` rows."""
    ds = load_csv_tabular(path, kddcup_schema())
    if max_rows is not None and len(ds) > max_rows:
        rng = rng or np.random.default_rng(0)
        keep = np.sort(rng.choice(len(ds), size=max_rows, replace=False))
        ds = ds.subset(keep)
        ds.encoder = TabularEncoder(ds.schema).fit(ds.rows)
        ds.samples = ds.encoder.transform(ds.rows)
        ds.feature_meta = ds.encoder.feature_meta()
    return ds


# ---------------------------------------------------------------------------
# one-class protocol

def _label_ids(dataset: Dataset, spec: Sequence) -> set[int]:
    ids = set()
    for v in spec:
        if isinstance(v, (int, np.integer)):
            ids.add(int(v))
        elif str(v) in dataset.label_names:
            ids.add(dataset.label_names.index(str(v)))
        else:
            raise ValueError(f"unknown class {v!r}; known: {dataset.label_names}")
    return ids


def make_occ_protocol(dataset: Dataset, inliers: Sequence | None = None, outliers: Sequence | None = None,
                      outlier_ratio: float | None = None, rng: np.random.Generator | None = None,
                      train_fraction: float = 0.8, max_train: int | None = None) -> tuple[Dataset, Dataset]:
    """Split into an inlier-only train set and a labeled test set (1 = outlier).

    Exactly one of ``inliers``/``outliers`` selects the classes by label id or
    name. ``train_fraction`` of the inliers go to training (optionally capped
    at ``max_train``); the held-out inliers are joined by
    ``round(outlier_ratio * n_test_inliers)`` outliers, or by all outliers when
    ``outlier_ratio`` is None. Tabular datasets are re-encoded with statistics
    from the training rows only.
    """
    if dataset.labels is None:
        raise ValueError("protocol construction needs labels")
    if (inliers is None) == (outliers is None):
        raise ValueError("give exactly one of inliers / outliers")
    if outlier_ratio is not None and not 0.0 < outlier_ratio <= 1.0:
        raise ValueError("outlier_ratio must lie in (0, 1]")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    labels = dataset.labels.astype(int)
    if inliers is not None:
        is_in = np.isin(labels, list(_label_ids(dataset, inliers)))
    else:
        is_in = ~np.isin(labels, list(_label_ids(dataset, outliers)))
    in_idx = rng.permutation(np.flatnonzero(is_in))
    out_idx = rng.permutation(np.flatnonzero(~is_in))
    n_train = int(round(train_fraction * len(in_idx)))
    train_idx, test_in = in_idx[:n_train], in_idx[n_train:]
    if max_train is not None:
        train_idx = train_idx[:max_train]
    if len(train_idx) == 0 or len(test_in) == 0:
        raise ValueError("not enough inliers for the requested split")
    if outlier_ratio is None:
        test_out = out_idx
    else:
        n_out = int(round(outlier_ratio * len(test_in)))
        if n_out > len(out_idx):
            raise ValueError(f"need {n_out} outliers, only {len(out_idx)} available")
        test_out = out_idx[:n_out]
    train_idx = np.sort(train_idx)
    test_idx = np.r_[np.sort(test_in), np.sort(test_out)]
    test_labels = np.r_[np.zeros(len(test_in), dtype=np.int64), np.ones(len(test_out), dtype=np.int64)]

    train = dataset.subset(train_idx, "train")
    test = dataset.subset(test_idx, "test")
    train.labels = np.zeros(len(train), dtype=np.int64)
    test.labels = test_labels
    train.label_names = test.label_names = ("inlier", "outlier")
    if dataset.rows is not None and dataset.schema is not None:
        enc = TabularEncoder(dataset.schema).fit(train.rows)
        train.samples = enc.transform(train.rows)
        test.samples = enc.transform(test.rows)
        train.encoder = test.encoder = enc
        train.feature_meta = test.feature_meta = enc.feature_meta()
    return train, test


# ---------------------------------------------------------------------------
# synthetic fixtures

def synth_blobs(n: int, dim: int, rng: np.random.Generator, n_outliers: int | None = None,
                sigma: float = 0.04, shift: float = 5.0, n_blobs: int = 2) -> Dataset:
    """Gaussian-blob inliers (label 0) and outliers displaced by ``shift * sigma`` per coordinate (label 1)."""
    if n <= 0 or dim <= 0:
        raise ValueError("n and dim must be positive")
    n_outliers = n // 4 if n_outliers is None else n_outliers
    centers = rng.uniform(0.3, 0.7, size=(n_blobs, dim))
    which = rng.integers(0, n_blobs, size=n)
    inl = centers[which] + rng.normal(0.0, sigma, size=(n, dim))
    which_o = rng.integers(0, n_blobs, size=n_outliers)
    signs = rng.choice([-1.0, 1.0], size=(n_outliers, dim))
    outl = centers[which_o] + shift * sigma * signs + rng.normal(0.0, sigma, size=(n_outliers, dim))
    samples = np.clip(np.vstack([inl, outl]), 0.0, 1.0)
    labels = np.r_[np.zeros(n, dtype=np.int64), np.ones(n_outliers, dtype=np.int64)]
    return Dataset(samples, labels, [FeatureMeta("x", "continuous", dim)], name="blobs",
                   label_names=("inlier", "outlier"))


@dataclass
class AnomalySpec:
    """Frames ``[start, stop)`` contain a large fast-moving object."""

    start: int = 0
    stop: int = 0
    size: int = 40
    speed: int = 12


def synth_frames(n_frames: int, anomaly: AnomalySpec | None, rng: np.random.Generator,
                 height: int = 240, width: int = 360, walkers: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Grayscale clip of walking blocks over a static textured background.

    Walkers are sized and paced so that their leading and trailing edges change enough
    pixels to pass the default motion gate in the patches they cross.
    """
    if n_frames <= 0:
        raise ValueError("n_frames must be positive")
    background = 0.25 + 0.05 * rng.random((height, width))
    pos = np.column_stack([rng.uniform(0, height - 40, walkers), rng.uniform(0, width - 24, walkers)])
    vel = np.column_stack([rng.uniform(-1.0, 1.0, walkers), rng.uniform(6.0, 9.0, walkers)])
    frames = np.empty((n_frames, height, width))
    labels = np.zeros(n_frames, dtype=np.int64)
    for t in range(n_frames):
        f = background.copy()
        for (r, c) in pos:
            r, c = int(r) % (height - 40), int(c) % (width - 24)
            f[r:r + 40, c:c + 24] = 0.8
        if anomaly is not None and anomaly.start <= t < anomaly.stop:
            labels[t] = 1
            k = t - anomaly.start
            c = (k * anomaly.speed) % max(1, width - anomaly.size)
            r = height // 2 - anomaly.size // 2
            f[r:r + anomaly.size, c:c + anomaly.size] = 1.0
        frames[t] = f
        pos += vel
    return frames, labels


# ---------------------------------------------------------------------------
# PGM

def write_pgm(path, image: np.ndarray) -> None:
    """Binary P5, maxval 255, from values in [0, 1]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D image")
    data = np.round(img * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 PGM (8- or 16-bit) scaled to [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    tokens: list[bytes] = []
    while len(tokens) < 4:
        line = buf.readline()
        if not line:
            raise DataFormatError(f"{path}: truncated PGM header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    if tokens[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    n = width * height
    body = raw[buf.tell():]
    if len(body) < n * dtype.itemsize:
        raise DataFormatError(f"{path}: truncated PGM data")
    return np.frombuffer(body, dtype=dtype, count=n).reshape(height, width).astype(np.float64) / maxval


def read_pgm_dir(directory) -> tuple[list[str], np.ndarray]:
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm files in {directory}")
    return [p.stem for p in paths], np.stack([read_pgm(p) for p in paths])
