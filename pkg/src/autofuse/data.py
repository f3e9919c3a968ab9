"""Dataset ingestion: manifests, tabular encoding, and aligned modalities.

File formats
------------
Manifest: JSON object with keys ``tabular_path``, ``embedding_paths`` (a
name -> path map), ``label_column``, ``group_column``, ``id_column``, and
``task`` ("multiclass" or "binary"). Paths are resolved relative to the
manifest's directory.

Tabular file: UTF-8 CSV with a header row; an empty cell is a missing
value. Embedding file: CSV with header ``id,e0,...,e{d-1}`` and finite
decimal floats.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import MissingFile, SchemaError, UnknownColumn

TASKS = ("multiclass", "binary")

_MANIFEST_KEYS = (
    "tabular_path",
    "embedding_paths",
    "label_column",
    "group_column",
    "id_column",
    "task",
)


@dataclass(frozen=True)
class DatasetManifest:
    tabular_path: str
    embedding_paths: dict[str, str]
    label_column: str
    group_column: str
    id_column: str
    task: str


def load_manifest(path) -> DatasetManifest:
    """Read and validate a dataset manifest, checking referenced files exist."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("manifest must be a JSON object")
    for key in _MANIFEST_KEYS:
        if key not in raw:
            raise SchemaError(f"manifest missing required key {key!r}")
    if raw["task"] not in TASKS:
        raise SchemaError(f"task must be one of {TASKS}, got {raw['task']!r}")
    if not isinstance(raw["embedding_paths"], dict) or not raw["embedding_paths"]:
        raise SchemaError("embedding_paths must be a non-empty name->path map")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    tabular_path = resolve(raw["tabular_path"])
    if not os.path.isfile(tabular_path):
        raise MissingFile(f"tabular file not found: {tabular_path}")
    embedding_paths = {}
    for name, p in sorted(raw["embedding_paths"].items()):
        full = resolve(p)
        if not os.path.isfile(full):
            raise MissingFile(f"embedding file not found: {full}")
        embedding_paths[name] = full

    manifest = DatasetManifest(
        tabular_path=tabular_path,
        embedding_paths=embedding_paths,
        label_column=raw["label_column"],
        group_column=raw["group_column"],
        id_column=raw["id_column"],
        task=raw["task"],
    )
    header = pd.read_csv(tabular_path, nrows=0, dtype=str).columns
    for col in (manifest.label_column, manifest.id_column, manifest.group_column):
        if col not in header:
            raise SchemaError(f"column {col!r} not present in tabular file")
    return manifest


def _parse_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


@dataclass(frozen=True)
class TabularSchema:
    """Column kinds and the fixed category order learned at fit time."""

    order: tuple[str, ...]
    kinds: dict[str, str]
    categories: dict[str, tuple[str, ...]]

    @property
    def encoded_width(self) -> int:
        return sum(
            1 if self.kinds[c] == "numeric" else len(self.categories[c]) for c in self.order
        )

    def feature_names(self) -> list[str]:
        names = []
        for col in self.order:
            if self.kinds[col] == "numeric":
                names.append(col)
            else:
                names.extend(f"{col}={cat}" for cat in self.categories[col])
        return names

    def numeric_column_mask(self) -> np.ndarray:
        mask = []
        for col in self.order:
            if self.kinds[col] == "numeric":
                mask.append(True)
            else:
                mask.extend([False] * len(self.categories[col]))
        return np.asarray(mask)

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "kinds": dict(self.kinds),
            "categories": {k: list(v) for k, v in self.categories.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSchema":
        return cls(
            order=tuple(d["order"]),
            kinds=dict(d["kinds"]),
            categories={k: tuple(v) for k, v in d["categories"].items()},
        )


def fit_schema(table: pd.DataFrame, feature_columns) -> TabularSchema:
    """Infer column kinds and category lists from a raw string table.

    A column is numeric iff every non-missing value parses as a float;
    category lists are the sorted observed values (the literal "unknown"
    is an ordinary category), so the schema does not depend on row order.
    """
    kinds, categories = {}, {}
    for col in feature_columns:
        if col not in table.columns:
            raise UnknownColumn(f"column {col!r} not present in table")
        values = [v for v in table[col].astype(str) if v != ""]
        if values and all(_parse_float(v) is not None for v in values):
            kinds[col] = "numeric"
        else:
            kinds[col] = "categorical"
            categories[col] = tuple(sorted(set(values)))
    return TabularSchema(order=tuple(feature_columns), kinds=kinds, categories=categories)


def encode_tabular(table: pd.DataFrame, schema: TabularSchema) -> np.ndarray:
    """One-hot encode categoricals and pass numerics through.

    Missing numerics become NaN (imputation is a pipeline stage, not an
    ingestion step); categories unseen at fit time produce an all-zero
    indicator block.
    """
    n = len(table)
    blocks = []
    for col in schema.order:
        if col not in table.columns:
            raise UnknownColumn(f"column {col!r} not present in table")
        cells = table[col].astype(str).tolist()
        if schema.kinds[col] == "numeric":
            out = np.full(n, np.nan)
            for i, cell in enumerate(cells):
                if cell == "":
                    continue
                value = _parse_float(cell)
                if value is None:
                    raise SchemaError(f"column {col!r}: non-numeric value {cell!r}")
                out[i] = value
            blocks.append(out.reshape(-1, 1))
        else:
            cats = schema.categories[col]
            index = {c: k for k, c in enumerate(cats)}
            block = np.zeros((n, len(cats)))
            for i, cell in enumerate(cells):
                k = index.get(cell)
                if k is not None:
                    block[i, k] = 1.0
            blocks.append(block)
    return np.hstack(blocks) if blocks else np.zeros((n, 0))


@dataclass
class MultimodalDataset:
    """Aligned tabular features, named embeddings, labels, and groups."""

    X_tab: np.ndarray
    embeddings: dict[str, np.ndarray]
    y: np.ndarray
    groups: np.ndarray
    ids: np.ndarray
    class_names: list[str]
    task: str = "multiclass"
    feature_names: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.X_tab.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def validate(self) -> None:
        n = self.n
        for name, E in self.embeddings.items():
            if E.shape[0] != n:
                raise SchemaError(f"embedding {name!r} has {E.shape[0]} rows, expected {n}")
            if not np.isfinite(E).all():
                raise SchemaError(f"embedding {name!r} contains non-finite values")
        for arr, label in ((self.y, "labels"), (self.groups, "groups"), (self.ids, "ids")):
            if len(arr) != n:
                raise SchemaError(f"{label} length {len(arr)} != {n}")
        if np.isinf(self.X_tab).any():
            raise SchemaError("tabular matrix contains infinite values")
        C = self.n_classes
        present = np.unique(self.y)
        if C < 2 or not np.array_equal(present, np.arange(C)):
            raise SchemaError("labels must cover a contiguous range [0, C) with C >= 2")


def _read_embedding_csv(path: str, name: str):
    df = pd.read_csv(path, dtype={0: str})
    cols = list(df.columns)
    if not cols or cols[0] != "id":
        raise SchemaError(f"embedding {name!r}: first column must be 'id'")
    expected = [f"e{i}" for i in range(len(cols) - 1)]
    if cols[1:] != expected:
        raise SchemaError(f"embedding {name!r}: header must be id,e0,...,e{len(cols) - 2}")
    ids = df["id"].astype(str).to_numpy()
    if len(set(ids)) != len(ids):
        raise SchemaError(f"embedding {name!r}: duplicate ids")
    values = df[cols[1:]].to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise SchemaError(f"embedding {name!r}: non-finite values")
    return ids, values


def _label_sort_key(values):
    if all(_parse_float(v) is not None for v in values):
        return sorted(values, key=float)
    return sorted(values)


def load_dataset(manifest: DatasetManifest, schema: TabularSchema | None = None):
    """Load, encode, and align a multimodal dataset.

    Returns ``(dataset, schema)``; pass a previously fitted schema to
    encode new data with the original category order.
    """
    table = pd.read_csv(manifest.tabular_path, dtype=str, keep_default_na=False)
    for col in (manifest.id_column, manifest.label_column, manifest.group_column):
        if col not in table.columns:
            raise SchemaError(f"column {col!r} not present in tabular file")
    ids = table[manifest.id_column].astype(str).to_numpy()
    if len(set(ids)) != len(ids):
        raise SchemaError("tabular file contains duplicate ids")
    labels_raw = table[manifest.label_column].astype(str)
    if (labels_raw == "").any():
        raise SchemaError("label column contains missing values")
    class_names = _label_sort_key(sorted(set(labels_raw)))
    if manifest.task == "binary" and len(class_names) != 2:
        raise SchemaError(f"binary task requires 2 classes, found {len(class_names)}")
    label_index = {c: i for i, c in enumerate(class_names)}
    y = np.asarray([label_index[v] for v in labels_raw], dtype=np.int64)
    groups = table[manifest.group_column].astype(str).to_numpy()

    feature_columns = [
        c
        for c in table.columns
        if c not in (manifest.id_column, manifest.label_column, manifest.group_column)
    ]
    if schema is None:
        schema = fit_schema(table, feature_columns)
    X_tab = encode_tabular(table, schema)
    numeric_mask = schema.numeric_column_mask()
    if X_tab.size and np.isnan(X_tab[:, ~numeric_mask]).any():
        raise SchemaError("indicator columns contain missing values")

    id_to_row = {v: i for i, v in enumerate(ids)}
    embeddings = {}
    for name, path in manifest.embedding_paths.items():
        emb_ids, values = _read_embedding_csv(path, name)
        missing_in_tab = sorted(set(emb_ids) - set(ids))
        missing_in_emb = sorted(set(ids) - set(emb_ids))
        if missing_in_tab or missing_in_emb:
            parts = []
            if missing_in_tab:
                parts.append(f"embedding ids absent from tabular file: {missing_in_tab[:5]}")
            if missing_in_emb:
                parts.append(f"tabular ids absent from embedding {name!r}: {missing_in_emb[:5]}")
            raise SchemaError("; ".join(parts))
        rows = np.asarray([id_to_row[v] for v in emb_ids])
        aligned = np.empty_like(values)
        aligned[rows] = values
        embeddings[name] = aligned

    dataset = MultimodalDataset(
        X_tab=X_tab,
        embeddings=embeddings,
        y=y,
        groups=groups,
        ids=ids,
        class_names=[str(c) for c in class_names],
        task=manifest.task,
        feature_names=schema.feature_names(),
    )
    dataset.validate()
    return dataset, schema
