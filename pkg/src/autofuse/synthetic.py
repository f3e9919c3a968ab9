"""Synthetic multimodal datasets for tests, benchmarks, and demos.

Three generators, all writing the standard manifest + CSV layout:

cross_modal_xor   label = tabular bit XOR embedding bit, so neither
                  modality alone beats chance but their interaction is
                  fully informative.
ambiguous_half    the tabular block resolves one half of the classes and
                  the embedding block the other half, giving a known
                  ambiguous subset for acquisition experiments.
exchangeable      i.i.d. draws from a small set of prototype cells with a
                  known, exactly logistic posterior, for conformal tests.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .exceptions import ConfigError

KINDS = ("cross_modal_xor", "ambiguous_half", "exchangeable")

# Exchangeable prototype cells: per-cell posterior (descending), rotated
# so the dominant class cycles with the cell index. The discrete support
# gives the conformal score distribution a controlled ladder of atoms
# around the 0.9 quantile, making split calibration mildly conservative
# instead of knife-edge (coverage concentrates near 0.905-0.915).
EXCHANGEABLE_CELLS = np.array(
    [
        [0.505, 0.420, 0.075],
        [0.565, 0.360, 0.075],
        [0.625, 0.300, 0.075],
        [0.685, 0.240, 0.075],
        [0.745, 0.180, 0.075],
        [0.805, 0.120, 0.075],
        [0.672, 0.258, 0.070],
        [0.672, 0.258, 0.070],
        [0.819, 0.126, 0.055],
        [0.850, 0.108, 0.042],
        [0.874, 0.096, 0.030],
        [0.890, 0.090, 0.020],
    ]
)


def _fmt(v: float) -> str:
    return format(float(v), ".8g")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _ids(n: int) -> list[str]:
    width = max(4, len(str(n - 1)))
    return [f"s{i:0{width}d}" for i in range(n)]


def sample_cross_modal_xor(n: int, seed: int, embed_dim: int = 8, noise: float = 0.25) -> dict:
    rng = np.random.default_rng(seed)
    bit_tab = rng.integers(0, 2, size=n)
    bit_emb = rng.integers(0, 2, size=n)
    y = bit_tab ^ bit_emb

    age = np.round(rng.normal(55.0, 12.0, size=n), 1)
    region_pool = np.array(["arm", "face", "back", "unknown"])
    region = region_pool[rng.choice(4, size=n, p=[0.4, 0.3, 0.2, 0.1])]

    E = rng.normal(0.0, 1.0, size=(n, embed_dim))
    E[:, 0] = (2.0 * bit_emb - 1.0) + rng.normal(0.0, noise, size=n)

    # patients own 1-2 consecutive samples so grouping is non-trivial
    groups, patient = [], 0
    while len(groups) < n:
        size = int(rng.integers(1, 3))
        groups.extend([f"p{patient:04d}"] * size)
        patient += 1
    groups = groups[:n]

    tabular = {
        "bit": [str(int(b)) for b in bit_tab],
        "age": [_fmt(a) for a in age],
        "region": list(region),
    }
    return {
        "ids": _ids(n),
        "groups": groups,
        "labels": [str(int(v)) for v in y],
        "tabular": tabular,
        "embeddings": {"image": E},
        "task": "binary",
        "info": {"kind": "cross_modal_xor", "n": n, "seed": seed},
    }


def sample_ambiguous_half(n: int, seed: int, embed_dim: int = 6, noise: float = 0.05) -> dict:
    rng = np.random.default_rng(seed)
    pair = rng.integers(0, 2, size=n)
    within = rng.integers(0, 2, size=n)
    y = 2 * pair + within

    tab_code = np.where(pair == 0, within.astype(float), 0.5) + rng.normal(0, noise, size=n)
    tab_noise = rng.normal(0.0, 1.0, size=n)

    E = rng.normal(0.0, 1.0, size=(n, embed_dim))
    E[:, 0] = np.where(pair == 1, 2.0 * within - 1.0, 0.0) + rng.normal(0, noise, size=n)

    tabular = {
        "pair": [str(int(b)) for b in pair],
        "code": [_fmt(v) for v in tab_code],
        "extra": [_fmt(v) for v in tab_noise],
    }
    return {
        "ids": _ids(n),
        "groups": [f"p{i:04d}" for i in range(n)],
        "labels": [str(int(v)) for v in y],
        "tabular": tabular,
        "embeddings": {"image": E},
        "task": "multiclass",
        "info": {"kind": "ambiguous_half", "n": n, "seed": seed},
    }


def exchangeable_priors() -> np.ndarray:
    """Configured class priors: uniform cells times the rotated posteriors."""
    priors = np.zeros(3)
    for j, cell in enumerate(EXCHANGEABLE_CELLS):
        priors += np.roll(cell, j % 3)
    return priors / len(EXCHANGEABLE_CELLS)


def sample_exchangeable(n: int, seed: int, embed_dim: int = 4) -> dict:
    """Cells -> exact posterior -> labels; P_true rows are the posteriors."""
    rng = np.random.default_rng(seed)
    m = len(EXCHANGEABLE_CELLS)
    cells = rng.integers(0, m, size=n)
    P_true = np.stack([np.roll(EXCHANGEABLE_CELLS[c], c % 3) for c in cells])
    u = rng.random(n)
    cdf = np.cumsum(P_true, axis=1)
    y = (u[:, None] > cdf).sum(axis=1)

    E = rng.normal(0.0, 1.0, size=(n, embed_dim))
    E[:, 0] = cells / (m - 1) + rng.normal(0, 0.1, size=n)

    tabular = {"cell": [f"c{c:02d}" for c in cells]}
    return {
        "ids": _ids(n),
        "groups": [f"p{i:04d}" for i in range(n)],
        "labels": [str(int(v)) for v in y],
        "tabular": tabular,
        "embeddings": {"image": E},
        "task": "multiclass",
        "P_true": P_true,
        "cells": cells,
        "info": {
            "kind": "exchangeable",
            "n": n,
            "seed": seed,
            "priors": [float(p) for p in exchangeable_priors()],
        },
    }


_SAMPLERS = {
    "cross_modal_xor": sample_cross_modal_xor,
    "ambiguous_half": sample_ambiguous_half,
    "exchangeable": sample_exchangeable,
}


def make_synthetic(kind: str, n: int, seed: int, out_dir: str, **kwargs) -> dict:
    """Generate a dataset and write manifest + CSVs; returns generator info.

    Identical (kind, n, seed) always produce byte-identical files.
    """
    if kind not in _SAMPLERS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if n < 40:
        raise ConfigError("n must be >= 40")
    data = _SAMPLERS[kind](n, seed, **kwargs)

    os.makedirs(out_dir, exist_ok=True)
    feature_cols = list(data["tabular"])
    header = ["id", "patient", "label", *feature_cols]
    rows = [
        [data["ids"][i], data["groups"][i], data["labels"][i]]
        + [data["tabular"][c][i] for c in feature_cols]
        for i in range(n)
    ]
    tabular_path = os.path.join(out_dir, "tabular.csv")
    _write_csv(tabular_path, header, rows)

    embedding_paths = {}
    for name, E in data["embeddings"].items():
        path = os.path.join(out_dir, f"{name}.csv")
        _write_csv(
            path,
            ["id", *[f"e{i}" for i in range(E.shape[1])]],
            (
                [data["ids"][i], *[_fmt(v) for v in E[i]]]
                for i in range(n)
            ),
        )
        embedding_paths[name] = f"{name}.csv"

    manifest = {
        "tabular_path": "tabular.csv",
        "embedding_paths": embedding_paths,
        "label_column": "label",
        "group_column": "patient",
        "id_column": "id",
        "task": data["task"],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data["info"], fh, indent=2, sort_keys=True)
        fh.write("\n")

    info = dict(data["info"])
    info["manifest_path"] = manifest_path
    return info
