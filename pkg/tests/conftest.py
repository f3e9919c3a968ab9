import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def xor_dataset(tmp_path):
    """A small cross-modal XOR dataset loaded through the manifest path."""
    from autofuse.data import load_dataset, load_manifest
    from autofuse.synthetic import make_synthetic

    info = make_synthetic("cross_modal_xor", 200, 7, str(tmp_path / "xor"))
    dataset, schema = load_dataset(load_manifest(info["manifest_path"]))
    return dataset


@pytest.fixture
def separable(rng):
    """Linearly separable 2-D binary data (label = sign of x0)."""
    X = rng.normal(size=(80, 2))
    X[:, 0] += np.where(X[:, 0] > 0, 0.5, -0.5)  # margin
    y = (X[:, 0] > 0).astype(int)
    return X, y
