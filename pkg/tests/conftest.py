import numpy as np
import pytest

from signtune.data import generate_synthetic_regions, load_images, split_by_region
from signtune.prompts import generate_prompt_set, load_pools, load_taxonomy


@pytest.fixture(scope="session")
def taxonomy6():
    return load_taxonomy().subset(6)


@pytest.fixture(scope="session")
def prompt_set6(taxonomy6):
    return generate_prompt_set(taxonomy6, load_pools(), n_per_class=4, seed=0)


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    return generate_synthetic_regions(
        n_classes=6, n_regions=3, samples_per_class_region=10,
        style_shift_strength=0.5, seed=7, out_dir=root,
    )


@pytest.fixture(scope="session")
def synth_split(synth_manifest):
    return split_by_region(synth_manifest, ["R0"])


@pytest.fixture(scope="session")
def train_arrays(synth_split):
    X, y, _ = load_images(synth_split.train)
    rng = np.random.default_rng(0)
    idx = rng.permutation(len(X))
    n_val = len(X) // 5
    return {
        "X": X[idx[n_val:]], "y": y[idx[n_val:]],
        "X_val": X[idx[:n_val]], "y_val": y[idx[:n_val]],
    }
