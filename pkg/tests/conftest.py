import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from mcsm import data
from mcsm import semantic_space as ss


def tiny_image_space(seed=0, dtype=np.float64, feature_dim=4, hidden_dim=3,
                     target_dim=3, word_dim=4, attention_dim=3, lstm_units=1):
    dims = ss.DimConfig(feature_dim=feature_dim, hidden_dim=hidden_dim,
                        attention_dim=attention_dim, target_dim=target_dim,
                        conv_layers=0, grid_size=0)
    return ss.create_image_space(dims, word_dim=word_dim, seed=seed, dtype=dtype,
                                 lstm_units=lstm_units)


def tiny_text_space(seed=0, dtype=np.float64, word_dim=4, hidden_dim=3, target_dim=3,
                    attention_dim=3, conv_specs=((3, 2, 1), (3, 2, 1)), lstm_units=1):
    dims = ss.DimConfig(feature_dim=word_dim, hidden_dim=hidden_dim,
                        attention_dim=attention_dim, target_dim=target_dim,
                        conv_layers=len(conv_specs), grid_size=0)
    return ss.create_text_space(dims, conv_specs=conv_specs, seed=seed, dtype=dtype,
                                lstm_units=lstm_units)


@pytest.fixture(scope="session")
def small_dataset():
    """3 categories x (4 train + 2 val + 2 test) pairs, 16-d features."""
    return data.generate_synthetic(data.SynthConfig(
        categories=3, train_pairs=4, val_pairs=2, test_pairs=2, seed=11))
