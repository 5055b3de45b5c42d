# File: tests/test_determinism.py
# Description: Reproducibility of Monte Carlo curves across seeds, worker counts and reruns
# Author: serlab developers
# Created: 2026-10-19

import numpy as np
import pytest

from serlab.config import Settings
from serlab.constellation import standard_constellation
from serlab.ser_engine import Axis, Quantity, curve


pytestmark = pytest.mark.fast

GRID = np.geomspace(0.1, 10.0, 8)


def run(quantity, workers, seed=11, index=None, axis=Axis.SNR):
    c = standard_constellation("mpsk", 8)
    return curve(c, axis, GRID, quantity, samples=20_000, seed=seed, index=index,
                 settings=Settings(mc_chunk_size=1000, workers=workers))


class TestDeterminism:
    """Test Monte Carlo output depends only on the seed and the chunking."""

    @pytest.mark.parametrize("quantity,index", [
        (Quantity.PE, None),
        (Quantity.PCI, 3),
        (Quantity.D1, None),
        (Quantity.D2, 2),
    ])
    def test_worker_count_does_not_matter(self, quantity, index):
        single = run(quantity, workers=1, index=index)
        pooled = run(quantity, workers=4, index=index)
        np.testing.assert_array_equal(single.values, pooled.values)
        np.testing.assert_array_equal(single.std_errors, pooled.std_errors)

    def test_reruns_are_identical(self):
        first = run(Quantity.PE, workers=2, axis=Axis.NOISE)
        second = run(Quantity.PE, workers=2, axis=Axis.NOISE)
        np.testing.assert_array_equal(first.values, second.values)

    def test_seed_changes_the_draws(self):
        assert not np.array_equal(run(Quantity.PE, 1, seed=1).values, run(Quantity.PE, 1, seed=2).values)

    def test_estimate_records_its_seed(self):
        est = run(Quantity.PE, 1, seed=5)
        assert est.seed == 5
        assert est.sample_count > 0
