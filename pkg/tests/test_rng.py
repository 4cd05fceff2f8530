import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowdev.rng import block_generator, block_sizes, frequency, reduce_mean, run_blocks


def normal_sampler(rng, size):
    return rng.standard_normal(size)


@given(st.integers(1, 10_000), st.integers(1, 3000))
def test_block_sizes_cover(n, block):
    sizes = block_sizes(n, block)
    assert sum(sizes) == n and all(0 < s <= block for s in sizes)


def test_streams_reproducible_and_distinct():
    a = block_generator(5, 0).standard_normal(4)
    assert np.array_equal(a, block_generator(5, 0).standard_normal(4))
    assert not np.array_equal(a, block_generator(5, 1).standard_normal(4))
    assert not np.array_equal(a, block_generator(6, 0).standard_normal(4))


@pytest.mark.parametrize("workers", [2, 4])
def test_worker_count_does_not_change_result(workers):
    one = reduce_mean(run_blocks(normal_sampler, 25_500, 9, 1000, 1), 9)
    many = reduce_mean(run_blocks(normal_sampler, 25_500, 9, 1000, workers), 9)
    assert one == many


def test_mean_and_se():
    est = reduce_mean(run_blocks(normal_sampler, 50_000, 1), 1)
    assert abs(est.value) < 4 * est.std_error
    assert est.std_error == pytest.approx(1 / np.sqrt(50_000), rel=0.05)


def test_frequency_zero_successes():
    est = frequency([np.zeros(500), np.zeros(500)], 0)
    assert est.value == 0 and est.flags["zero_successes"] and est.flags["upper_95"] == pytest.approx(3e-3)
