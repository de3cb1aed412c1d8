import numpy as np
import pytest

from qcomm import ConfigError, SyntheticSpec, default_spiky_spec, gen_synthetic, rank_seeds


def test_pure_gaussian_when_rate_zero():
    spec = SyntheticSpec(n=4096, seed=1)
    v = gen_synthetic(spec)
    assert v.size == 4096
    assert np.abs(v).max() < 10  # no 50-sigma spikes
    assert abs(v.mean()) < 0.2 and abs(v.std() - 1.0) < 0.1


def test_spike_count_frozen():
    # p = 1/32 over 4096 draws: expectation 128; this seed lands on 133
    spec = SyntheticSpec(n=4096, seed=2024, spike_rate=1 / 32, spike_magnitude=50.0)
    v = gen_synthetic(spec)
    spikes = int(np.sum(np.abs(v) >= 49.0))
    assert spikes == 133
    assert set(np.sign(v[np.abs(v) >= 49.0])) == {-1.0, 1.0}


def test_spike_values_are_plus_minus_lambda_sigma():
    spec = SyntheticSpec(n=4096, seed=3, sigma=2.0, spike_rate=0.05, spike_magnitude=10.0)
    v = gen_synthetic(spec)
    spikes = v[np.abs(v) >= 19.9]
    assert spikes.size > 0
    assert np.allclose(np.abs(spikes), 20.0)


def test_same_seed_identical():
    spec = default_spiky_spec(4096, 99)
    assert np.array_equal(gen_synthetic(spec), gen_synthetic(spec))


def test_different_seeds_differ():
    assert not np.array_equal(
        gen_synthetic(default_spiky_spec(4096, 1)), gen_synthetic(default_spiky_spec(4096, 2))
    )


def test_invalid_specs_rejected():
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(n=0, seed=1))
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(n=8, seed=1, spike_rate=1.5))
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(n=8, seed=1, sigma=-1.0))


def test_rank_seeds_deterministic_and_distinct():
    a = rank_seeds(42, 8)
    b = rank_seeds(42, 8)
    assert a == b
    assert len(set(a)) == 8
    assert rank_seeds(43, 8) != a
