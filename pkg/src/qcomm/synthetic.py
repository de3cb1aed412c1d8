"""Seeded synthetic activation vectors: Gaussian body plus rare huge spikes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian(mu, sigma) samples; a spike_rate fraction of positions is
    replaced by mu +/- spike_magnitude * sigma with random sign."""

    n: int
    seed: int
    mu: float = 0.0
    sigma: float = 1.0
    spike_rate: float = 0.0
    spike_magnitude: float = 50.0


def default_spiky_spec(n: int, seed: int) -> SyntheticSpec:
    """Heavy-tailed default: unit Gaussian with ~1/64 of entries at +/-50 sigma."""
    return SyntheticSpec(n=n, seed=seed, spike_rate=1.0 / 64.0, spike_magnitude=50.0)


def gen_synthetic(spec: SyntheticSpec) -> np.ndarray:
    """Deterministic per seed; identical specs give identical vectors."""
    if spec.n <= 0:
        raise ConfigError(f"n must be positive, got {spec.n}")
    if not 0.0 <= spec.spike_rate <= 1.0:
        raise ConfigError(f"spike_rate must be in [0, 1], got {spec.spike_rate}")
    if spec.sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {spec.sigma}")
    rng = np.random.default_rng(spec.seed)
    values = rng.normal(spec.mu, spec.sigma, spec.n)
    mask = rng.random(spec.n) < spec.spike_rate
    signs = rng.integers(0, 2, spec.n) * 2 - 1
    values[mask] = spec.mu + signs[mask] * spec.spike_magnitude * spec.sigma
    return values


def rank_seeds(seed: int, n_ranks: int) -> list[int]:
    """Independent per-rank child seeds derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1)[0]) for child in ss.spawn(n_ranks)]
