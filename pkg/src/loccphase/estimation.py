"""Finite-shot sampling and maximum-likelihood phase recovery.

Sampling is counter-based (Philox keyed by the seed, one counter slot per
shot) so identical (distribution, shots, seed) triples reproduce the same
counts regardless of execution order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, List, Sequence, Tuple

import numpy as np

from .errors import DegenerateLikelihood

TWO_PI = 2.0 * math.pi

GRID_POINTS = 721
REFINE_TOL = 1e-10


def wrap_phase(phi: float) -> float:
    """Wrap into the reporting interval (-pi, pi]."""
    w = math.fmod(phi + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def circular_distance(a: float, b: float) -> float:
    return abs(wrap_phase(a - b))


@dataclass
class CountTable:
    """Per-setting outcome counts."""

    shots: int
    seed: int
    counts: Dict[Hashable, Dict[Hashable, int]] = field(default_factory=dict)

    def setting(self, key: Hashable) -> Dict[Hashable, int]:
        return self.counts.get(key, {})


@dataclass
class PhaseEstimate:
    value: float
    standard_error: float
    log_likelihood: float


def sample_distribution(dist: Dict[Hashable, float], shots: int, seed: int) -> Dict[Hashable, int]:
    """Deterministic multinomial draw: shot i consumes the i-th Philox uniform."""
    if shots < 0:
        raise ValueError("shots must be nonnegative")
    if shots == 0:
        return {}
    outcomes = sorted(dist.keys())
    probs = np.array([max(dist[o], 0.0) for o in outcomes], dtype=float)
    total = probs.sum()
    if total <= 0.0:
        raise ValueError("distribution has no probability mass")
    probs /= total
    edges = np.cumsum(probs)
    edges[-1] = 1.0
    uniforms = np.random.Generator(np.random.Philox(key=seed)).random(shots)
    idx = np.searchsorted(edges, uniforms, side="right")
    counts: Dict[Hashable, int] = {}
    for i, n in zip(*np.unique(idx, return_counts=True)):
        counts[outcomes[int(i)]] = int(n)
    return counts


def sample(dist_by_setting: Dict[Hashable, Dict[Hashable, float]], shots: int,
           seed: int) -> CountTable:
    """Sample `shots` shots per setting; per-setting streams derived from the seed."""
    table = CountTable(shots=shots, seed=seed)
    for k, setting_key in enumerate(sorted(dist_by_setting.keys(), key=repr)):
        table.counts[setting_key] = sample_distribution(
            dist_by_setting[setting_key], shots, seed + 0x9E3779B9 * (k + 1)
        )
    return table


def _log_likelihood(counts: CountTable,
                    model: Callable[[Hashable], Callable[[float], Dict[Hashable, float]]],
                    phi: float) -> float:
    ll = 0.0
    for setting_key, outcome_counts in counts.counts.items():
        dist = model(setting_key)(phi)
        for outcome, n in outcome_counts.items():
            if n == 0:
                continue
            p = dist.get(outcome, 0.0)
            if p <= 0.0:
                return -math.inf
            ll += n * math.log(p)
    return ll


def _golden_section(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def mle_delta_phi(counts: CountTable,
                  model: Callable[[Hashable], Callable[[float], Dict[Hashable, float]]],
                  ) -> PhaseEstimate:
    """Grid search plus golden-section refinement of the joint likelihood.

    `model` maps a setting key to a function delta_phi -> outcome
    distribution.  The standard error comes from the observed Fisher
    information at the maximum.
    """
    if not counts.counts:
        raise DegenerateLikelihood("no settings in the count table")

    def ll(phi: float) -> float:
        return _log_likelihood(counts, model, phi)

    grid = np.linspace(-math.pi, math.pi, GRID_POINTS)
    values = np.array([ll(p) for p in grid])
    if not np.isfinite(values).any():
        raise DegenerateLikelihood("likelihood vanishes on the whole grid")
    spread = values[np.isfinite(values)]
    if spread.max() - spread.min() < 1e-12:
        raise DegenerateLikelihood("likelihood is flat in the phase")
    k = int(np.argmax(values))
    # refine in a bracket around the best grid point (wrap-aware)
    step = grid[1] - grid[0]
    lo, hi = grid[k] - step, grid[k] + step
    best = _golden_section(ll, lo, hi, REFINE_TOL)
    best_ll = ll(best)
    # observed information via a central second difference
    h = 1e-5
    d2 = (ll(best + h) - 2.0 * best_ll + ll(best - h)) / (h * h)
    info = -d2
    se = 1.0 / math.sqrt(info) if info > 0.0 else math.inf
    return PhaseEstimate(value=wrap_phase(best), standard_error=se,
                         log_likelihood=best_ll)


def extract_phase_from_settings(expectations: Dict[float, float]) -> float:
    """Recover delta_phi from correlator values E(setting) = cos(delta + setting).

    Needs the 0 and pi/2 settings.
    """
    c = expectations[0.0]
    s = -expectations[math.pi / 2.0]
    return math.atan2(s, c)
