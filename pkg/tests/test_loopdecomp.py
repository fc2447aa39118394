import math
import random
from collections import Counter

import pytest

from loccphase.errors import CountMismatch, MissingPath
from loccphase.gauge import (
    FluxSchedule,
    SolenoidPotential,
    SpacetimeEvent,
    SpacetimePath,
    line_phase,
)
from loccphase.loopdecomp import (
    Assignment,
    decompose_phase,
    evaluate_decomposition,
    find_matching_permutation,
    phase_difference_formal_sum,
)


def random_pair(rng: random.Random, num_sources: int, num_parties: int):
    x = Assignment(tuple(rng.randrange(num_parties) for _ in range(num_sources)))
    shuffled = list(range(num_sources))
    rng.shuffle(shuffled)
    xp = Assignment(tuple(x.parties[j] for j in shuffled))
    return x, xp


def test_matching_permutation_aligns_parties():
    rng = random.Random(101)
    for _ in range(50):
        x, xp = random_pair(rng, rng.randint(1, 8), rng.randint(1, 4))
        pi = find_matching_permutation(x, xp)
        assert sorted(pi.mapping) == list(range(x.num_sources))
        for j in range(x.num_sources):
            assert xp.parties[pi(j)] == x.parties[j]


def test_orbits_partition_the_sources():
    rng = random.Random(5)
    for _ in range(30):
        x, xp = random_pair(rng, rng.randint(2, 9), rng.randint(1, 4))
        pi = find_matching_permutation(x, xp)
        orbits = pi.orbits()
        flat = sorted(j for orbit in orbits for j in orbit)
        assert flat == list(range(x.num_sources))
        for orbit in orbits:
            assert orbit[0] == min(orbit)


def test_bracket_expansion_is_exact_formal_sum():
    rng = random.Random(77)
    for _ in range(200):
        x, xp = random_pair(rng, rng.randint(1, 10), rng.randint(1, 6))
        decomp = decompose_phase(x, xp)
        assert decomp.is_exact()
        assert decomp.bracket_formal_sum() == +phase_difference_formal_sum(x, xp)
        pi = find_matching_permutation(x, xp)
        expected = sum(len(o) - 1 for o in pi.orbits())
        assert len(decomp.brackets) == expected


def test_identical_assignments_need_no_brackets():
    x = Assignment((0, 1, 2, 1))
    decomp = decompose_phase(x, x)
    assert decomp.brackets == []
    assert +decomp.formal_sum == Counter()


def test_three_party_cycle_gives_two_brackets():
    x = Assignment((0, 1, 2))
    xp = Assignment((1, 2, 0))
    decomp = decompose_phase(x, xp)
    assert len(decomp.brackets) == 2
    assert decomp.is_exact()


def test_count_mismatch_is_rejected():
    with pytest.raises(CountMismatch):
        decompose_phase(Assignment((0, 1)), Assignment((0, 0)))
    with pytest.raises(CountMismatch):
        decompose_phase(Assignment((0, 1)), Assignment((0, 1, 1)))


def _paths_for(num_parties: int, num_sources: int):
    # distinct endpoints in the x > 0.4 half plane, away from the flux line
    paths = {}
    for n in range(num_parties):
        for j in range(num_sources):
            start = SpacetimeEvent(0.0, 1.0 + 0.1 * j, 0.1 * j)
            end = SpacetimeEvent(1.0, 0.5 + 0.3 * n, 0.8 + 0.2 * n * j)
            paths[(n, j)] = SpacetimePath([start, end])
    return paths


def test_evaluated_decomposition_matches_direct_phase_difference():
    rng = random.Random(19)
    potential = SolenoidPotential(FluxSchedule.constant(1.7))
    for _ in range(20):
        num_sources = rng.randint(2, 5)
        num_parties = rng.randint(2, 3)
        x, xp = random_pair(rng, num_sources, num_parties)
        paths = _paths_for(num_parties, num_sources)
        decomp = decompose_phase(x, xp)
        value = evaluate_decomposition(decomp, paths, potential, charge=1,
                                       check_closure=False)
        direct = sum(
            line_phase(potential, paths[(x.parties[j], j)], 1)
            - line_phase(potential, paths[(xp.parties[j], j)], 1)
            for j in range(num_sources)
        )
        assert abs(value - direct) < 1e-8


def test_missing_path_is_reported():
    decomp = decompose_phase(Assignment((0, 1)), Assignment((1, 0)))
    with pytest.raises(MissingPath):
        evaluate_decomposition(decomp, {}, SolenoidPotential(
            FluxSchedule.constant(1.0)), charge=1)
