"""Reduction of interference phases to bipartite spacetime loop integrals.

An assignment sends each source to the party that received its particle.
For two assignments with equal per-party counts there is a matching
permutation pi of the sources; the orbits of <pi> yield a bracket
expansion of the phase difference where every bracket is a closed
two-source/two-party loop.  The expansion is verified with exact integer
formal sums.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .errors import CountMismatch, MissingPath
from .gauge import GaugePotential, OrientedSegment, SpacetimePath, line_phase, loop_phase

# formal symbol for the path phase from source j to party n
PhaseSymbol = Tuple[int, int]  # (party n, source j)


@dataclass(frozen=True)
class Assignment:
    """Map source index j -> party index n_j (one party per source)."""

    parties: Tuple[int, ...]

    def __post_init__(self):
        if not self.parties:
            raise ValueError("assignment must cover at least one source")

    @property
    def num_sources(self) -> int:
        return len(self.parties)

    def party_counts(self) -> Counter:
        return Counter(self.parties)

    def formal_sum(self, sign: int = 1) -> Counter:
        c: Counter = Counter()
        for j, n in enumerate(self.parties):
            c[(n, j)] += sign
        return c


@dataclass(frozen=True)
class MatchingPermutation:
    """Permutation pi of sources with n'_{pi(j)} = n_j."""

    mapping: Tuple[int, ...]

    def __call__(self, j: int) -> int:
        return self.mapping[j]

    def orbits(self) -> List[List[int]]:
        """Orbits of <pi> on the source set, representative = minimal index."""
        seen = set()
        orbits = []
        for start in range(len(self.mapping)):
            if start in seen:
                continue
            orbit = [start]
            seen.add(start)
            j = self.mapping[start]
            while j != start:
                orbit.append(j)
                seen.add(j)
                j = self.mapping[j]
            orbits.append(orbit)
        return orbits


@dataclass(frozen=True)
class Bracket:
    """phi(n, j) - phi(n, j2) + phi(n2, j2) - phi(n2, j): one bipartite loop."""

    party: int
    source: int
    source2: int
    party2: int

    def formal_sum(self) -> Counter:
        c: Counter = Counter()
        c[(self.party, self.source)] += 1
        c[(self.party, self.source2)] -= 1
        c[(self.party2, self.source2)] += 1
        c[(self.party2, self.source)] -= 1
        return c


@dataclass
class LoopDecomposition:
    brackets: List[Bracket]
    formal_sum: Counter = field(default_factory=Counter)

    def bracket_formal_sum(self) -> Counter:
        total: Counter = Counter()
        for b in self.brackets:
            total.update(b.formal_sum())
        return +total  # drop zero entries

    def is_exact(self) -> bool:
        return self.bracket_formal_sum() == +self.formal_sum


def _check_counts(x: Assignment, xp: Assignment) -> None:
    if x.num_sources != xp.num_sources:
        raise CountMismatch("assignments cover different numbers of sources")
    if x.party_counts() != xp.party_counts():
        raise CountMismatch("per-party source counts differ between assignments")


def find_matching_permutation(x: Assignment, xp: Assignment) -> MatchingPermutation:
    """pi with n'_{pi(j)} = n_j; ties broken by ascending-index matching."""
    _check_counts(x, xp)
    by_party: Dict[int, List[int]] = {}
    for j, n in enumerate(xp.parties):
        by_party.setdefault(n, []).append(j)
    mapping = [0] * x.num_sources
    cursor = {n: 0 for n in by_party}
    for j in range(x.num_sources):  # ascending x-sources per party
        n = x.parties[j]
        mapping[j] = by_party[n][cursor[n]]
        cursor[n] += 1
    return MatchingPermutation(tuple(mapping))


def phase_difference_formal_sum(x: Assignment, xp: Assignment) -> Counter:
    """Formal sum of Delta phi(x, x') = sum_j [phi(n_j, j) - phi(n'_j, j)]."""
    c = x.formal_sum(+1)
    c.update(xp.formal_sum(-1))
    return +c


def decompose_phase(x: Assignment, xp: Assignment) -> LoopDecomposition:
    """Bracket expansion of Delta phi(x, x') over the orbits of <pi>.

    Each orbit of size k contributes k - 1 bipartite brackets; fixed points
    contribute nothing.  The identity permutation yields the empty
    decomposition.
    """
    pi = find_matching_permutation(x, xp)
    n = x.parties
    brackets: List[Bracket] = []
    for orbit in pi.orbits():
        k = len(orbit)
        if k < 2:
            continue
        y = orbit[0]  # minimal index by construction
        chain = [y]
        j = pi(y)
        while j != y:
            chain.append(j)
            j = pi(j)
        for l in range(k - 1):
            a = chain[l]        # pi^l(y)
            b = chain[l + 1]    # pi^(l+1)(y)
            brackets.append(Bracket(party=n[a], source=y, source2=b, party2=n[b]))
    decomp = LoopDecomposition(brackets=brackets,
                               formal_sum=phase_difference_formal_sum(x, xp))
    assert decomp.is_exact(), "bracket expansion failed the exact formal-sum check"
    return decomp


def evaluate_decomposition(
    decomp: LoopDecomposition,
    paths: Dict[PhaseSymbol, SpacetimePath],
    potential: GaugePotential,
    charge: int,
    check_closure: bool = True,
) -> float:
    """Numerical phase: sum of closed-loop phases over the brackets."""
    needed = {sym for b in decomp.brackets
              for sym in [(b.party, b.source), (b.party, b.source2),
                          (b.party2, b.source2), (b.party2, b.source)]}
    missing = sorted(needed - set(paths))
    if missing:
        raise MissingPath(f"no path supplied for phase symbols {missing}")
    total = 0.0
    for b in decomp.brackets:
        if check_closure:
            segments = [
                OrientedSegment(paths[(b.party, b.source)], +1),
                OrientedSegment(paths[(b.party, b.source2)], -1),
                OrientedSegment(paths[(b.party2, b.source2)], +1),
                OrientedSegment(paths[(b.party2, b.source)], -1),
            ]
            total += loop_phase(potential, segments, charge)
        else:
            total += (
                line_phase(potential, paths[(b.party, b.source)], charge)
                - line_phase(potential, paths[(b.party, b.source2)], charge)
                + line_phase(potential, paths[(b.party2, b.source2)], charge)
                - line_phase(potential, paths[(b.party2, b.source)], charge)
            )
    return total
