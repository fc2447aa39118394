"""Occupation-number state algebra for a fixed registry of modes.

States are sparse maps from occupation tuples to complex amplitudes.
Fermionic sign conventions are fixed by the registry's canonical mode
order: applying a creation operator to a basis state picks up
(-1)^(number of occupied fermionic modes with smaller index).
All operations are pure; inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Sequence, Tuple

import numpy as np

from .errors import (
    BosonCapExceeded,
    EmptyPostselection,
    InvalidMode,
    MixedSpeciesTransform,
    NonSquareMatrix,
    RegistryMismatch,
)

BasisState = Tuple[int, ...]

PRUNE_THRESHOLD = 1e-15

FERMION = "fermion"
BOSON = "boson"

REGISTER_PRIMARY = "primary"
REGISTER_REFERENCE = "reference"
REGISTER_PHOTON = "photon"

_REGISTER_RANK = {REGISTER_PRIMARY: 0, REGISTER_REFERENCE: 1, REGISTER_PHOTON: 2}


@dataclass(frozen=True, order=True)
class ModeDescriptor:
    party: str
    label: str
    species: str = FERMION
    charge: int = 0
    register: str = REGISTER_PRIMARY

    def __post_init__(self):
        if self.species not in (FERMION, BOSON):
            raise ValueError(f"unknown species {self.species!r}")
        if self.register not in _REGISTER_RANK:
            raise ValueError(f"unknown register {self.register!r}")
        if self.species == BOSON and self.charge != 0:
            raise ValueError("bosonic modes must be uncharged")

    @property
    def is_fermion(self) -> bool:
        return self.species == FERMION

    def sort_key(self):
        return (self.party, _REGISTER_RANK[self.register], self.label)


class ModeRegistry:
    """Globally ordered, immutable list of modes.

    Canonical order is (party, register, label) lexicographic; fermionic
    signs are defined against it.
    """

    def __init__(self, modes: Iterable[ModeDescriptor], boson_cap: int = 4):
        modes = sorted(modes, key=ModeDescriptor.sort_key)
        if boson_cap < 1:
            raise ValueError("boson_cap must be positive")
        keys = [m.sort_key() for m in modes]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (party, register, label) in registry")
        self._modes: Tuple[ModeDescriptor, ...] = tuple(modes)
        self.boson_cap = boson_cap
        self._index = {m.sort_key(): i for i, m in enumerate(self._modes)}
        self._fermion_flags = tuple(m.is_fermion for m in self._modes)

    @property
    def modes(self) -> Tuple[ModeDescriptor, ...]:
        return self._modes

    def __len__(self) -> int:
        return len(self._modes)

    def __getitem__(self, i: int) -> ModeDescriptor:
        return self._modes[i]

    def index_of(self, party: str, label: str, register: str = REGISTER_PRIMARY) -> int:
        key = (party, _REGISTER_RANK[register], label)
        if key not in self._index:
            raise InvalidMode(f"no mode {party}:{label} in register {register}")
        return self._index[key]

    def parties(self) -> Tuple[str, ...]:
        seen = []
        for m in self._modes:
            if m.party not in seen:
                seen.append(m.party)
        return tuple(seen)

    def party_modes(self, party: str, register: str = REGISTER_PRIMARY) -> Tuple[int, ...]:
        return tuple(
            i for i, m in enumerate(self._modes)
            if m.party == party and m.register == register
        )

    def vacuum_occupations(self) -> BasisState:
        return (0,) * len(self._modes)

    def validate_basis(self, occ: BasisState) -> None:
        if len(occ) != len(self._modes):
            raise ValueError("occupation length does not match registry")
        for n, m in zip(occ, self._modes):
            if m.is_fermion and n not in (0, 1):
                raise ValueError("fermionic occupation must be 0 or 1")
            if not m.is_fermion and not (0 <= n <= self.boson_cap):
                raise ValueError("bosonic occupation outside [0, cap]")


class QuantumState:
    """Sparse complex amplitude vector over occupation basis states."""

    __slots__ = ("registry", "_amps")

    def __init__(self, registry: ModeRegistry, amplitudes: Dict[BasisState, complex] | None = None):
        self.registry = registry
        amps: Dict[BasisState, complex] = {}
        if amplitudes:
            for occ, a in amplitudes.items():
                if abs(a) > PRUNE_THRESHOLD:
                    registry.validate_basis(occ)
                    amps[occ] = complex(a)
        self._amps = amps

    @classmethod
    def vacuum(cls, registry: ModeRegistry) -> "QuantumState":
        return cls(registry, {registry.vacuum_occupations(): 1.0})

    @classmethod
    def basis(cls, registry: ModeRegistry, occ: Sequence[int]) -> "QuantumState":
        return cls(registry, {tuple(occ): 1.0})

    @property
    def amplitudes(self) -> Dict[BasisState, complex]:
        return dict(self._amps)

    def items(self):
        return self._amps.items()

    def __len__(self) -> int:
        return len(self._amps)

    def amplitude(self, occ: Sequence[int]) -> complex:
        return self._amps.get(tuple(occ), 0.0)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self._amps.values()))

    def is_zero(self) -> bool:
        return not self._amps

    def normalized(self) -> "QuantumState":
        n = self.norm()
        if n == 0.0:
            raise EmptyPostselection("cannot normalize the zero state")
        return QuantumState(self.registry, {k: v / n for k, v in self._amps.items()})

    def scaled(self, factor: complex) -> "QuantumState":
        return QuantumState(self.registry, {k: v * factor for k, v in self._amps.items()})

    def add(self, other: "QuantumState") -> "QuantumState":
        if other.registry is not self.registry:
            raise RegistryMismatch("states built on different registries")
        out = dict(self._amps)
        for k, v in other._amps.items():
            out[k] = out.get(k, 0.0) + v
        return QuantumState(self.registry, out)

    def __repr__(self):
        terms = ", ".join(f"{k}: {v:.4g}" for k, v in sorted(self._amps.items()))
        return f"QuantumState({terms})"


def _fermion_sign(registry: ModeRegistry, occ: BasisState, mode: int) -> float:
    count = 0
    flags = registry._fermion_flags
    for i in range(mode):
        if flags[i] and occ[i]:
            count += 1
    return -1.0 if count % 2 else 1.0


def apply_ladder(state: QuantumState, mode: int, kind: str) -> QuantumState:
    """Apply a creation ('create') or annihilation ('annihilate') operator.

    The result may be unnormalized or the zero state.
    """
    registry = state.registry
    if not (0 <= mode < len(registry)):
        raise InvalidMode(f"mode index {mode} out of range")
    if kind not in ("create", "annihilate"):
        raise ValueError("kind must be 'create' or 'annihilate'")
    desc = registry[mode]
    out: Dict[BasisState, complex] = {}
    for occ, amp in state.items():
        n = occ[mode]
        if kind == "create":
            if desc.is_fermion:
                if n == 1:
                    continue  # Pauli exclusion kills this component
                factor = _fermion_sign(registry, occ, mode)
            else:
                if n + 1 > registry.boson_cap:
                    raise BosonCapExceeded(
                        f"occupation {n + 1} exceeds cap {registry.boson_cap} on mode {mode}"
                    )
                factor = math.sqrt(n + 1)
            new = occ[:mode] + (n + 1,) + occ[mode + 1:]
        else:
            if n == 0:
                continue
            if desc.is_fermion:
                factor = _fermion_sign(registry, occ, mode)
            else:
                factor = math.sqrt(n)
            new = occ[:mode] + (n - 1,) + occ[mode + 1:]
        out[new] = out.get(new, 0.0) + amp * factor
    return QuantumState(registry, out)


def create(state: QuantumState, mode: int) -> QuantumState:
    return apply_ladder(state, mode, "create")


def annihilate(state: QuantumState, mode: int) -> QuantumState:
    return apply_ladder(state, mode, "annihilate")


def _is_unitary(T: np.ndarray) -> bool:
    return bool(np.allclose(T.conj().T @ T, np.eye(T.shape[0]), atol=1e-12))


def apply_linear_mode_transform(
    state: QuantumState, modes: Sequence[int], T: np.ndarray
) -> QuantumState:
    """Replace each creation operator c_i (i in modes) by sum_j T[i, j] c_j.

    All listed modes must share species and charge.  Products are expanded
    combinatorially with exact statistics signs; the result is renormalized
    when T is unitary and the input was normalized.
    """
    registry = state.registry
    modes = list(modes)
    for m in modes:
        if not (0 <= m < len(registry)):
            raise InvalidMode(f"mode index {m} out of range")
    descs = [registry[m] for m in modes]
    if len({(d.species, d.charge) for d in descs}) > 1:
        raise MixedSpeciesTransform(
            "linear transform may only mix modes of equal species and charge"
        )
    T = np.asarray(T, dtype=complex)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] != len(modes):
        raise NonSquareMatrix(f"expected a {len(modes)}x{len(modes)} matrix")

    subset = sorted(modes)
    pos = {m: modes.index(m) for m in subset}
    out: Dict[BasisState, complex] = {}
    input_norm = state.norm()
    for occ, amp in state.items():
        # factors: occupied subset modes with multiplicity, ascending order
        factors = [m for m in subset for _ in range(occ[m])]
        # |n> = (c^dag)^n / sqrt(n!) |0>: stripping contributes sqrt(n_m!)
        # per mode, so divide by n_m! to leave 1/sqrt(n_m!) for the rebuild
        scale = 1.0
        for m in subset:
            scale *= math.factorial(occ[m])
        # strip the subset particles left-to-right; signs/factors tracked by
        # the ladder algebra
        cur = QuantumState.basis(registry, occ).scaled(amp / scale)
        for f in factors:
            cur = annihilate(cur, f)
        # re-apply transformed operators in reverse (rightmost factor first)
        for f in reversed(factors):
            row = T[pos[f]]
            pieces = None
            for j, m_out in enumerate(modes):
                if abs(row[j]) <= PRUNE_THRESHOLD:
                    continue
                piece = create(cur, m_out).scaled(row[j])
                pieces = piece if pieces is None else pieces.add(piece)
            cur = pieces if pieces is not None else QuantumState(registry, {})
        for k, v in cur.items():
            out[k] = out.get(k, 0.0) + v
    result = QuantumState(registry, out)
    if _is_unitary(T) and abs(input_norm - 1.0) < 1e-9 and not result.is_zero():
        result = result.normalized()
    return result


def inner_product(a: QuantumState, b: QuantumState) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    if a.registry is not b.registry:
        raise RegistryMismatch("inner product requires a shared registry")
    keys = a._amps if len(a) <= len(b) else b._amps
    return complex(sum(a.amplitude(k).conjugate() * b.amplitude(k) for k in keys))


@dataclass
class OutcomeDistribution:
    """Measurement result: probability and collapsed state per pattern."""

    modes: Tuple[int, ...]
    probabilities: Dict[BasisState, float] = field(default_factory=dict)
    collapsed: Dict[BasisState, QuantumState] = field(default_factory=dict)

    def total(self) -> float:
        return sum(self.probabilities.values())


def measure_occupation(state: QuantumState, modes: Sequence[int]) -> OutcomeDistribution:
    """Projective occupation measurement on a subset of modes."""
    registry = state.registry
    modes = tuple(modes)
    for m in modes:
        if not (0 <= m < len(registry)):
            raise InvalidMode(f"mode index {m} out of range")
    groups: Dict[BasisState, Dict[BasisState, complex]] = {}
    for occ, amp in state.items():
        pattern = tuple(occ[m] for m in modes)
        groups.setdefault(pattern, {})[occ] = amp
    dist = OutcomeDistribution(modes=modes)
    for pattern, amps in sorted(groups.items()):
        p = sum(abs(a) ** 2 for a in amps.values())
        if p <= 0.0:
            continue
        dist.probabilities[pattern] = p
        dist.collapsed[pattern] = QuantumState(
            registry, {k: v / math.sqrt(p) for k, v in amps.items()}
        )
    return dist


def postselect(
    state: QuantumState, predicate: Callable[[BasisState], bool]
) -> Tuple[QuantumState, float]:
    """Condition on basis states satisfying the predicate.

    Returns the renormalized conditional state and the acceptance
    probability.  Raises EmptyPostselection when the probability is zero.
    """
    kept = {occ: amp for occ, amp in state.items() if predicate(occ)}
    prob = sum(abs(a) ** 2 for a in kept.values())
    if prob <= 0.0:
        raise EmptyPostselection("postselection has zero acceptance probability")
    scale = 1.0 / math.sqrt(prob)
    return QuantumState(state.registry, {k: v * scale for k, v in kept.items()}), prob
