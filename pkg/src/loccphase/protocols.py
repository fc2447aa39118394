"""End-to-end protocol construction: emission states, local operations,
postselection, outcome distributions and phase extraction.

Every protocol returns a ProtocolResult whose phases are extracted from
the simulated outcome statistics (never read off internal amplitudes), so
gauge-invariance properties are checked on measurable quantities.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fock
from .errors import (
    EmptyPostselection,
    ForbiddenMeasurement,
    ScenarioError,
    SectorMismatch,
    SuperselectionViolation,
    SupportMisestimate,
    Unsolvable,
)
from .estimation import sample_distribution, wrap_phase
from .fock import (
    BasisState,
    ModeDescriptor,
    ModeRegistry,
    QuantumState,
    apply_linear_mode_transform,
    create,
    inner_product,
    measure_occupation,
    postselect,
)
from .gauge import (
    GaugePotential,
    OrientedSegment,
    ScalarField,
    SpacetimeEvent,
    SpacetimePath,
    SumPotential,
    ZeroPotential,
    gauge_transformed,
    line_phase,
    loop_phase,
)
from .loopdecomp import (
    Assignment,
    LoopDecomposition,
    decompose_phase,
    evaluate_decomposition,
)
from .superselection import RuleSet, check_observable, sector_of

HALF_PI = math.pi / 2.0

BS_5050 = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)


@dataclass
class EmissionBranch:
    amplitude: float
    beta: float
    path: SpacetimePath
    target_mode: int


@dataclass
class EmissionSource:
    event: SpacetimeEvent
    branches: List[EmissionBranch]

    def validate(self, registry: ModeRegistry) -> None:
        targets = [b.target_mode for b in self.branches]
        if len(set(targets)) != len(targets):
            raise ScenarioError("branch target modes within one source must be distinct")
        total = sum(b.amplitude ** 2 for b in self.branches)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError("branch amplitudes of a source must be normalized")
        for b in self.branches:
            if b.amplitude < 0.0:
                raise ScenarioError("branch amplitudes must be nonnegative")
            if not b.path.start.close_to(self.event):
                raise ScenarioError("all branch paths must start at the emission event")
            if b.path.end.t < self.event.t:
                raise ScenarioError("branch path must end at or after emission")


@dataclass
class EmissionScenario:
    registry: ModeRegistry
    sources: List[EmissionSource]
    potential: GaugePotential = field(default_factory=ZeroPotential)
    rules: RuleSet = field(default_factory=RuleSet)
    local_ops: Dict[str, np.ndarray] = field(default_factory=dict)
    measurement: Optional[Dict[str, object]] = None

    def with_potential(self, potential: GaugePotential) -> "EmissionScenario":
        return EmissionScenario(self.registry, self.sources, potential,
                                self.rules, self.local_ops, self.measurement)

    def gauge_transformed(self, chi: ScalarField) -> "EmissionScenario":
        return self.with_potential(gauge_transformed(self.potential, chi))


@dataclass
class ProtocolResult:
    postselection_probability: float
    distribution: Dict[Tuple, float]
    delta_phi: Optional[float] = None
    acceptance_exact: Optional[Fraction] = None
    pairwise_phases: Optional[Dict[Tuple[int, int], float]] = None
    provenance: Dict[str, object] = field(default_factory=dict)


def branch_phase(scenario: EmissionScenario, branch: EmissionBranch) -> float:
    charge = scenario.registry[branch.target_mode].charge
    return branch.beta + line_phase(scenario.potential, branch.path, charge)


def build_emission_state(scenario: EmissionScenario) -> QuantumState:
    """Product over sources of the branch superpositions, normalized.

    Source order fixes the creation-operator product order (first source
    leftmost); within each branch a single canonical-order creation acts.
    """
    registry = scenario.registry
    for src in scenario.sources:
        src.validate(registry)
    state = QuantumState.vacuum(registry)
    for src in reversed(scenario.sources):
        acc = None
        for b in src.branches:
            coef = b.amplitude * cmath.exp(1j * branch_phase(scenario, b))
            piece = create(state, b.target_mode).scaled(coef)
            acc = piece if acc is None else acc.add(piece)
        state = acc
        if state is None or state.is_zero():
            raise ScenarioError("emission state vanished (exclusion or empty source)")
    state = state.normalized()
    _check_sector_uniform(state, scenario.rules)
    return state


def _check_sector_uniform(state: QuantumState, rules: RuleSet) -> None:
    sectors = {sector_of(state.registry, occ) for occ in state.amplitudes}
    if rules.enforce_parity and len({s.parity for s in sectors}) > 1:
        raise SuperselectionViolation("state support spans several parity sectors")
    if rules.enforce_charge and len({s.charge for s in sectors}) > 1:
        raise SuperselectionViolation("state support spans several charge sectors")


def one_particle_per_party(registry: ModeRegistry, parties: Sequence[str]):
    """Predicate: exactly one primary-register particle at each listed party."""
    party_modes = {p: registry.party_modes(p) for p in parties}

    def predicate(occ: BasisState) -> bool:
        return all(sum(occ[m] for m in modes) == 1 for modes in party_modes.values())

    return predicate


def _interference_projector(registry: ModeRegistry, party: str) -> QuantumState:
    """Local beam-splitter projector (c1 +- c2)/sqrt(2)|0> used by the
    two-party protocol; built for the superselection admissibility check."""
    m1, m2 = registry.party_modes(party)[:2]
    vac = QuantumState.vacuum(registry)
    return create(vac, m1).add(create(vac, m2)).scaled(1.0 / math.sqrt(2.0))


def _check_local_interference_allowed(registry: ModeRegistry, parties: Sequence[str],
                                      rules: RuleSet) -> None:
    for p in parties:
        verdict = check_observable(_interference_projector(registry, p), rules)
        if not verdict.allowed:
            raise ForbiddenMeasurement(verdict.violated)


def number_superposition_projector(registry: ModeRegistry, mode: int) -> QuantumState:
    """(|0> + c_mode^dag |0>)/sqrt(2): coherence between particle numbers."""
    vac = QuantumState.vacuum(registry)
    return vac.add(create(vac, mode)).scaled(1.0 / math.sqrt(2.0))


def check_number_projector(registry: ModeRegistry, mode: int,
                           rules: RuleSet) -> None:
    """Reject the number-superposition projector when a superselection rule
    forbids it (fermionic parity, or any nonzero charge)."""
    verdict = check_observable(number_superposition_projector(registry, mode), rules)
    if not verdict.allowed:
        raise ForbiddenMeasurement(verdict.violated)


def _party_bs(registry: ModeRegistry, state: QuantumState, party: str,
              delta: float) -> QuantumState:
    """50/50 beam splitter mixing the party's two primary modes; `delta` is
    the phase on the second input arm."""
    m1, m2 = registry.party_modes(party)[:2]
    T = np.array([
        [1.0, 1.0],
        [cmath.exp(1j * delta), -cmath.exp(1j * delta)],
    ], dtype=complex) / math.sqrt(2.0)
    return apply_linear_mode_transform(state, [m1, m2], T)


def _sign_outcomes(registry: ModeRegistry, state: QuantumState,
                   parties: Sequence[str]) -> Dict[Tuple[int, ...], float]:
    """Distribution over (+1/-1) port patterns, one particle per party."""
    all_modes = [m for p in parties for m in registry.party_modes(p)[:2]]
    dist = measure_occupation(state, all_modes)
    out: Dict[Tuple[int, ...], float] = {}
    for pattern, prob in dist.probabilities.items():
        signs = []
        for k in range(len(parties)):
            n1, n2 = pattern[2 * k], pattern[2 * k + 1]
            if n1 + n2 != 1:
                signs = None
                break
            signs.append(1 if n1 == 1 else -1)
        if signs is None:
            continue
        key = tuple(signs)
        out[key] = out.get(key, 0.0) + prob
    return out


def _source_order_sign(registry: ModeRegistry, occ: BasisState) -> int:
    """Parity between source-ordered and canonical creation products.

    The protocol formulas label components by ordered products "source 1
    first"; for fermions that basis differs from the canonical occupation
    basis by the sign computed here (mode labels play the source index).
    """
    occupied = [m for m, v in enumerate(occ)
                if v and registry[m].is_fermion
                and registry[m].register == fock.REGISTER_PRIMARY]
    by_source = sorted(occupied, key=lambda m: (registry[m].label, registry[m].party))
    sign = 1
    for i in range(len(by_source)):
        for j in range(i + 1, len(by_source)):
            if by_source[i] > by_source[j]:
                sign = -sign
    return sign


def _to_source_ordered(registry: ModeRegistry, state: QuantumState) -> QuantumState:
    return QuantumState(registry, {
        occ: amp * _source_order_sign(registry, occ) for occ, amp in state.items()
    })


def _two_party_sign_distribution(registry: ModeRegistry, ps_state: QuantumState,
                                 party_a: str, party_b: str,
                                 delta: float) -> Dict[Tuple[int, int], float]:
    adjusted = _to_source_ordered(registry, ps_state)
    after = _party_bs(registry, adjusted, party_a, 0.0)
    after = _party_bs(registry, after, party_b, delta)
    return _sign_outcomes(registry, after, [party_a, party_b])


def _correlator(dist: Dict[Tuple[int, int], float]) -> float:
    return sum(sa * sb * p for (sa, sb), p in dist.items())


def _extract_two_setting_phase(e0: float, e_quarter: float) -> float:
    """Invert E(delta) = cos(delta_phi + delta) from the 0 and pi/2 settings."""
    return math.atan2(-e_quarter, e0)


def two_party_registry(species: str = fock.FERMION, charge: int = 0,
                       boson_cap: int = 4) -> ModeRegistry:
    modes = [
        ModeDescriptor(party=p, label=l, species=species, charge=charge)
        for p in ("A", "B") for l in ("1", "2")
    ]
    return ModeRegistry(modes, boson_cap=boson_cap)


def two_party_phase_protocol(scenario: EmissionScenario,
                             bs_phase: float = 0.0) -> ProtocolResult:
    """Two sources, two parties: postselect one particle per party, apply
    local 50/50 beam splitters, and read the phase of Eq.-style statistics.

    The extracted phase equals beta2 - beta1 plus the bipartite spacetime
    loop phase of the four branch paths.
    """
    registry = scenario.registry
    parties = registry.parties()
    if len(parties) != 2 or len(scenario.sources) != 2:
        raise ScenarioError("two-party protocol needs exactly two parties and two sources")
    party_a, party_b = parties
    _check_local_interference_allowed(registry, parties, scenario.rules)

    state = build_emission_state(scenario)
    ps_state, prob = postselect(state, one_particle_per_party(registry, parties))

    distribution = _two_party_sign_distribution(registry, ps_state, party_a,
                                                party_b, bs_phase)
    e0 = _correlator(_two_party_sign_distribution(registry, ps_state, party_a,
                                                  party_b, 0.0))
    e1 = _correlator(_two_party_sign_distribution(registry, ps_state, party_a,
                                                  party_b, HALF_PI))
    delta_phi = _extract_two_setting_phase(e0, e1)

    provenance = _two_party_provenance(scenario, party_a, party_b)
    return ProtocolResult(
        postselection_probability=prob,
        distribution=distribution,
        delta_phi=delta_phi,
        provenance=provenance,
    )


def _two_party_provenance(scenario: EmissionScenario, party_a: str,
                          party_b: str) -> Dict[str, object]:
    """Per-branch line phases and the bipartite loop value behind delta_phi."""
    registry = scenario.registry
    src1, src2 = scenario.sources
    paths: Dict[str, SpacetimePath] = {}
    lines: Dict[str, float] = {}
    betas: Dict[int, float] = {}
    for i, src in enumerate((src1, src2), start=1):
        betas[i] = 0.0
        for b in src.branches:
            party = registry[b.target_mode].party
            tag = f"{party}{i}"
            paths[tag] = b.path
            lines[tag] = line_phase(scenario.potential, b.path,
                                    registry[b.target_mode].charge)
            # beta_i is the source-internal relative phase, B arm minus A arm
            betas[i] += b.beta if party == party_b else -b.beta
    prov: Dict[str, object] = {
        "line_phases": lines,
        "beta_difference": betas.get(2, 0.0) - betas.get(1, 0.0),
        "loop_combination": f"{party_a}1 + {party_b}2 - {party_a}2 - {party_b}1",
    }
    combo = (lines.get(f"{party_a}1", 0.0) + lines.get(f"{party_b}2", 0.0)
             - lines.get(f"{party_a}2", 0.0) - lines.get(f"{party_b}1", 0.0))
    prov["loop_value"] = combo
    try:
        chain = [
            OrientedSegment(paths[f"{party_a}1"], +1),
            OrientedSegment(paths[f"{party_a}2"], -1),
            OrientedSegment(paths[f"{party_b}2"], +1),
            OrientedSegment(paths[f"{party_b}1"], -1),
        ]
        charge = registry[src1.branches[0].target_mode].charge
        prov["closed_loop_phase"] = loop_phase(scenario.potential, chain, charge)
    except Exception:
        prov["closed_loop_phase"] = None
    prov["predicted_delta_phi"] = wrap_phase(prov["beta_difference"] + combo)
    return prov


def n_party_registry(n: int) -> ModeRegistry:
    modes = [
        ModeDescriptor(party=f"P{i}", label=l, species=fock.FERMION, charge=0)
        for i in range(n) for l in ("1", "2")
    ]
    return ModeRegistry(modes)


def n_party_single_particle(n: int, phases: Sequence[float]) -> ProtocolResult:
    """Ancilla and signal, each in an equal superposition over n parties.

    Postselects on the two particles landing at distinct parties
    (probability 1 - 1/n, computed in exact rational arithmetic) and
    extracts the pairwise phase differences from local statistics.
    """
    if n < 2:
        raise ScenarioError("need at least two parties")
    if len(phases) != n:
        raise ScenarioError("one signal phase per party required")
    registry = n_party_registry(n)
    amp = 1.0 / math.sqrt(n)
    t0 = SpacetimeEvent(0.0, 0.0, 0.0)

    def flat_path(i):
        return SpacetimePath([t0, SpacetimeEvent(1.0, float(i + 1), 0.0)])

    sources = [
        EmissionSource(t0, [
            EmissionBranch(amp, 0.0, flat_path(i),
                           registry.index_of(f"P{i}", "1")) for i in range(n)
        ]),
        EmissionSource(t0, [
            EmissionBranch(amp, phases[i], flat_path(i),
                           registry.index_of(f"P{i}", "2")) for i in range(n)
        ]),
    ]
    scenario = EmissionScenario(registry, sources)
    state = build_emission_state(scenario)

    party_counts = {p: registry.party_modes(p) for p in registry.parties()}

    def distinct(occ: BasisState) -> bool:
        return all(sum(occ[m] for m in modes) <= 1 for modes in party_counts.values())

    ps_state, prob = postselect(state, distinct)
    # every ordered (ancilla at i, signal at j) component carries weight
    # 1/n^2 exactly; acceptance keeps the i != j ones
    acceptance = Fraction(0)
    for i in range(n):
        for j in range(n):
            if i != j:
                acceptance += Fraction(1, n) * Fraction(1, n)

    pairwise: Dict[Tuple[int, int], float] = {}
    outcome_dist: Dict[Tuple, float] = {}
    all_primary = [m for p in registry.parties() for m in party_counts[p]]
    pair_meas = measure_occupation(ps_state, all_primary)
    outcome_dist.update(pair_meas.probabilities)
    for i in range(n):
        for j in range(i + 1, n):
            pi, pj = f"P{i}", f"P{j}"

            def here(occ, pi=pi, pj=pj):
                other = sum(
                    occ[m] for p in registry.parties() if p not in (pi, pj)
                    for m in registry.party_modes(p)
                )
                return other == 0 and one_particle_per_party(registry, [pi, pj])(occ)

            try:
                cond, _ = postselect(ps_state, here)
            except EmptyPostselection:
                continue
            # role order (pj, pi) so the estimate reads phi_i - phi_j
            e0 = _correlator(_two_party_sign_distribution(registry, cond, pj, pi, 0.0))
            e1 = _correlator(_two_party_sign_distribution(registry, cond, pj, pi, HALF_PI))
            pairwise[(i, j)] = _extract_two_setting_phase(e0, e1)

    return ProtocolResult(
        postselection_probability=prob,
        distribution=outcome_dist,
        acceptance_exact=acceptance,
        pairwise_phases=pairwise,
    )


# ---------------------------------------------------------------------------
# particle-antiparticle variant


def annihilation_registry(charge: int = 1, boson_cap: int = 4) -> ModeRegistry:
    """Positron-like mode 'b' (charge -q), electron-like mode 'c' (charge q)
    and a photon pair register per party."""
    modes = []
    for p in ("A", "B"):
        modes.append(ModeDescriptor(p, "b", fock.FERMION, -charge))
        modes.append(ModeDescriptor(p, "c", fock.FERMION, charge))
        modes.append(ModeDescriptor(p, "k1", fock.BOSON, 0, fock.REGISTER_PHOTON))
        modes.append(ModeDescriptor(p, "k2", fock.BOSON, 0, fock.REGISTER_PHOTON))
    return ModeRegistry(modes, boson_cap=boson_cap)


def _annihilate_pairs(registry: ModeRegistry, state: QuantumState) -> QuantumState:
    """Replace each co-located particle-antiparticle pair by a photon pair."""
    out = QuantumState(registry, {})
    for occ, amp in state.items():
        cur = QuantumState(registry, {occ: amp})
        for p in registry.parties():
            ib = registry.index_of(p, "b")
            ic = registry.index_of(p, "c")
            if occ[ib] and occ[ic]:
                cur = fock.annihilate(cur, ic)
                cur = fock.annihilate(cur, ib)
                cur = create(cur, registry.index_of(p, "k1", fock.REGISTER_PHOTON))
                cur = create(cur, registry.index_of(p, "k2", fock.REGISTER_PHOTON))
        out = out.add(cur)
    return out


def _photon_projector(registry: ModeRegistry, party: str, sign: int,
                      delta: float) -> QuantumState:
    """(|0> + sign * e^{-i delta} |1,1>)/sqrt(2) on the party's photon modes."""
    vac = QuantumState.vacuum(registry)
    pair = create(create(vac, registry.index_of(party, "k1", fock.REGISTER_PHOTON)),
                  registry.index_of(party, "k2", fock.REGISTER_PHOTON))
    return vac.add(pair.scaled(sign * cmath.exp(-1j * delta))).scaled(1.0 / math.sqrt(2.0))


def _photon_sign_distribution(registry: ModeRegistry, photon_state: QuantumState,
                              delta: float, rules: RuleSet) -> Dict[Tuple[int, int], float]:
    parties = registry.parties()
    dist: Dict[Tuple[int, int], float] = {}
    for sa in (1, -1):
        for sb in (1, -1):
            proj_a = _photon_projector(registry, parties[0], sa, 0.0)
            proj_b = _photon_projector(registry, parties[1], sb, delta)
            for proj in (proj_a, proj_b):
                verdict = check_observable(proj, rules)
                if not verdict.allowed:
                    raise ForbiddenMeasurement(verdict.violated)
            # joint projector |s_A> x |s_B> over disjoint photon registers
            joint = QuantumState(registry, {})
            for occ_a, va in proj_a.items():
                for occ_b, vb in proj_b.items():
                    merged = tuple(max(x, y) for x, y in zip(occ_a, occ_b))
                    joint = joint.add(QuantumState(registry, {merged: va * vb}))
            amp = inner_product(joint, photon_state)
            dist[(sa, sb)] = abs(amp) ** 2
    return dist


def annihilation_protocol(scenario: EmissionScenario) -> ProtocolResult:
    """Appendix-B variant: opposite charges annihilate into photon pairs.

    Postselects on co-located pairs, substitutes them by photon-pair
    creations and measures photon-pair parity projectors; the extracted
    phase equals the identical-particle loop phase on the same geometry.
    """
    registry = scenario.registry
    parties = registry.parties()
    if len(parties) != 2 or len(scenario.sources) != 2:
        raise ScenarioError("annihilation protocol needs two parties and two sources")
    charges = [
        {registry[b.target_mode].charge for b in src.branches}
        for src in scenario.sources
    ]
    if len(charges[0]) != 1 or len(charges[1]) != 1:
        raise ScenarioError("each source must emit a single species")
    q1, q2 = charges[0].pop(), charges[1].pop()
    if q1 != -q2 or q2 == 0:
        raise ScenarioError("annihilation requires a particle-antiparticle pair "
                            f"(got charges {q1} and {q2})")

    state = build_emission_state(scenario)

    def colocated(occ: BasisState) -> bool:
        for p in parties:
            nb = occ[registry.index_of(p, "b")]
            nc = occ[registry.index_of(p, "c")]
            if nb != nc:
                return False
        return True

    ps_state, prob = postselect(state, colocated)
    photon_state = _annihilate_pairs(registry, ps_state)

    distribution = _photon_sign_distribution(registry, photon_state, 0.0, scenario.rules)
    e0 = _correlator(distribution)
    e1 = _correlator(_photon_sign_distribution(registry, photon_state, HALF_PI,
                                               scenario.rules))
    delta_phi = _extract_two_setting_phase(e0, e1)

    lines = {}
    for i, src in enumerate(scenario.sources, start=1):
        for b in src.branches:
            party = registry[b.target_mode].party
            lines[f"{party}{i}"] = line_phase(scenario.potential, b.path,
                                              registry[b.target_mode].charge)
    return ProtocolResult(
        postselection_probability=prob,
        distribution=distribution,
        delta_phi=delta_phi,
        provenance={"line_phases": lines},
    )


# ---------------------------------------------------------------------------
# general d-source / N-party distribution


def general_registry(num_parties: int, num_sources: int, charge: int = 1) -> ModeRegistry:
    modes = [
        ModeDescriptor(party=f"P{k}", label=f"s{j}", species=fock.FERMION, charge=charge)
        for k in range(num_parties) for j in range(num_sources)
    ]
    return ModeRegistry(modes)


def general_outcome_distribution(scenario: EmissionScenario) -> ProtocolResult:
    """Full occupation distribution P(y) after local linear ops."""
    registry = scenario.registry
    state = build_emission_state(scenario)
    for party, T in scenario.local_ops.items():
        state = apply_linear_mode_transform(state, registry.party_modes(party), T)
    dist = measure_occupation(state, range(len(registry)))
    return ProtocolResult(
        postselection_probability=1.0,
        distribution=dict(dist.probabilities),
    )


@dataclass
class PhasePair:
    x: Assignment
    xp: Assignment
    delta_value: float
    decomposition: LoopDecomposition
    decomposition_value: float


def interference_phase_pairs(scenario: EmissionScenario,
                             max_pairs: Optional[int] = None) -> List[PhasePair]:
    """All Delta phi(x, x') with equal per-party counts, with their bipartite
    loop decompositions evaluated under the scenario potential."""
    registry = scenario.registry
    parties = list(registry.parties())
    party_index = {p: k for k, p in enumerate(parties)}
    branch_info: List[Dict[int, Tuple[float, SpacetimePath]]] = []
    charge = None
    for src in scenario.sources:
        info = {}
        for b in src.branches:
            desc = registry[b.target_mode]
            info[party_index[desc.party]] = (
                line_phase(scenario.potential, b.path, desc.charge), b.path)
            charge = desc.charge
        branch_info.append(info)
    d = len(scenario.sources)
    assignments = [
        Assignment(tuple(combo))
        for combo in itertools.product(*[sorted(info) for info in branch_info])
    ]
    paths = {}
    for j, info in enumerate(branch_info):
        for n, (_, path) in info.items():
            paths[(n, j)] = path
    pairs: List[PhasePair] = []
    for x in assignments:
        for xp in assignments:
            if x == xp or x.party_counts() != xp.party_counts():
                continue
            delta = sum(branch_info[j][x.parties[j]][0] for j in range(d)) \
                - sum(branch_info[j][xp.parties[j]][0] for j in range(d))
            decomp = decompose_phase(x, xp)
            value = evaluate_decomposition(decomp, paths, scenario.potential,
                                           charge, check_closure=False)
            pairs.append(PhasePair(x, xp, delta, decomp, value))
            if max_pairs is not None and len(pairs) >= max_pairs:
                return pairs
    return pairs


# ---------------------------------------------------------------------------
# LOCC tomography of a general fermionic state


def reference_extended_registry(registry: ModeRegistry) -> ModeRegistry:
    """Duplicate every primary mode into a Reference-register twin."""
    modes = list(registry.modes)
    for m in registry.modes:
        if m.register != fock.REGISTER_PRIMARY:
            raise ScenarioError("tomography target must live on primary modes only")
        if not m.is_fermion:
            raise ScenarioError("tomography targets fermionic states")
        modes.append(ModeDescriptor(m.party, m.label, m.species, m.charge,
                                    fock.REGISTER_REFERENCE))
    return ModeRegistry(modes, boson_cap=registry.boson_cap)


def _apply_pattern_creations(ext: ModeRegistry, state: QuantumState,
                             mode_indices: Sequence[int]) -> QuantumState:
    # operator product in ascending canonical order; rightmost acts first
    for m in sorted(mode_indices, reverse=True):
        state = create(state, m)
    return state


def _joint_component(ext: ModeRegistry, primary_idx: Sequence[int],
                     reference_idx: Sequence[int],
                     x: BasisState, y: BasisState) -> QuantumState:
    """(prod primary c^dag)^x (prod reference c~^dag)^y |0>, canonical order."""
    state = QuantumState.vacuum(ext)
    state = _apply_pattern_creations(
        ext, state, [reference_idx[m] for m, v in enumerate(y) if v])
    state = _apply_pattern_creations(
        ext, state, [primary_idx[m] for m, v in enumerate(x) if v])
    return state


def _pairing_transform(ext: ModeRegistry, state: QuantumState,
                       primary_idx: Sequence[int], reference_idx: Sequence[int],
                       phases: Optional[Sequence[float]] = None) -> QuantumState:
    """Per-mode setting phases on the reference twins, then 50/50 mixing of
    every primary/reference pair."""
    if phases is not None:
        for r_idx, delta in zip(reference_idx, phases):
            if delta != 0.0:
                state = apply_linear_mode_transform(
                    state, [r_idx], np.array([[cmath.exp(1j * delta)]]))
    for p_idx, r_idx in zip(primary_idx, reference_idx):
        state = apply_linear_mode_transform(state, [p_idx, r_idx], BS_5050)
    return state


def compute_interference_sign(registry: ModeRegistry, x: BasisState,
                              y: BasisState) -> int:
    """Parity s_xy: relative sign of the (y-primary, x-reference) amplitude
    against the (x-primary, y-reference) amplitude at the joint outcome
    (x, y) after the pairing beam splitters.

    `registry` is the primary-only registry of the target state.
    """
    if sum(x) % 2 != sum(y) % 2:
        raise SectorMismatch("patterns lie in different parity sectors")
    ext = reference_extended_registry(registry)
    n = len(registry)
    primary_idx = [ext.index_of(m.party, m.label, fock.REGISTER_PRIMARY)
                   for m in registry.modes]
    reference_idx = [ext.index_of(m.party, m.label, fock.REGISTER_REFERENCE)
                     for m in registry.modes]
    outcome = [0] * len(ext)
    for m in range(n):
        outcome[primary_idx[m]] = x[m]
        outcome[reference_idx[m]] = y[m]
    outcome = tuple(outcome)

    amps = []
    for a, b in ((x, y), (y, x)):
        comp = _joint_component(ext, primary_idx, reference_idx, a, b)
        mixed = _pairing_transform(ext, comp, primary_idx, reference_idx)
        amps.append(mixed.amplitude(outcome))
    ratio = amps[1] / amps[0]
    if abs(ratio.imag) > 1e-9 or abs(abs(ratio.real) - 1.0) > 1e-9:
        raise AssertionError(f"interference sign ratio is not +-1: {ratio}")
    return 0 if ratio.real > 0 else 1


@dataclass
class TomographyResult:
    support: List[BasisState]
    lambdas: Dict[BasisState, float]
    phases: Dict[BasisState, float]
    shots: Optional[int]
    seed: Optional[int]
    diagnostics: Dict[str, object] = field(default_factory=dict)


def _choose_setting_phases(num_modes: int,
                           diffs: List[Tuple[int, ...]]) -> List[float]:
    """Pick quarter-turn phase coefficients for the second transform setting.

    Each usable support pair (x, y) sees its interference term shifted by
    sum_m delta_m (x_m - y_m); the coefficients are searched so that every
    such shift stays well away from a multiple of 2 pi, which is what
    breaks the cosine sign ambiguity of the first setting.
    """
    import random as _random

    if not diffs:
        return [0.0] * num_modes
    base = math.pi / 8.0
    rng = _random.Random(0x5EED)

    def min_shift(coeffs):
        # cos(delta + shift) distinguishes +-delta only when sin(shift) != 0,
        # so keep every pair's shift away from multiples of pi
        worst = math.inf
        for d in diffs:
            shift = base * sum(c * dv for c, dv in zip(coeffs, d))
            dist = abs(math.remainder(shift, math.pi))
            worst = min(worst, dist)
        return worst

    best = [1] + [0] * (num_modes - 1)
    best_score = min_shift(best)
    for _ in range(1024):
        cand = [rng.randrange(16) for _ in range(num_modes)]
        score = min_shift(cand)
        # greedy coordinate polish of promising candidates
        if score > 0.0:
            improved = True
            while improved:
                improved = False
                for m in range(num_modes):
                    for c in range(16):
                        trial = cand[:m] + [c] + cand[m + 1:]
                        t_score = min_shift(trial)
                        if t_score > score:
                            cand, score = trial, t_score
                            improved = True
        if score > best_score:
            best, best_score = cand, score
        if best_score >= math.pi / 4.0:
            break
    return [base * c for c in best]


def tomography_run(target: QuantumState, shots: Optional[int] = None,
                   seed: int = 0) -> TomographyResult:
    """Four-stage LOCC tomography with a shared reference state.

    Stage 1 measures occupation statistics for the amplitude moduli; an
    estimated-support uniform reference state is then interfered pairwise
    (primary mode against its reference twin) at two settings, and the
    outcome statistics are inverted for all relative phases.  The global
    phase is fixed to zero on the lexicographically smallest support
    element.  `shots=None` runs with exact probabilities.
    """
    registry = target.registry
    n = len(registry)
    exact = shots is None

    # stage 1: amplitude estimation
    dist1 = measure_occupation(target, range(n))
    if exact:
        lam_est = {pat: math.sqrt(p) for pat, p in dist1.probabilities.items()
                   if p > 1e-24}
    else:
        counts = sample_distribution(dist1.probabilities, shots, seed)
        threshold = 3.0 / math.sqrt(shots)
        lam_est = {}
        for pat, c in counts.items():
            lam = math.sqrt(c / shots)
            if lam > threshold:
                lam_est[pat] = lam
    support = sorted(lam_est)
    m_support = len(support)
    if m_support < 1:
        raise SupportMisestimate("no support pattern observed")

    # usable pairs: same parity, collision-free mode totals, nonzero weight
    pairs = []
    for i, x_pat in enumerate(support):
        for y_pat in support[i + 1:]:
            if sum(x_pat) % 2 != sum(y_pat) % 2:
                continue
            total = tuple(a + b for a, b in zip(x_pat, y_pat))
            contributors = [
                (u, v) for u in support for v in support
                if tuple(a + b for a, b in zip(u, v)) == total
            ]
            if len(contributors) != 2:
                continue  # collided outcome; the interference formula gains terms
            if lam_est[x_pat] * lam_est[y_pat] < 1e-12:
                continue
            pairs.append((x_pat, y_pat))

    # second transform setting chosen from the estimated support
    diffs = [tuple(a - b for a, b in zip(x_pat, y_pat)) for x_pat, y_pat in pairs]
    setting = _choose_setting_phases(n, diffs)

    # stage 2 + 3: joint state with the uniform reference, pairing BS
    ext = reference_extended_registry(registry)
    primary_idx = [ext.index_of(m.party, m.label, fock.REGISTER_PRIMARY)
                   for m in registry.modes]
    reference_idx = [ext.index_of(m.party, m.label, fock.REGISTER_REFERENCE)
                     for m in registry.modes]

    joint = QuantumState(ext, {})
    for x_pat, amp in target.amplitudes.items():
        for y_pat in support:
            comp = _joint_component(ext, primary_idx, reference_idx, x_pat, y_pat)
            joint = joint.add(comp.scaled(amp / math.sqrt(m_support)))

    def outcome_key(x_pat: BasisState, y_pat: BasisState) -> BasisState:
        occ = [0] * len(ext)
        for m in range(n):
            occ[primary_idx[m]] = x_pat[m]
            occ[reference_idx[m]] = y_pat[m]
        return tuple(occ)

    measured: List[Dict[BasisState, float]] = []
    for k, phase_vec in enumerate((None, setting)):
        mixed = _pairing_transform(ext, joint, primary_idx, reference_idx,
                                   phase_vec)
        probs = measure_occupation(mixed, range(len(ext))).probabilities
        if exact:
            measured.append(dict(probs))
        else:
            counts = sample_distribution(probs, shots, seed + 7919 * (k + 1))
            measured.append({pat: c / shots for pat, c in counts.items()})

    # stage 4: invert the pairwise interference formulas
    edges = []
    for (x_pat, y_pat), diff in zip(pairs, diffs):
        lam_x, lam_y = lam_est[x_pat], lam_est[y_pat]
        key = outcome_key(x_pat, y_pat)
        k_single = sum(1 for a, b in zip(x_pat, y_pat) if a + b == 1)
        pref = (2.0 ** (-k_single)) / m_support
        s = compute_interference_sign(registry, x_pat, y_pat)
        shift = sum(d * v for d, v in zip(setting, diff))
        cos_vals = []
        for probs in measured:
            p_meas = probs.get(key, 0.0)
            num = p_meas / pref - lam_x ** 2 - lam_y ** 2
            cos_vals.append(max(-1.0, min(1.0, num / (2.0 * lam_x * lam_y))))
        edges.append({
            "x": x_pat, "y": y_pat, "s": s, "shift": shift,
            "c0": cos_vals[0], "c1": cos_vals[1],
            "weight": lam_x * lam_y * pref,
        })

    phases = _solve_phases(support, edges)
    diag = {"num_edges": len(edges), "setting_phases": setting}
    if not exact:
        _check_support_consistency(measured, support, primary_idx,
                                   reference_idx, shots)
    return TomographyResult(support=support, lambdas=dict(lam_est),
                            phases=phases, shots=shots,
                            seed=None if exact else seed, diagnostics=diag)


def _check_support_consistency(measured, support, primary_idx, reference_idx,
                               shots) -> None:
    """The pairing beam splitters only move particles within a
    (primary, reference) pair, so the per-pair totals of any outcome must
    equal x + y for some support pair.  Heavy outcomes that cannot be
    decomposed this way expose an underestimated support."""
    pair_totals = {
        tuple(a + b for a, b in zip(u, v))
        for u in support for v in support
    }
    heavy = 25.0 / shots
    for probs in measured:
        for pat, p in probs.items():
            if p < heavy:
                continue
            totals = tuple(pat[pi] + pat[ri]
                           for pi, ri in zip(primary_idx, reference_idx))
            if totals not in pair_totals:
                raise SupportMisestimate(
                    f"outcome totals {totals} (p={p:.3g}) are incompatible "
                    "with the estimated support"
                )


_MIN_SIN_SHIFT = 0.05


def _edge_angle(e: Dict) -> Optional[float]:
    """phi_y - phi_x recovered from cos(D') and cos(D' + shift), where
    D' = phi_y - phi_x + pi s; None when the shift carries no sign
    information."""
    sin_shift = math.sin(e["shift"])
    if abs(sin_shift) < _MIN_SIN_SHIFT:
        return None
    sin_dp = (e["c0"] * math.cos(e["shift"]) - e["c1"]) / sin_shift
    return math.atan2(sin_dp, e["c0"]) - math.pi * e["s"]


def _solve_phases(support: List[BasisState],
                  edges: List[Dict]) -> Dict[BasisState, float]:
    """Anchor the smallest support element at phase 0 and propagate the
    per-edge angles along a maximum-weight spanning tree, then polish by
    weighted circular averaging over every edge."""
    if len(support) == 1:
        return {support[0]: 0.0}
    adj: Dict[BasisState, List[Dict]] = {p: [] for p in support}
    for e in edges:
        adj[e["x"]].append(e)
        adj[e["y"]].append(e)
    anchor = support[0]
    # Prim's algorithm favoring strong interference terms
    phases: Dict[BasisState, float] = {anchor: 0.0}
    ambiguous_tree: List[Dict] = []
    while len(phases) < len(support):
        candidates = [
            (e, node) for node in phases for e in adj[node]
            if (e["y"] if e["x"] == node else e["x"]) not in phases
        ]
        if not candidates:
            raise Unsolvable("interference graph is disconnected over the support")
        e, parent = max(candidates, key=lambda item: item[0]["weight"])
        child = e["y"] if e["x"] == parent else e["x"]
        angle = _edge_angle(e)
        if angle is None:
            # sign unresolved by the second setting; try + and fix up below
            angle = math.acos(max(-1.0, min(1.0, e["c0"]))) - math.pi * e["s"]
            ambiguous_tree.append(e)
        phases[child] = phases[parent] + (angle if e["x"] == parent else -angle)

    def total_error(assign: Dict[BasisState, float]) -> float:
        err = 0.0
        for e in edges:
            dp = assign[e["y"]] - assign[e["x"]] + math.pi * e["s"]
            err += e["weight"] * ((math.cos(dp) - e["c0"]) ** 2
                                  + (math.cos(dp + e["shift"]) - e["c1"]) ** 2)
        return err

    if ambiguous_tree:
        # small exhaustive search over the unresolved tree-edge signs
        best, best_err = phases, total_error(phases)
        for signs in itertools.product((1.0, -1.0), repeat=len(ambiguous_tree)):
            trial = dict(phases)
            # rebuild by flipping each ambiguous edge's angle contribution
            flips = {id(e): s for e, s in zip(ambiguous_tree, signs)}
            trial = _propagate(support, adj, anchor, flips)
            if trial is None:
                continue
            err = total_error(trial)
            if err < best_err:
                best, best_err = trial, err
        phases = best

    phases = _refine_phases(support, adj, anchor, phases)
    return {p: wrap_phase(v) for p, v in phases.items()}


def _propagate(support, adj, anchor, flips) -> Optional[Dict[BasisState, float]]:
    phases: Dict[BasisState, float] = {anchor: 0.0}
    while len(phases) < len(support):
        candidates = [
            (e, node) for node in phases for e in adj[node]
            if (e["y"] if e["x"] == node else e["x"]) not in phases
        ]
        if not candidates:
            return None
        e, parent = max(candidates, key=lambda item: item[0]["weight"])
        child = e["y"] if e["x"] == parent else e["x"]
        angle = _edge_angle(e)
        if angle is None:
            sign = flips.get(id(e), 1.0)
            angle = sign * math.acos(max(-1.0, min(1.0, e["c0"]))) - math.pi * e["s"]
        phases[child] = phases[parent] + (angle if e["x"] == parent else -angle)
    return phases


def _refine_phases(support, adj, anchor, phases) -> Dict[BasisState, float]:
    """Weighted circular Gauss-Seidel sweeps over the interference graph."""
    phases = dict(phases)
    for _ in range(60):
        moved = 0.0
        for node in support:
            if node == anchor:
                continue
            vx = vy = 0.0
            for e in adj[node]:
                angle = _edge_angle(e)
                if angle is None:
                    # pick the cosine branch closest to the current assignment
                    mag = math.acos(max(-1.0, min(1.0, e["c0"])))
                    cur = (phases[e["y"]] - phases[e["x"]] + math.pi * e["s"])
                    branch = mag if math.cos(cur - mag) > math.cos(cur + mag) else -mag
                    angle = branch - math.pi * e["s"]
                other = e["y"] if e["x"] == node else e["x"]
                target = (phases[other] - angle if e["x"] == node
                          else phases[other] + angle)
                vx += e["weight"] * math.cos(target)
                vy += e["weight"] * math.sin(target)
            if vx == 0.0 and vy == 0.0:
                continue
            new = math.atan2(vy, vx)
            moved = max(moved, abs(math.remainder(new - phases[node], 2.0 * math.pi)))
            phases[node] = new
        if moved < 1e-12:
            break
    return phases
