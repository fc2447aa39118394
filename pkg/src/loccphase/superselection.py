"""Parity/charge sector bookkeeping and observable admissibility checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .fock import BasisState, ModeRegistry, QuantumState


@dataclass(frozen=True)
class SectorLabel:
    parity: int   # (-1)^(total fermionic occupation)
    charge: int   # units of e


@dataclass(frozen=True)
class RuleSet:
    enforce_parity: bool = True
    enforce_charge: bool = True

    def replace(self, **kw) -> "RuleSet":
        d = {"enforce_parity": self.enforce_parity, "enforce_charge": self.enforce_charge}
        d.update(kw)
        return RuleSet(**d)


@dataclass(frozen=True)
class Verdict:
    allowed: bool
    violated: Optional[str] = None  # 'parity' or 'charge' when forbidden


def sector_of(registry: ModeRegistry, basis: BasisState) -> SectorLabel:
    fermions = 0
    charge = 0
    for n, mode in zip(basis, registry.modes):
        if mode.is_fermion:
            fermions += n
        charge += n * mode.charge
    return SectorLabel(parity=-1 if fermions % 2 else 1, charge=charge)


def check_observable(projector_state: QuantumState, rules: RuleSet) -> Verdict:
    """Admissibility of the rank-1 projector onto the given pure state.

    Forbidden iff the state's support spans more than one enforced sector.
    """
    registry = projector_state.registry
    parities = set()
    charges = set()
    for occ in projector_state.amplitudes:
        s = sector_of(registry, occ)
        parities.add(s.parity)
        charges.add(s.charge)
    if rules.enforce_parity and len(parities) > 1:
        return Verdict(allowed=False, violated="parity")
    if rules.enforce_charge and len(charges) > 1:
        return Verdict(allowed=False, violated="charge")
    return Verdict(allowed=True)


def state_sector(state: QuantumState) -> Optional[SectorLabel]:
    """The unique sector of a state's support, or None if mixed across sectors."""
    sectors = {sector_of(state.registry, occ) for occ in state.amplitudes}
    if len(sectors) == 1:
        return next(iter(sectors))
    return None
