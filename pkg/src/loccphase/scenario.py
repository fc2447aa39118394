"""Line-oriented scenario file parser and the built-in demo geometries.

A scenario file is plain text split into bracketed sections.  Lines are
independent, `#` starts a comment and parse failures carry the offending
line number.  Example::

    [registry]
    boson_cap = 4
    mode A 1 fermion charge=1
    mode B 1 fermion charge=1

    [potential]
    type = solenoid
    flux = 0:0, 10:6.283185307179586

    [sources]
    source 0 1 0 0
    branch amp=0.7071067811865476 beta=0 target=A/1 path=0 1 0 0 ; 20 1 0 0
    ...

    [measurement]
    protocol = two_party
    bs_phase = 0

    [execution]
    shots = exact
    seed = 7
    enforce_parity = on
    enforce_charge = on

Path specifications are `t x y z` event tuples separated by `;`; an
`arc t0 t1 radius angle0 angle1 steps` item expands to a polyline on a
circle about the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, ScenarioError
from .fock import (
    BOSON,
    FERMION,
    REGISTER_PHOTON,
    REGISTER_PRIMARY,
    REGISTER_REFERENCE,
    ModeDescriptor,
    ModeRegistry,
)
from .gauge import (
    FluxSchedule,
    GaugePotential,
    ScalarField,
    SolenoidPotential,
    SpacetimeEvent,
    SpacetimePath,
    ZeroPotential,
    PureGaugePotential,
)
from .protocols import EmissionBranch, EmissionScenario, EmissionSource
from .superselection import RuleSet

_REGISTERS = {REGISTER_PRIMARY, REGISTER_REFERENCE, REGISTER_PHOTON}
_SPECIES = {FERMION, BOSON}
PROTOCOLS = ("two_party", "annihilation", "general", "n_party")


@dataclass
class ParsedScenario:
    scenario: EmissionScenario
    protocol: str
    options: Dict[str, object] = field(default_factory=dict)
    execution: Dict[str, object] = field(default_factory=dict)
    target: Optional[Dict[Tuple[int, ...], complex]] = None
    source_text: str = ""


def arc_polyline(t0: float, t1: float, radius: float, angle0: float,
                 angle1: float, steps: int) -> List[SpacetimeEvent]:
    """Polyline approximation of a circular move about the z axis."""
    if steps < 1:
        raise ScenarioError("arc needs at least one step")
    events = []
    for k in range(steps + 1):
        f = k / steps
        t = t0 + (t1 - t0) * f
        a = angle0 + (angle1 - angle0) * f
        events.append(SpacetimeEvent(t, radius * math.cos(a), radius * math.sin(a)))
    return events


def chi_from_expression(expr: str) -> ScalarField:
    """Parse a chi(t, x, y, z) expression with an analytic gradient."""
    import sympy

    t, x, y, z = sympy.symbols("t x y z", real=True)
    try:
        sym = sympy.sympify(expr, locals={"t": t, "x": x, "y": y, "z": z})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ScenarioError(f"cannot parse chi expression {expr!r}: {exc}")
    free = sym.free_symbols - {t, x, y, z}
    if free:
        raise ScenarioError(f"chi uses unknown symbols {sorted(map(str, free))}")
    value = sympy.lambdify((t, x, y, z), sym, modules="math")
    grads = [sympy.lambdify((t, x, y, z), sympy.diff(sym, v), modules="math")
             for v in (t, x, y, z)]

    def gradient(tv, xv, yv, zv):
        return tuple(g(tv, xv, yv, zv) for g in grads)

    return ScalarField(lambda tv, xv, yv, zv: float(value(tv, xv, yv, zv)),
                       gradient)


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def iter(self):
        for no, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield no, line


def _split_sections(text: str) -> List[Tuple[str, int, List[Tuple[int, str]]]]:
    sections = []
    current = None
    for no, line in _Cursor(text).iter():
        if line.startswith("[") and line.endswith("]"):
            current = (line[1:-1].strip().lower(), no, [])
            sections.append(current)
        else:
            if current is None:
                raise ParseError(no, "content before the first section header")
            current[2].append((no, line))
    return sections


def _kv(no: int, line: str) -> Tuple[str, str]:
    if "=" not in line:
        raise ParseError(no, f"expected key = value, got {line!r}")
    key, value = line.split("=", 1)
    return key.strip().lower(), value.strip()


def _floats(no: int, tokens: Sequence[str], what: str) -> List[float]:
    try:
        return [float(tok) for tok in tokens]
    except ValueError:
        raise ParseError(no, f"bad number in {what}: {tokens}")


def _parse_registry(items) -> ModeRegistry:
    boson_cap = 4
    modes: List[ModeDescriptor] = []
    for no, line in items:
        if line.lower().startswith("boson_cap"):
            _, value = _kv(no, line)
            try:
                boson_cap = int(value)
            except ValueError:
                raise ParseError(no, f"boson_cap must be an integer, got {value!r}")
            continue
        tokens = line.split()
        if tokens[0] != "mode" or len(tokens) < 4:
            raise ParseError(no, "expected: mode <party> <label> <species> [charge=..] [register=..]")
        party, label, species = tokens[1], tokens[2], tokens[3].lower()
        if species not in _SPECIES:
            raise ParseError(no, f"unknown species {species!r}")
        charge, register = 0, REGISTER_PRIMARY
        for tok in tokens[4:]:
            key, value = _kv(no, tok)
            if key == "charge":
                try:
                    charge = int(value)
                except ValueError:
                    raise ParseError(no, f"charge must be an integer, got {value!r}")
            elif key == "register":
                if value not in _REGISTERS:
                    raise ParseError(no, f"unknown register {value!r}")
                register = value
            else:
                raise ParseError(no, f"unknown mode attribute {key!r}")
        try:
            modes.append(ModeDescriptor(party, label, species, charge, register))
        except ValueError as exc:
            raise ParseError(no, str(exc))
    if not modes:
        raise ParseError(0, "registry declares no modes")
    try:
        return ModeRegistry(modes, boson_cap=boson_cap)
    except Exception as exc:
        raise ParseError(items[0][0], f"invalid registry: {exc}")


def _parse_flux(no: int, value: str) -> FluxSchedule:
    pieces = [p.strip() for p in value.split(",") if p.strip()]
    breakpoints = []
    for piece in pieces:
        if ":" in piece:
            ts, ps = piece.split(":", 1)
            breakpoints.append((_floats(no, [ts], "flux")[0],
                                _floats(no, [ps], "flux")[0]))
        else:
            breakpoints.append((0.0, _floats(no, [piece], "flux")[0]))
    try:
        return FluxSchedule(breakpoints)
    except ValueError as exc:
        raise ParseError(no, f"bad flux schedule: {exc}")


def _parse_potential(items) -> GaugePotential:
    kind = "zero"
    flux: Optional[FluxSchedule] = None
    chi_expr: Optional[str] = None
    kind_no = 0
    for no, line in items:
        key, value = _kv(no, line)
        if key == "type":
            kind = value.lower()
            kind_no = no
        elif key == "flux":
            flux = _parse_flux(no, value)
        elif key == "chi":
            chi_expr = value
        else:
            raise ParseError(no, f"unknown potential key {key!r}")
    if kind == "zero":
        return ZeroPotential()
    if kind == "solenoid":
        if flux is None:
            raise ParseError(kind_no, "solenoid potential needs a flux schedule")
        return SolenoidPotential(flux)
    if kind == "pure_gauge":
        if chi_expr is None:
            raise ParseError(kind_no, "pure_gauge potential needs a chi expression")
        try:
            return PureGaugePotential(chi_from_expression(chi_expr))
        except ScenarioError as exc:
            raise ParseError(kind_no, str(exc))
    raise ParseError(kind_no, f"unknown potential type {kind!r}")


def _parse_path(no: int, spec: str) -> SpacetimePath:
    events: List[SpacetimeEvent] = []
    for item in spec.split(";"):
        tokens = item.split()
        if not tokens:
            continue
        if tokens[0] == "arc":
            vals = _floats(no, tokens[1:6], "arc")
            if len(tokens) != 7:
                raise ParseError(no, "arc needs: arc t0 t1 radius angle0 angle1 steps")
            try:
                steps = int(tokens[6])
            except ValueError:
                raise ParseError(no, f"arc steps must be an integer, got {tokens[6]!r}")
            pts = arc_polyline(vals[0], vals[1], vals[2], vals[3], vals[4], steps)
            if events and events[-1].close_to(pts[0]):
                pts = pts[1:]
            events.extend(pts)
        else:
            vals = _floats(no, tokens, "path event")
            if len(vals) == 3:
                vals.append(0.0)
            if len(vals) != 4:
                raise ParseError(no, "path events need t x y [z]")
            events.append(SpacetimeEvent(*vals))
    try:
        return SpacetimePath(events)
    except ValueError as exc:
        raise ParseError(no, f"bad path: {exc}")


def _parse_sources(items, registry: ModeRegistry) -> List[EmissionSource]:
    sources: List[EmissionSource] = []
    current: Optional[EmissionSource] = None
    for no, line in items:
        tokens = line.split()
        if tokens[0] == "source":
            vals = _floats(no, tokens[1:], "source event")
            if len(vals) == 3:
                vals.append(0.0)
            if len(vals) != 4:
                raise ParseError(no, "source needs t x y [z]")
            current = EmissionSource(SpacetimeEvent(*vals), [])
            sources.append(current)
        elif tokens[0] == "branch":
            if current is None:
                raise ParseError(no, "branch before any source line")
            fields: Dict[str, str] = {}
            rest = line[len("branch"):].strip()
            # path= consumes the remainder of the line
            head, sep, path_spec = rest.partition("path=")
            if not sep:
                raise ParseError(no, "branch needs a path= specification")
            for tok in head.split():
                key, value = _kv(no, tok)
                fields[key] = value
            for key in ("amp", "beta", "target"):
                if key not in fields:
                    raise ParseError(no, f"branch is missing {key}=")
            target = fields["target"].split("/")
            if len(target) == 2:
                target.append(REGISTER_PRIMARY)
            if len(target) != 3 or target[2] not in _REGISTERS:
                raise ParseError(no, f"bad target {fields['target']!r}; "
                                     "use party/label or party/label/register")
            try:
                mode = registry.index_of(target[0], target[1], target[2])
            except Exception:
                raise ParseError(no, f"target {fields['target']!r} is not a declared mode")
            amp = _floats(no, [fields["amp"]], "amplitude")[0]
            beta = _floats(no, [fields["beta"]], "beta")[0]
            current.branches.append(
                EmissionBranch(amp, beta, _parse_path(no, path_spec), mode))
        else:
            raise ParseError(no, f"expected source or branch, got {tokens[0]!r}")
    return sources


def _parse_complex(no: int, token: str) -> complex:
    try:
        return complex(token)
    except ValueError:
        raise ParseError(no, f"bad complex number {token!r}")


def _parse_local_ops(items, registry: ModeRegistry) -> Dict[str, np.ndarray]:
    ops: Dict[str, List[List[complex]]] = {}
    current: Optional[str] = None
    for no, line in items:
        tokens = line.split()
        if tokens[0] == "op":
            if len(tokens) != 2:
                raise ParseError(no, "expected: op <party>")
            current = tokens[1]
            if current not in registry.parties():
                raise ParseError(no, f"unknown party {current!r}")
            ops[current] = []
        elif tokens[0] == "row":
            if current is None:
                raise ParseError(no, "row before any op line")
            ops[current].append([_parse_complex(no, tok) for tok in tokens[1:]])
        else:
            raise ParseError(no, f"expected op or row, got {tokens[0]!r}")
    out = {}
    for party, rows in ops.items():
        mat = np.array(rows, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ScenarioError(f"local op for party {party!r} is not square")
        out[party] = mat
    return out


def _parse_measurement(items) -> Tuple[str, Dict[str, object]]:
    protocol = "two_party"
    options: Dict[str, object] = {}
    for no, line in items:
        key, value = _kv(no, line)
        if key == "protocol":
            if value not in PROTOCOLS:
                raise ParseError(no, f"unknown protocol {value!r}; "
                                     f"choose from {', '.join(PROTOCOLS)}")
            protocol = value
        elif key in ("bs_phase",):
            options[key] = _floats(no, [value], key)[0]
        elif key == "number_projector":
            options[key] = value
        else:
            raise ParseError(no, f"unknown measurement key {key!r}")
    return protocol, options


def _parse_execution(items) -> Dict[str, object]:
    execution: Dict[str, object] = {
        "shots": None, "seed": 0, "enforce_parity": True, "enforce_charge": True,
    }
    for no, line in items:
        key, value = _kv(no, line)
        if key == "shots":
            if value.lower() == "exact":
                execution["shots"] = None
            else:
                try:
                    execution["shots"] = int(value)
                except ValueError:
                    raise ParseError(no, f"shots must be an integer or 'exact', got {value!r}")
        elif key == "seed":
            try:
                execution["seed"] = int(value)
            except ValueError:
                raise ParseError(no, f"seed must be an integer, got {value!r}")
        elif key in ("enforce_parity", "enforce_charge"):
            if value.lower() not in ("on", "off"):
                raise ParseError(no, f"{key} must be on or off")
            execution[key] = value.lower() == "on"
        else:
            raise ParseError(no, f"unknown execution key {key!r}")
    return execution


def _parse_target(items, registry: ModeRegistry) -> Dict[Tuple[int, ...], complex]:
    target: Dict[Tuple[int, ...], complex] = {}
    for no, line in items:
        tokens = line.split()
        if tokens[0] != "component" or len(tokens) != 4:
            raise ParseError(no, "expected: component <occ,occ,...> <modulus> <phase>")
        try:
            occ = tuple(int(v) for v in tokens[1].split(","))
        except ValueError:
            raise ParseError(no, f"bad occupation pattern {tokens[1]!r}")
        if len(occ) != len(registry):
            raise ParseError(no, f"pattern length {len(occ)} does not match "
                                 f"registry size {len(registry)}")
        lam, phi = _floats(no, tokens[2:], "component")
        target[occ] = lam * complex(math.cos(phi), math.sin(phi))
    return target


def parse_scenario_text(text: str) -> ParsedScenario:
    sections = _split_sections(text)
    by_name: Dict[str, List[Tuple[int, str]]] = {}
    for name, no, items in sections:
        if name in by_name:
            raise ParseError(no, f"duplicate section [{name}]")
        known = {"registry", "potential", "sources", "local_ops",
                 "measurement", "target", "execution"}
        if name not in known:
            raise ParseError(no, f"unknown section [{name}]")
        by_name[name] = items
    if "registry" not in by_name:
        raise ParseError(0, "missing [registry] section")
    registry = _parse_registry(by_name["registry"])
    potential = _parse_potential(by_name.get("potential", []))
    sources = _parse_sources(by_name.get("sources", []), registry)
    local_ops = _parse_local_ops(by_name.get("local_ops", []), registry)
    protocol, options = _parse_measurement(by_name.get("measurement", []))
    execution = _parse_execution(by_name.get("execution", []))
    target = None
    if "target" in by_name:
        target = _parse_target(by_name["target"], registry)
    rules = RuleSet(enforce_parity=bool(execution["enforce_parity"]),
                    enforce_charge=bool(execution["enforce_charge"]))
    scenario = EmissionScenario(registry, sources, potential, rules, local_ops,
                                measurement={"protocol": protocol, **options})
    return ParsedScenario(scenario, protocol, options, execution, target, text)


def parse_scenario_file(path: str) -> ParsedScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_text(fh.read())


# ---------------------------------------------------------------------------
# built-in geometries


def ab_scenario(theta: float, flux_final: float, ramp: Tuple[float, float] = (10.0, 11.0),
                charge: int = 1, arc_steps: int = 96) -> EmissionScenario:
    """Time-dependent flux demo on a circle of radius 1 about the solenoid.

    All spatial moves happen either before the flux ramp (no phase) or
    after it; one branch circles from angle 0 to `theta` at final flux and
    picks up charge * flux_final * theta / (2 pi), every other branch
    contributes nothing.  Static segments are phase-free because the
    scalar potential vanishes in this gauge.
    """
    t_ramp0, t_ramp1 = ramp
    if not 0.0 < t_ramp0 < t_ramp1:
        raise ScenarioError("ramp must start after emission and end after it starts")
    t_end = t_ramp1 + 9.0
    registry = ModeRegistry([
        ModeDescriptor(p, l, FERMION, charge)
        for p in ("A", "B") for l in ("1", "2")
    ])
    start = SpacetimeEvent(0.0, 1.0, 0.0)
    point_a = (1.0, 0.0)
    point_b = (math.cos(theta), math.sin(theta))

    def static_path(point, t0=0.0):
        return SpacetimePath([SpacetimeEvent(t0, *point),
                              SpacetimeEvent(t_end, *point)])

    # early move to B, finished before the ramp starts
    early_arc = arc_polyline(0.0, t_ramp0 / 2.0, 1.0, 0.0, theta, arc_steps)
    path_b1 = SpacetimePath(early_arc + [SpacetimeEvent(t_end, *point_b)])
    # late move to B, started after the ramp ends
    late_arc = arc_polyline(t_ramp1 + 1.0, t_ramp1 + 7.0, 1.0, 0.0, theta, arc_steps)
    path_b2 = SpacetimePath([start] + late_arc + [SpacetimeEvent(t_end, *point_b)])

    amp = 1.0 / math.sqrt(2.0)
    sources = [
        EmissionSource(start, [
            EmissionBranch(amp, 0.0, static_path(point_a), registry.index_of("A", "1")),
            EmissionBranch(amp, 0.0, path_b1, registry.index_of("B", "1")),
        ]),
        EmissionSource(start, [
            EmissionBranch(amp, 0.0, static_path(point_a), registry.index_of("A", "2")),
            EmissionBranch(amp, 0.0, path_b2, registry.index_of("B", "2")),
        ]),
    ]
    potential = SolenoidPotential(FluxSchedule.ramp(t_ramp0, t_ramp1, flux_final))
    return EmissionScenario(registry, sources, potential)
