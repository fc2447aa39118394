"""Spacetime paths, abelian 4-potentials and line/loop phase integrals.

Units: hbar = c = 1, charge in units of e, flux in units where e*Phi is a
pure phase.  The sign convention for the accumulated phase along a
worldline is

    phase = q * integral( V dt - A . dl )

so a pure-gauge potential built from a scalar field chi shifts an open
path's phase by exactly q * (chi(end) - chi(start)).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

from .errors import (
    InconsistentGradient,
    OpenChain,
    QuadratureNonConvergence,
    SingularityOnPath,
)

QUAD_REL_TOL = 1e-9
QUAD_MAX_DEPTH = 40
AXIS_CLEARANCE = 1e-9
CHAIN_TOL = 1e-9


@dataclass(frozen=True)
class SpacetimeEvent:
    t: float
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for v in (self.t, self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError("spacetime coordinates must be finite")

    def coords(self) -> Tuple[float, float, float, float]:
        return (self.t, self.x, self.y, self.z)

    def close_to(self, other: "SpacetimeEvent", tol: float = CHAIN_TOL) -> bool:
        return all(abs(a - b) <= tol for a, b in zip(self.coords(), other.coords()))


class SpacetimePath:
    """Piecewise-linear worldline; t strictly increasing along the events."""

    def __init__(self, events: Sequence[SpacetimeEvent]):
        events = tuple(events)
        if len(events) < 2:
            raise ValueError("a path needs at least two events")
        for a, b in zip(events, events[1:]):
            if not b.t > a.t:
                raise ValueError("path events must be strictly increasing in t")
        self.events = events

    @classmethod
    def from_coords(cls, coords: Sequence[Sequence[float]]) -> "SpacetimePath":
        return cls([SpacetimeEvent(*c) for c in coords])

    @property
    def start(self) -> SpacetimeEvent:
        return self.events[0]

    @property
    def end(self) -> SpacetimeEvent:
        return self.events[-1]

    def split_at(self, event: SpacetimeEvent) -> Tuple["SpacetimePath", "SpacetimePath"]:
        """Split at an interior listed event (used by the additivity tests)."""
        for i, e in enumerate(self.events[1:-1], start=1):
            if e.close_to(event, 0.0):
                return SpacetimePath(self.events[: i + 1]), SpacetimePath(self.events[i:])
        raise ValueError("event is not an interior vertex of the path")


@dataclass(frozen=True)
class OrientedSegment:
    path: SpacetimePath
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def entry(self) -> SpacetimeEvent:
        return self.path.start if self.direction == 1 else self.path.end

    @property
    def exit(self) -> SpacetimeEvent:
        return self.path.end if self.direction == 1 else self.path.start


class FluxSchedule:
    """Continuous piecewise-linear flux Phi(t), constant outside the breakpoints."""

    def __init__(self, breakpoints: Sequence[Tuple[float, float]]):
        pts = sorted((float(t), float(phi)) for t, phi in breakpoints)
        if not pts:
            raise ValueError("schedule needs at least one breakpoint")
        ts = [t for t, _ in pts]
        if len(set(ts)) != len(ts):
            raise ValueError("duplicate breakpoint times")
        self.breakpoints = pts

    @classmethod
    def constant(cls, phi: float) -> "FluxSchedule":
        return cls([(0.0, phi)])

    @classmethod
    def ramp(cls, t_start: float, t_end: float, phi_final: float,
             phi_initial: float = 0.0) -> "FluxSchedule":
        return cls([(t_start, phi_initial), (t_end, phi_final)])

    def __call__(self, t: float) -> float:
        pts = self.breakpoints
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        for (t0, p0), (t1, p1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                return p0 + (p1 - p0) * (t - t0) / (t1 - t0)
        raise AssertionError("unreachable")


class GaugePotential:
    """Evaluable abelian 4-potential A^mu = (V, Ax, Ay, Az)."""

    def evaluate(self, t: float, x: float, y: float, z: float) -> Tuple[float, float, float, float]:
        raise NotImplementedError

    def check_path(self, path: SpacetimePath) -> None:
        """Raise SingularityOnPath if the path comes too close to a singularity."""


class ZeroPotential(GaugePotential):
    def evaluate(self, t, x, y, z):
        return (0.0, 0.0, 0.0, 0.0)


class SolenoidPotential(GaugePotential):
    """Ideal line flux along the z axis through the origin, Coulomb gauge.

    A(r, t) = Phi(t) / (2 pi (x^2 + y^2)) * (r x z_hat), V = 0; undefined
    on the axis.
    """

    def __init__(self, schedule: FluxSchedule):
        self.schedule = schedule

    def evaluate(self, t, x, y, z):
        r2 = x * x + y * y
        if r2 <= AXIS_CLEARANCE ** 2:
            raise SingularityOnPath("potential evaluated on the solenoid axis")
        pref = self.schedule(t) / (2.0 * math.pi * r2)
        # r x z_hat = (y, -x, 0)
        return (0.0, pref * y, -pref * x, 0.0)

    def check_path(self, path: SpacetimePath) -> None:
        for a, b in zip(path.events, path.events[1:]):
            if _segment_axis_distance(a, b) <= AXIS_CLEARANCE:
                raise SingularityOnPath(
                    "path approaches the solenoid axis closer than the allowed clearance"
                )


def _segment_axis_distance(a: SpacetimeEvent, b: SpacetimeEvent) -> float:
    """Minimal distance of the xy-projected segment a->b to the origin."""
    ax, ay = a.x, a.y
    dx, dy = b.x - ax, b.y - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return math.hypot(ax, ay)
    s = max(0.0, min(1.0, -(ax * dx + ay * dy) / denom))
    return math.hypot(ax + s * dx, ay + s * dy)


class ScalarField:
    """A scalar field chi with a supplied 4-gradient (d_t, d_x, d_y, d_z)."""

    def __init__(
        self,
        value: Callable[[float, float, float, float], float],
        gradient: Callable[[float, float, float, float], Tuple[float, float, float, float]],
    ):
        self.value = value
        self.gradient = gradient

    def __call__(self, t, x, y, z):
        return self.value(t, x, y, z)

    def at_event(self, e: SpacetimeEvent) -> float:
        return self.value(*e.coords())


class PolynomialScalarField(ScalarField):
    """chi as a polynomial in (t, x, y, z): {(pt, px, py, pz): coeff}."""

    def __init__(self, monomials: Dict[Tuple[int, int, int, int], float]):
        self.monomials = dict(monomials)

        def value(t, x, y, z):
            return sum(
                c * t ** pt * x ** px * y ** py * z ** pz
                for (pt, px, py, pz), c in self.monomials.items()
            )

        def gradient(t, x, y, z):
            g = [0.0, 0.0, 0.0, 0.0]
            vars_ = (t, x, y, z)
            for powers, c in self.monomials.items():
                for k in range(4):
                    if powers[k] == 0:
                        continue
                    term = c * powers[k]
                    for i, p in enumerate(powers):
                        q = p - 1 if i == k else p
                        term *= vars_[i] ** q
                    g[k] += term
            return tuple(g)

        super().__init__(value, gradient)


class PureGaugePotential(GaugePotential):
    """The potential generated by a gauge function chi.

    V = d_t chi, A = -grad chi, so that line phases shift by q * delta(chi).
    """

    def __init__(self, chi: ScalarField):
        self.chi = chi

    def evaluate(self, t, x, y, z):
        gt, gx, gy, gz = self.chi.gradient(t, x, y, z)
        return (gt, -gx, -gy, -gz)


class SumPotential(GaugePotential):
    def __init__(self, parts: Sequence[GaugePotential]):
        self.parts = list(parts)

    def evaluate(self, t, x, y, z):
        tot = [0.0, 0.0, 0.0, 0.0]
        for p in self.parts:
            v = p.evaluate(t, x, y, z)
            for i in range(4):
                tot[i] += v[i]
        return tuple(tot)

    def check_path(self, path: SpacetimePath) -> None:
        for p in self.parts:
            p.check_path(path)


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                      rel_tol: float, max_depth: int) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(1.0, abs(whole))

    def recurse(a, fa, b, fb, m, fm, whole, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if abs(delta) <= 15.0 * rel_tol * scale:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise QuadratureNonConvergence(
                f"adaptive Simpson failed to converge at depth {max_depth}"
            )
        return (recurse(a, fa, m, fm, lm, flm, left, depth + 1)
                + recurse(m, fm, b, fb, rm, frm, right, depth + 1))

    return recurse(a, fa, b, fb, m, fm, whole, 0)


def line_phase(potential: GaugePotential, path: SpacetimePath, charge: int) -> float:
    """Phase q * integral(V dt - A . dl) along the path, in radians."""
    if charge == 0:
        return 0.0
    potential.check_path(path)
    total = 0.0
    for a, b in zip(path.events, path.events[1:]):
        dt = b.t - a.t
        dx = b.x - a.x
        dy = b.y - a.y
        dz = b.z - a.z

        def integrand(s, a=a, dt=dt, dx=dx, dy=dy, dz=dz):
            V, Ax, Ay, Az = potential.evaluate(
                a.t + s * dt, a.x + s * dx, a.y + s * dy, a.z + s * dz
            )
            return V * dt - (Ax * dx + Ay * dy + Az * dz)

        total += _adaptive_simpson(integrand, 0.0, 1.0, QUAD_REL_TOL, QUAD_MAX_DEPTH)
    return charge * total


def loop_phase(potential: GaugePotential, segments: Sequence[OrientedSegment],
               charge: int) -> float:
    """Signed sum of line phases around a closed oriented chain."""
    if not segments:
        raise OpenChain("empty chain")
    for cur, nxt in zip(segments, segments[1:]):
        if not cur.exit.close_to(nxt.entry):
            raise OpenChain("consecutive segment endpoints do not chain")
    if not segments[-1].exit.close_to(segments[0].entry):
        raise OpenChain("chain does not close")
    return sum(
        seg.direction * line_phase(potential, seg.path, charge) for seg in segments
    )


def gauge_transformed(potential: GaugePotential, chi: ScalarField,
                      check_events: Sequence[SpacetimeEvent] | None = None) -> GaugePotential:
    """Add the pure-gauge potential of chi, after spot-checking its gradient."""
    _spot_check_gradient(chi, check_events)
    return SumPotential([potential, PureGaugePotential(chi)])


def _spot_check_gradient(chi: ScalarField, events: Sequence[SpacetimeEvent] | None,
                         tol: float = 1e-6) -> None:
    rng = random.Random(20240817)
    if events is None:
        events = [
            SpacetimeEvent(*(rng.uniform(-1.0, 1.0) for _ in range(4)))
            for _ in range(6)
        ]
    h = 1e-5
    for e in events:
        g = chi.gradient(*e.coords())
        scale = max(1.0, max(abs(v) for v in g))
        for k in range(4):
            c = list(e.coords())
            c[k] += h
            up = chi.value(*c)
            c[k] -= 2 * h
            dn = chi.value(*c)
            fd = (up - dn) / (2 * h)
            if abs(fd - g[k]) > tol * scale:
                raise InconsistentGradient(
                    f"supplied gradient component {k} disagrees with finite differences "
                    f"at {e}: {g[k]} vs {fd}"
                )
