"""Command-line scenario runner.

Subcommands:

- ``run FILE`` executes the protocol declared in a scenario file.
- ``decompose --x ... --xp ...`` prints the bipartite loop decomposition
  of a phase difference between two source-to-party assignments.
- ``gauge-check FILE --chi EXPR`` reruns a scenario under a gauge
  transformation and reports the largest probability deviation.
- ``tomography FILE`` reconstructs the state declared in a [target]
  section from simulated measurement statistics.
- ``ab-demo`` runs the time-dependent flux geometry.

Each command prints a short prose summary followed by a JSON document
between ``---report---`` fences; the JSON is byte-stable for a fixed
scenario and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Dict, Optional

from .errors import (
    ForbiddenMeasurement,
    LoccPhaseError,
    ParseError,
    ScenarioError,
)
from .estimation import mle_delta_phi, sample, wrap_phase
from .fock import QuantumState
from .loopdecomp import Assignment, decompose_phase
from .protocols import (
    EmissionScenario,
    ProtocolResult,
    annihilation_protocol,
    check_number_projector,
    general_outcome_distribution,
    interference_phase_pairs,
    tomography_run,
    two_party_phase_protocol,
    _photon_sign_distribution,
    _two_party_sign_distribution,
    _annihilate_pairs,
    build_emission_state,
    one_particle_per_party,
)
from .fock import postselect
from .scenario import (
    ParsedScenario,
    ab_scenario,
    chi_from_expression,
    parse_scenario_file,
)

REPORT_FENCE = "---report---"

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_FORBIDDEN = 4
EXIT_ERROR = 5

HALF_PI = math.pi / 2.0


def emit_report(report: Dict, out=None) -> None:
    out = out or sys.stdout
    print(REPORT_FENCE, file=out)
    print(json.dumps(report, sort_keys=True, indent=2), file=out)
    print(REPORT_FENCE, file=out)


def extract_report(text: str) -> Dict:
    """Inverse of emit_report: pull the JSON block back out of CLI output."""
    parts = text.split(REPORT_FENCE)
    if len(parts) < 3:
        raise ValueError("no report block found")
    return json.loads(parts[1])


def _distribution_json(dist: Dict) -> Dict[str, float]:
    return {",".join(str(v) for v in key): prob for key, prob in sorted(dist.items())}


def _scenario_echo(parsed: ParsedScenario, shots: Optional[int], seed: int) -> Dict:
    scenario = parsed.scenario
    return {
        "protocol": parsed.protocol,
        "parties": list(scenario.registry.parties()),
        "num_modes": len(scenario.registry),
        "num_sources": len(scenario.sources),
        "potential": type(scenario.potential).__name__,
        "rules": {
            "enforce_parity": scenario.rules.enforce_parity,
            "enforce_charge": scenario.rules.enforce_charge,
        },
        "shots": "exact" if shots is None else shots,
        "seed": seed,
    }


def _two_party_estimate(scenario: EmissionScenario, shots: int, seed: int) -> Dict:
    registry = scenario.registry
    party_a, party_b = registry.parties()
    state = build_emission_state(scenario)
    ps_state, _ = postselect(state, one_particle_per_party(registry,
                                                           (party_a, party_b)))
    dists = {
        delta: _two_party_sign_distribution(registry, ps_state, party_a,
                                            party_b, delta)
        for delta in (0.0, HALF_PI)
    }
    counts = sample(dists, shots, seed)

    def model(setting):
        def dist(phi):
            return {
                (sa, sb): (1.0 + sa * sb * math.cos(phi + setting)) / 4.0
                for sa in (1, -1) for sb in (1, -1)
            }
        return dist

    est = mle_delta_phi(counts, model)
    return {
        "delta_phi_rad": est.value,
        "standard_error_rad": est.standard_error,
        "log_likelihood": est.log_likelihood,
        "counts": {str(k): {",".join(map(str, o)): n for o, n in sorted(v.items())}
                   for k, v in counts.counts.items()},
    }


def _run_two_party(parsed: ParsedScenario, shots, seed) -> Dict:
    result = two_party_phase_protocol(parsed.scenario,
                                      parsed.options.get("bs_phase", 0.0))
    report = {
        "scenario": _scenario_echo(parsed, shots, seed),
        "postselection_probability": result.postselection_probability,
        "distribution": _distribution_json(result.distribution),
        "phases": {
            "delta_phi_rad": result.delta_phi,
            "convention": "correlator E(setting) = cos(delta_phi + setting), radians",
        },
        "provenance": {
            "line_phases_rad": result.provenance.get("line_phases", {}),
            "beta_difference_rad": result.provenance.get("beta_difference"),
            "loop_combination": result.provenance.get("loop_combination"),
            "loop_value_rad": result.provenance.get("loop_value"),
            "predicted_delta_phi_rad": result.provenance.get("predicted_delta_phi"),
        },
    }
    if shots is not None:
        report["estimate"] = _two_party_estimate(parsed.scenario, shots, seed)
    return report


def _run_annihilation(parsed: ParsedScenario, shots, seed) -> Dict:
    result = annihilation_protocol(parsed.scenario)
    report = {
        "scenario": _scenario_echo(parsed, shots, seed),
        "postselection_probability": result.postselection_probability,
        "distribution": _distribution_json(result.distribution),
        "phases": {
            "delta_phi_rad": result.delta_phi,
            "convention": "correlator E(setting) = cos(delta_phi + setting), radians",
        },
        "provenance": {
            "line_phases_rad": result.provenance.get("line_phases", {}),
        },
    }
    if shots is not None:
        scenario = parsed.scenario
        state = build_emission_state(scenario)

        def colocated(occ):
            registry = scenario.registry
            for p in registry.parties():
                if occ[registry.index_of(p, "b")] != occ[registry.index_of(p, "c")]:
                    return False
            return True

        ps_state, _ = postselect(state, colocated)
        photon_state = _annihilate_pairs(scenario.registry, ps_state)
        dists = {
            delta: _photon_sign_distribution(scenario.registry, photon_state,
                                             delta, scenario.rules)
            for delta in (0.0, HALF_PI)
        }
        counts = sample(dists, shots, seed)

        def model(setting):
            def dist(phi):
                return {
                    (sa, sb): (1.0 + sa * sb * math.cos(phi + setting)) / 4.0
                    for sa in (1, -1) for sb in (1, -1)
                }
            return dist

        est = mle_delta_phi(counts, model)
        report["estimate"] = {
            "delta_phi_rad": est.value,
            "standard_error_rad": est.standard_error,
        }
    return report


def _run_general(parsed: ParsedScenario, shots, seed) -> Dict:
    result = general_outcome_distribution(parsed.scenario)
    phases = []
    try:
        pairs = interference_phase_pairs(parsed.scenario, max_pairs=24)
    except LoccPhaseError:
        pairs = []
    for pair in pairs:
        phases.append({
            "x": list(pair.x.parties),
            "xp": list(pair.xp.parties),
            "delta_phi_rad": pair.delta_value,
            "loop_value_rad": pair.decomposition_value,
            "brackets": [
                {"party": b.party, "source": b.source,
                 "source2": b.source2, "party2": b.party2}
                for b in pair.decomposition.brackets
            ],
        })
    return {
        "scenario": _scenario_echo(parsed, shots, seed),
        "postselection_probability": result.postselection_probability,
        "distribution": _distribution_json(result.distribution),
        "interference_phases": phases,
        "phases": {"convention": "radians; brackets are closed-loop integrals"},
    }


_RUNNERS = {
    "two_party": _run_two_party,
    "annihilation": _run_annihilation,
    "general": _run_general,
}


def run_scenario(path: str, shots: Optional[int] = None, seed: Optional[int] = None,
                 enforce_ssr: Optional[bool] = None) -> Dict:
    parsed = parse_scenario_file(path)
    if enforce_ssr is not None:
        rules = parsed.scenario.rules.replace(enforce_parity=enforce_ssr,
                                              enforce_charge=enforce_ssr)
        parsed.scenario.rules = rules
    if shots is None:
        shots = parsed.execution.get("shots")
    if seed is None:
        seed = int(parsed.execution.get("seed", 0))
    projector = parsed.options.get("number_projector")
    if projector:
        registry = parsed.scenario.registry
        parts = str(projector).split("/")
        if len(parts) == 2:
            parts.append("primary")
        mode = registry.index_of(parts[0], parts[1], parts[2])
        check_number_projector(registry, mode, parsed.scenario.rules)
    runner = _RUNNERS.get(parsed.protocol)
    if runner is None:
        raise ScenarioError(f"protocol {parsed.protocol!r} cannot be run from a file")
    return runner(parsed, shots, seed)


def _cmd_run(args) -> int:
    shots = None if args.exact else args.shots
    report = run_scenario(args.scenario, shots=shots, seed=args.seed,
                          enforce_ssr=_ssr_flag(args))
    phase = report.get("phases", {}).get("delta_phi_rad")
    if phase is not None:
        print(f"extracted phase: {phase:.9f} rad")
    print(f"postselection probability: {report.get('postselection_probability'):.9f}")
    emit_report(report)
    return EXIT_OK


def _parse_assignment(text: str) -> Assignment:
    return Assignment(tuple(int(v) for v in text.split(",")))


def _cmd_decompose(args) -> int:
    x = _parse_assignment(args.x)
    xp = _parse_assignment(args.xp)
    decomp = decompose_phase(x, xp)
    print(f"{len(decomp.brackets)} brackets")
    report = {
        "x": list(x.parties),
        "xp": list(xp.parties),
        "num_brackets": len(decomp.brackets),
        "brackets": [
            {"party": b.party, "source": b.source,
             "source2": b.source2, "party2": b.party2}
            for b in decomp.brackets
        ],
        "exact": decomp.is_exact(),
        "convention": "each bracket is a closed bipartite loop phase in radians",
    }
    emit_report(report)
    return EXIT_OK


def _cmd_gauge_check(args) -> int:
    parsed = parse_scenario_file(args.scenario)
    chi = chi_from_expression(args.chi)
    base = _RUNNERS[parsed.protocol](parsed, None, 0)
    transformed = ParsedScenario(parsed.scenario.gauge_transformed(chi),
                                 parsed.protocol, parsed.options,
                                 parsed.execution, parsed.target)
    other = _RUNNERS[parsed.protocol](transformed, None, 0)
    base_dist = base["distribution"]
    other_dist = other["distribution"]
    max_dev = max(
        abs(base_dist.get(k, 0.0) - other_dist.get(k, 0.0))
        for k in set(base_dist) | set(other_dist)
    )
    tol = args.tolerance
    ok = max_dev < tol
    print(f"max outcome probability deviation: {max_dev:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {tol:g})")
    report = {
        "chi": args.chi,
        "max_probability_deviation": max_dev,
        "tolerance": tol,
        "gauge_invariant": ok,
        "convention": "probabilities are dimensionless; phases in radians",
    }
    emit_report(report)
    return EXIT_OK if ok else EXIT_ERROR


def _cmd_tomography(args) -> int:
    parsed = parse_scenario_file(args.scenario)
    if parsed.target is None:
        raise ScenarioError("tomography needs a [target] section")
    state = QuantumState(parsed.scenario.registry, dict(parsed.target)).normalized()
    shots = None if args.exact else args.shots
    if shots is None:
        shots = parsed.execution.get("shots")
    seed = args.seed if args.seed is not None else int(parsed.execution.get("seed", 0))
    result = tomography_run(state, shots=shots, seed=seed)
    print(f"support size {len(result.support)}, "
          f"{'exact probabilities' if shots is None else f'{shots} shots'}")
    report = {
        "support": [",".join(map(str, pat)) for pat in result.support],
        "lambdas": {",".join(map(str, pat)): lam
                    for pat, lam in sorted(result.lambdas.items())},
        "phases_rad": {",".join(map(str, pat)): phi
                       for pat, phi in sorted(result.phases.items())},
        "shots": "exact" if shots is None else shots,
        "seed": seed,
        "convention": "phases in radians, global phase fixed to 0 on the "
                      "lexicographically smallest support element",
    }
    emit_report(report)
    return EXIT_OK


def _cmd_ab_demo(args) -> int:
    ramp = tuple(float(v) for v in args.ramp.split(","))
    if len(ramp) != 2:
        raise ScenarioError("ramp must be t_start,t_end")
    scenario = ab_scenario(args.theta, args.flux, ramp=ramp, charge=args.charge)
    result = two_party_phase_protocol(scenario)
    predicted = wrap_phase(args.charge * args.flux * args.theta / (2.0 * math.pi))
    print(f"extracted phase: {result.delta_phi:.9f} rad "
          f"(flux * theta / 2 pi = {predicted:.9f} rad)")
    report = {
        "theta_rad": args.theta,
        "final_flux_phase_units": args.flux,
        "charge": args.charge,
        "ramp": list(ramp),
        "delta_phi_rad": result.delta_phi,
        "predicted_rad": predicted,
        "deviation_rad": abs(wrap_phase(result.delta_phi - predicted)),
        "convention": "flux quoted in charge*flux phase units; phases in radians",
    }
    emit_report(report)
    return EXIT_OK


def _ssr_flag(args) -> Optional[bool]:
    if args.enforce_ssr is None:
        return None
    return args.enforce_ssr == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loccphase",
        description="Phase-measurement protocol simulator for few-particle "
                    "interferometry with abelian gauge coupling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario file path")
        p.add_argument("--shots", type=int, default=None,
                       help="number of measurement shots per setting")
        p.add_argument("--exact", action="store_true",
                       help="use exact probabilities instead of sampling")
        p.add_argument("--seed", type=int, default=None, help="sampling seed")
        p.add_argument("--enforce-ssr", choices=("on", "off"), default=None,
                       help="override the scenario's superselection flags")
        p.add_argument("--tolerance", type=float, default=1e-8,
                       help="numerical tolerance for checks")

    p_run = sub.add_parser("run", help="execute a scenario file")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_dec = sub.add_parser("decompose",
                           help="bipartite loop decomposition of a phase difference")
    p_dec.add_argument("--x", required=True,
                       help="comma-separated party index per source")
    p_dec.add_argument("--xp", required=True,
                       help="comma-separated party index per source")
    p_dec.set_defaults(func=_cmd_decompose)

    p_gc = sub.add_parser("gauge-check",
                          help="rerun a scenario under a gauge transformation")
    common(p_gc)
    p_gc.add_argument("--chi", required=True,
                      help="gauge function chi(t, x, y, z)")
    p_gc.set_defaults(func=_cmd_gauge_check)

    p_tomo = sub.add_parser("tomography",
                            help="reconstruct the [target] state of a scenario")
    common(p_tomo)
    p_tomo.set_defaults(func=_cmd_tomography)

    p_ab = sub.add_parser("ab-demo", help="time-dependent flux demonstration")
    p_ab.add_argument("--theta", type=float, default=math.pi,
                      help="angular separation of the parties in radians")
    p_ab.add_argument("--flux", type=float, default=2.0 * math.pi,
                      help="final flux in charge*flux phase units")
    p_ab.add_argument("--ramp", default="10,11",
                      help="flux ramp start,end times")
    p_ab.add_argument("--charge", type=int, default=1, help="particle charge")
    p_ab.set_defaults(func=_cmd_ab_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ForbiddenMeasurement as exc:
        print(f"forbidden measurement: {exc} "
              f"(violates the {exc.rule} superselection rule)", file=sys.stderr)
        return EXIT_FORBIDDEN
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LoccPhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
