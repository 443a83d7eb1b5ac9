"""``geoflow`` command line: run scenario files.

Subcommands ``integrate``, ``certify``, ``lift`` and ``verify`` each read
one scenario and write CSV/JSON outputs into ``--out``.

Exit codes: 0 success, 1 hard error or malformed scenario, 2 run ended
early (BlowUp, LeftChart, collapsed step, non-graph lift, unverifiable
inequality), 3 a hypothesis or inequality was violated.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .bounds import GrowthFunction
from .eisenhart import (NonGraphError, check_null_constancy, initial_lift_velocity,
                        lift_geodesic, lift_metric, project_and_compare, sample_lift_points)
from .flows import Status, Trajectory, integrate_first_order, integrate_second_order
from .scenario import Scenario, ScenarioError, dumps, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EARLY = 2
EXIT_VIOLATION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def run_trajectory(sc: Scenario, direction: str | None = None) -> Trajectory:
    direction = direction or sc.direction
    if sc.kind == "first-order":
        return integrate_first_order(sc.metric, sc.nu, sc.t0, sc.q0, sc.horizon, direction,
                                     basepoint=sc.basepoint, domain=sc.domain)
    return integrate_second_order(sc.metric, sc.second_order_force, sc.t0, sc.q0, sc.v0,
                                  sc.horizon, direction, basepoint=sc.basepoint)


def _reports_for(sc: Scenario, g: GrowthFunction, sampler) -> list:
    opts = sc.doc.get("certify", {})
    default = {"first-order": ["metric-growth-R", "wintner"],
               "force": ["metric-growth-R2", "force-growth"],
               "lagrangian": ["lagrangian", "force-growth"]}[sc.kind]
    hyps = opts.get("hypotheses", default)
    direction = opts.get("direction", "both")
    m, p, r = sc.metric, sc.basepoint, sc.window
    out = []
    for h in hyps:
        if h in ("metric-growth-R", "metric-growth-R2"):
            out.append(bounds.check_metric_growth(m, p, g, r, h.rsplit("-", 1)[1], sampler))
        elif h == "wintner":
            if sc.kind != "first-order":
                raise ScenarioError("wintner check needs a first-order system")
            out.append(bounds.check_wintner(m, p, sc.nu, g, r, sampler, sc.domain))
        elif h == "force-growth":
            force = sc.second_order_force
            if force is None:
                raise ScenarioError("force-growth check needs a force or lagrangian system")
            out.append(bounds.check_force_growth(m, p, force, g, sc.K, r, sampler, direction))
        elif h == "lagrangian":
            if sc.kind != "lagrangian":
                raise ScenarioError("lagrangian check needs a lagrangian system")
            from .mechanics import certify_lagrangian
            out.extend(certify_lagrangian(sc.lagrangian, p, g, r, sampler).reports)
    return out


def certification(sc: Scenario, seed: int | None = None, samples: int | None = None) -> dict:
    """Run the scenario's hypothesis checks; ``growth: "fitted"`` fits a constant first."""
    sampler = sc.sampler(seed, samples)
    fitted = sc.growth is None
    if fitted:
        probe = _reports_for(sc, GrowthFunction(), sampler)
        consts = [r.fitted_constant for r in probe if math.isfinite(r.fitted_constant)]
        g = GrowthFunction("constant", max(consts, default=1.0))
    else:
        g = sc.growth
    reports = _reports_for(sc, g, sampler)
    verdict = "pass" if reports and all(r.passed for r in reports) else "fail"
    return {
        "scenario": sc.name,
        "command": "certify",
        "verdict": verdict,
        "growth": {**g.to_dict(), "fitted": fitted},
        "window": sc.window,
        "K": sc.K,
        "seed": sampler.seed,
        "reports": [r.to_dict() for r in reports],
    }


def resolved_growth(sc: Scenario, seed=None, samples=None) -> GrowthFunction:
    if sc.growth is not None:
        return sc.growth
    g = certification(sc, seed, samples)["growth"]
    return GrowthFunction(g["kind"], g["c"])


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def cmd_integrate(sc: Scenario, out: Path, args) -> int:
    traj = run_trajectory(sc)
    _write(out, "trajectory.csv", traj.to_csv())
    report = {"scenario": sc.name, "command": "integrate", **traj.report()}
    _write(out, "run.json", dumps(report))
    print(f"{sc.name}: {traj.status.value}" + ("" if traj.t_star is None
                                               else f" t*={traj.t_star:.12g}"))
    return EXIT_OK if traj.status is Status.REACHED_HORIZON else EXIT_EARLY


def cmd_certify(sc: Scenario, out: Path, args) -> int:
    report = certification(sc, args.seed, args.samples)
    _write(out, "certification.json", dumps(report))
    for r in report["reports"]:
        print(f"{sc.name}: {r['hypothesis']}: {r['verdict']} (worst ratio {r['worst_ratio']})")
    return EXIT_OK if report["verdict"] == "pass" else EXIT_VIOLATION


def cmd_lift(sc: Scenario, out: Path, args) -> int:
    if sc.kind != "lagrangian":
        raise ScenarioError(f"{sc.source}: lift needs a lagrangian system")
    opts = sc.doc.get("lift", {})
    tdot = float(opts.get("tdot", 1.0))
    kind = opts.get("kind", "null")
    tol = float(opts.get("tolerance", 1e-6))
    lm = lift_metric(sc.lagrangian)
    report = {"scenario": sc.name, "command": "lift", "kind": kind}
    try:
        u0 = initial_lift_velocity(lm, sc.t0, sc.q0, sc.v0, tdot, kind,
                                   float(opts.get("interval", 1.0)))
        x0 = np.concatenate([[sc.t0], sc.q0, [float(opts.get("y0", 0.0))]])
        run = lift_geodesic(lm, x0, u0, sc.horizon / abs(tdot))
        if run.status is not Status.REACHED_HORIZON:
            raise NonGraphError(f"lifted geodesic ended early: {run.status.value}")
        comparison = project_and_compare(lm, run, tol)
    except NonGraphError as exc:
        report.update({"status": "non-graph", "error": str(exc)})
        _write(out, "lift.json", dumps(report))
        print(f"{sc.name}: lift not a graph over t: {exc}", file=sys.stderr)
        return EXIT_EARLY
    _write(out, "lift.csv", run.to_csv())
    points = sample_lift_points(lm, int(opts.get("null_samples", 200)), sc.seed
                                if args.seed is None else args.seed,
                                t_range=(sc.t0 - sc.window, sc.t0 + sc.window))
    null = check_null_constancy(lm, points)
    report.update({
        "status": run.status.value,
        "causal_type": run.causal_type,
        "initial_velocity": u0.tolist(),
        "conservation": run.drift(),
        "comparison": comparison,
        "null_constancy": null,
        "verdict": "pass" if comparison["matched"] and null["pass"] else "fail",
    })
    _write(out, "lift.json", dumps(report))
    print(f"{sc.name}: lift {report['verdict']} (max deviation {comparison['max_deviation']:.3g},"
          f" max |nabla n| {null['max_nabla_n']:.3g})")
    return EXIT_OK if report["verdict"] == "pass" else EXIT_VIOLATION


def cmd_verify(sc: Scenario, out: Path, args) -> int:
    opts = sc.doc.get("verify", {})
    if "trajectory" in opts:
        path = Path(opts["trajectory"])
        if not path.is_absolute():
            path = Path(sc.source).parent / path
        traj = Trajectory.from_csv(path)
        source = str(opts["trajectory"])
    else:
        traj = run_trajectory(sc)
        source = "fresh run"
    second = sc.kind != "first-order"
    modes = opts.get("distance", ["erx"])
    g = resolved_growth(sc, args.seed, args.samples)
    checks = {}
    for mode in modes:
        checks[mode] = bounds.verify_distance_inequality(sc.metric, sc.basepoint, traj, g, mode)
    if opts.get("envelope", second):
        checks["envelope"] = bounds.verify_energy_envelope(traj, g, sc.beta, sc.t0)
    verified = all(c.get("verified", True) for c in checks.values())
    satisfied = all(c["satisfied"] for c in checks.values())
    verdict = "pass" if satisfied else ("unverifiable" if not verified else "fail")
    report = {"scenario": sc.name, "command": "verify", "trajectory": source,
              "growth": g.to_dict(), "checks": checks, "verdict": verdict,
              "status": traj.status.value}
    _write(out, "verify.json", dumps(report))
    for name, c in checks.items():
        print(f"{sc.name}: {name}: {'satisfied' if c['satisfied'] else 'violated'}")
    if verdict == "pass":
        return EXIT_OK
    return EXIT_EARLY if verdict == "unverifiable" else EXIT_VIOLATION


COMMANDS = {"integrate": cmd_integrate, "certify": cmd_certify, "lift": cmd_lift,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default="geoflow-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--samples", type=int, default=None,
                       help="override the certification sample count")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be nonnegative")
        if args.samples is not None and args.samples < 1:
            raise UsageError("--samples must be positive")
        sc = load_scenario(args.scenario).with_overrides(args.seed)
        return COMMANDS[args.command](sc, Path(args.out), args)
    except UsageError as exc:
        print(f"geoflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ScenarioError as exc:
        print(f"geoflow: malformed scenario: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - any other failure is a hard error
        print(f"geoflow: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
