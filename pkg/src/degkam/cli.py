"""Command line front end.

``degkam COMMAND --spec FILE [--out DIR] ...`` runs one of the checks below on a
spec file (see ``degkam.runspec``), writes ``report.txt`` and ``report.tsv`` to
the output directory and exits 0 exactly when every check of the command passed.

Commands
--------
check-nondegeneracy
    degree and weak convexity of ``grad g`` on ``[region] center/radius``; the
    frequency-map condition as well when ``[region] bounds`` is given.
run-kam
    practical-mode KAM iteration; passes when all steps complete, the
    perturbation norm decreases and ``grad g_nu(0)`` stays below 1e-10.  With
    ``--mode paper`` only the step-0 hypotheses are evaluated.
verify-torus
    ``run-kam`` followed by integration of orbits started on the torus.
estimate-measure
    Monte-Carlo excluded fraction for each ``[region] epsilons`` value.
counterexample
    drift certificate for the degree-zero example.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .degree import BoxRegion, check_A0
from .engine import STEP_FAILURES, initial_state, run, verify_hypotheses
from .flow import FlowError, prop2_check, torus_deviation
from .report import Report
from .resonance import ParamBox, PolynomialMap, check_A1, exclusion_histogram, measure_estimate
from .runspec import SpecError, load_spec
from .schedule import init_schedule
from .series import dumps

COMMANDS = ("check-nondegeneracy", "run-kam", "verify-torus", "estimate-measure", "counterexample")
GRAD_TOL = 1e-10


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degkam", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", required=True, metavar="PATH", help="run specification file")
    p.add_argument("--out", default="degkam-out", metavar="DIR", help="report directory")
    p.add_argument("--mode", choices=("paper", "practical"), default=None,
                   help="schedule mode (overrides [schedule] mode)")
    p.add_argument("--steps", type=int, default=None, metavar="N", help="KAM steps or measure steps")
    p.add_argument("--samples", type=int, default=None, metavar="N", help="Monte-Carlo samples")
    p.add_argument("--seed", type=int, default=None, metavar="N", help="seed for all sampling")
    p.add_argument("--quiet", action="store_true", help="do not print the report")
    p.add_argument("--dump-series", action="store_true", help="write P and g after every step")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


# ---------------------------------------------------------------------------
# helpers

def _seed(spec, args) -> int:
    return args.seed if args.seed is not None else spec.number("region", "seed", int)


def _mode(spec, args) -> str:
    return args.mode or spec.get("schedule", "mode")


def _schedule(spec, args, mode=None):
    if not spec.has("schedule"):
        raise SpecError("missing [schedule] section")
    m = spec.get("schedule", "m")
    L = spec.get("schedule", "L")
    return init_schedule(
        spec.number("schedule", "epsilon"), spec.n, spec.d, spec.number("schedule", "tau"),
        spec.number("schedule", "s"), spec.number("schedule", "r"),
        m=int(float(m)) if m is not None else None, L=float(L) if L is not None else None,
        mode=mode or _mode(spec, args), K_base=spec.number("schedule", "K_base", int))


def _box(spec) -> ParamBox | None:
    raw = spec.get("region", "bounds")
    if raw is None:
        return None
    vals = spec.vector("region", "bounds")
    if len(vals) % 2:
        raise SpecError("[region] bounds needs lo hi pairs", spec.lines.get(("region", "bounds")))
    bounds = tuple((float(a), float(b)) for a, b in vals.reshape(-1, 2))
    how = spec.get("region", "omega_map").split()
    if how[0] == "identity":
        omap = PolynomialMap.identity(len(bounds))
    elif how[0] == "constant":
        omap = PolynomialMap.constant([float(v) for v in how[1:]], len(bounds))
    else:
        raise SpecError(f"omega_map must be 'identity' or 'constant w..', got {' '.join(how)!r}",
                        spec.lines.get(("region", "omega_map")))
    try:
        return ParamBox(bounds, omap)
    except ValueError as exc:
        raise SpecError(f"[region] {exc}", spec.lines.get(("region", "bounds"))) from None


def _add_schedule(report: Report, sch):
    sec = report.section("schedule")
    for key, val in (("epsilon", sch.epsilon), ("m", sch.m), ("n", sch.n), ("d", sch.d),
                     ("tau", sch.tau), ("rho", sch.rho), ("eta", sch.eta), ("gamma0", sch.gamma0),
                     ("mu0", sch.mu0), ("s0", sch.s0), ("r0", float(sch.r0)), ("K_base", sch.K_base)):
        sec.add(key, val)


def _add_hypotheses(report: Report, reports):
    if not reports:
        return
    sec = report.section("hypotheses")
    for hr in reports:
        for row in hr.rows:
            tag = f"nu{hr.nu}.{row.name}"
            sec.add(f"{tag}.left", row.left)
            sec.add(f"{tag}.right", row.right)
            sec.add(f"{tag}.margin", row.margin)
            sec.add(f"{tag}.passed", row.passed)
            sec.add(f"{tag}.tight_constant", row.tight_constant)
        sec.block(f"step {hr.nu}:\n" + hr.text())


# ---------------------------------------------------------------------------
# commands

def cmd_check_nondegeneracy(spec, args, report: Report):
    N = spec.normal_form()
    seed = _seed(spec, args)
    report.metadata.append(("seed", seed))
    center = (spec.vector("region", "center") if spec.get("region", "center") is not None
              else np.zeros(2 * spec.d))
    radius = spec.number("region", "radius", default=1.0)
    samples = args.samples if args.samples is not None else spec.number("region", "samples", int)
    try:
        a0 = check_A0(N.g, BoxRegion(center, radius), samples, np.random.default_rng(seed))
    except (ValueError, ArithmeticError) as exc:
        report.fail("A0", f"{type(exc).__name__}: {exc}")
        return
    sec = report.section("A0")
    if a0.degree is not None:
        sec.add("degree", a0.degree.degree)
        sec.add("degree_method", a0.degree.method)
        sec.add("boundary_samples", a0.degree.samples)
        sec.add("boundary_min_norm", a0.degree.min_norm)
        sec.add("degree_odd", a0.degree.degree % 2 == 1)
    sec.add("odd_map", a0.borsuk.passed)
    sec.add("odd_map_defect", a0.borsuk.max_defect)
    if a0.convexity is not None:
        sec.add("sigma", a0.convexity.sigma)
        sec.add("L", a0.convexity.L)
        sec.add("convexity_samples", a0.convexity.sample_count)
    sec.add("passed", a0.passed)
    sec.add("message", a0.message)
    report.passed &= a0.passed

    box = _box(spec)
    if box is not None:
        a1 = check_A1(box, spec.number("region", "A1_order", int),
                      spec.number("region", "A1_grid", int))
        s1 = report.section("A1")
        for key, val in (("M", a1.M), ("points", a1.points), ("directions", a1.directions),
                         ("min_jet", a1.min_jet), ("violations", len(a1.violations)),
                         ("passed", a1.passed)):
            s1.add(key, val)
        s1.block(a1.text())
        report.passed &= a1.passed


def _iterate(spec, args, report: Report):
    """Shared body of run-kam and verify-torus; returns the final state or None."""
    mode = _mode(spec, args)
    report.metadata.append(("mode", mode))
    N, P = spec.normal_form(), spec.perturbation()
    sch = _schedule(spec, args, mode)
    _add_schedule(report, sch)
    if mode == "paper":
        # the paper cutoffs are astronomically large: evaluate the hypotheses only
        state = initial_state(N, P, sch)
        hr = verify_hypotheses(state, sch)
        _add_hypotheses(report, [hr])
        sec = report.section("checks")
        sec.add("hypotheses_passed", hr.passed_count)
        sec.add("hypotheses_total", len(hr.rows))
        sec.add("passed", hr.all_passed)
        report.passed &= hr.all_passed
        return None

    steps = args.steps if args.steps is not None else spec.number("schedule", "max_steps", int)
    stop = spec.number("schedule", "stop_norm")
    state = initial_state(N, P, sch)
    dump_dir = os.path.join(args.out, "series") if args.dump_series else None
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
        _dump(dump_dir, state)
    failure = None
    rep = None
    try:
        for _ in range(steps):
            if state.norm_history[-1][1] <= stop:
                break
            state, rep = run(state, sch, 1, stop)
            if dump_dir:
                _dump(dump_dir, state)
    except STEP_FAILURES as exc:
        state, rep = exc.partial
        failure = exc
    except (ValueError, ArithmeticError) as exc:
        failure = exc

    sec = report.section("steps")
    for nu, norm, bound in state.norm_history:
        sec.add(f"nu{nu}.norm", norm)
        sec.add(f"nu{nu}.bound", bound)
    for rec in state.records:
        sec.add(f"nu{rec.nu}.K", rec.K)
        sec.add(f"nu{rec.nu}.gamma", rec.gamma)
        sec.add(f"nu{rec.nu}.omega_drift", rec.omega_drift)
        sec.add(f"nu{rec.nu}.shift", rec.shift)
        sec.add(f"nu{rec.nu}.terms", rec.terms)
    if rep is not None:
        sec.block(rep.table())
    _add_hypotheses(report, getattr(state, "hypotheses", []))

    grad = float(np.abs(state.N.grad_g0()).max())
    norms = [h[1] for h in state.norm_history]
    monotone = all(b < a for a, b in zip(norms, norms[1:]))
    chk = report.section("checks")
    chk.add("steps_completed", len(state.records))
    chk.add("completed", failure is None)
    chk.add("monotone", monotone)
    chk.add("grad_g0", grad)
    chk.add("grad_ok", grad <= GRAD_TOL)
    ratios = [b / a for a, b in zip(norms, norms[1:]) if a > 0]
    if ratios:
        chk.add("ratios", ratios)
    report.passed &= monotone and grad <= GRAD_TOL
    if failure is not None:
        where = "find_shift" if type(failure).__name__ == "NoZeroFoundError" else "kam_step"
        report.fail("failure", f"{where} at step {state.step}: {type(failure).__name__}: {failure}")
        return None
    return state


def _dump(directory: str, state):
    with open(os.path.join(directory, f"P_{state.step:03d}.tfs"), "w", encoding="utf-8") as fh:
        fh.write(dumps(state.P))
    with open(os.path.join(directory, f"g_{state.step:03d}.tfs"), "w", encoding="utf-8") as fh:
        fh.write(dumps(state.N.g))


def cmd_run_kam(spec, args, report: Report):
    _iterate(spec, args, report)


def cmd_verify_torus(spec, args, report: Report):
    if _mode(spec, args) == "paper":
        report.fail("torus", "verify-torus needs a completed practical-mode run")
        return
    state = _iterate(spec, args, report)
    if state is None:
        return
    T = spec.number("torus", "T")
    h = spec.number("torus", "h")
    angles = spec.number("torus", "angles", int)
    try:
        tc = torus_deviation(state.hamiltonian, T, h, angles, details=True)
    except FlowError as exc:
        report.fail("torus", f"FlowError: {exc}")
        return
    norm = state.norm_history[-1][1]
    bound = 10.0 * norm * T
    sec = report.section("torus")
    for key, val in (("T", T), ("h", h), ("angles", angles), ("deviation", tc.deviation),
                     ("bound", bound), ("P_final", norm), ("energy_drift", tc.energy_drift),
                     ("pruning_radius", tc.radius), ("kept_terms", tc.kept_terms),
                     ("dropped_bound", tc.dropped_bound), ("passed", tc.deviation <= bound)):
        sec.add(key, val)
    report.passed &= tc.deviation <= bound


def cmd_estimate_measure(spec, args, report: Report):
    box = _box(spec)
    if box is None:
        raise SpecError("estimate-measure needs [region] bounds")
    seed = _seed(spec, args)
    samples = args.samples if args.samples is not None else spec.number("region", "samples", int)
    steps = args.steps if args.steps is not None else spec.number("region", "steps", int)
    report.metadata.append(("seed", seed))
    report.metadata.append(("mode", "practical"))
    eps = spec.get("region", "epsilons")
    if eps is None:
        raise SpecError("estimate-measure needs [region] epsilons")
    epsilons = list(spec.vector("region", "epsilons"))
    kinds = tuple(spec.get("region", "kinds").split())
    kw = {}
    if spec.has("schedule"):
        kw = dict(tau=spec.number("schedule", "tau"), s=spec.number("schedule", "s"),
                  r=spec.number("schedule", "r"), K_base=spec.number("schedule", "K_base", int))
        if spec.get("schedule", "m") is not None:
            kw["m"] = spec.number("schedule", "m", int)
    table = measure_estimate(box, epsilons, steps, samples, seed, kinds=kinds,
                             M=spec.number("region", "A1_order", int), **kw)
    sec = report.section("measure")
    sec.add("steps", steps)
    sec.add("samples", samples)
    sec.add("volume", box.volume)
    for i, row in enumerate(table.rows):
        for key in ("epsilon", "gamma0", "fraction", "half_width", "std_error", "analytic_bound"):
            sec.add(f"row{i}.{key}", getattr(row, key))
    sec.add("nonincreasing", table.nonincreasing())
    sec.block(table.text())
    hist = report.section("exclusion_by_order")
    for i, eps_i in enumerate(epsilons):
        for order, frac in exclusion_histogram(table.per_mode[float(eps_i)], samples):
            hist.add(f"row{i}.order{order}", frac)
    report.passed &= table.nonincreasing()


def cmd_counterexample(spec, args, report: Report):
    if not spec.has("counterexample"):
        raise SpecError("missing [counterexample] section")
    eps = spec.number("counterexample", "epsilon")
    omega = spec.number("counterexample", "omega")
    T = spec.number("counterexample", "T")
    h = spec.number("counterexample", "h")
    rep = prop2_check(eps, omega, T, h)
    sec = report.section("counterexample")
    sec.add("epsilon", eps)
    sec.add("in_scope", rep.in_scope)
    if rep.in_scope:
        sec.add("symbolic_v_dot", rep.symbolic_ok)
        sec.add("v_dot_bound", rep.v_dot_bound)
        sec.add("no_real_solution", rep.scan_min > 0)
        sec.add("scan_min", rep.scan_min)
        sec.add("scan_argmin", rep.scan_argmin)
        sec.add("max_slope", rep.max_slope)
        for i, (v0, v1, t1) in enumerate(zip(rep.v_start, rep.v_end, rep.t_end)):
            sec.add(f"orbit{i}.v_start", v0)
            sec.add(f"orbit{i}.v_end", v1)
            sec.add(f"orbit{i}.t_end", t1)
        sec.add("drop_ok", rep.drop_ok)
        sec.add("slope_ok", rep.slope_ok)
    sec.add("passed", rep.passed)
    sec.block(rep.text())
    report.passed &= rep.passed


HANDLERS = {
    "check-nondegeneracy": cmd_check_nondegeneracy,
    "run-kam": cmd_run_kam,
    "verify-torus": cmd_verify_torus,
    "estimate-measure": cmd_estimate_measure,
    "counterexample": cmd_counterexample,
}


def dispatch(command: str, spec, args) -> Report:
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    report = Report(command, [("spec_hash", spec.hash())])
    try:
        HANDLERS[command](spec, args, report)
    except SpecError:
        raise
    except (ValueError, ArithmeticError) as exc:
        report.fail("failure", f"{type(exc).__name__}: {exc}")
    return report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        report = dispatch(args.command, spec, args)
    except OSError as exc:
        print(f"degkam: cannot read spec: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"degkam: {args.spec}: {exc}", file=sys.stderr)
        return 2
    report.write(args.out)
    if not args.quiet:
        sys.stdout.write(report.text())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
