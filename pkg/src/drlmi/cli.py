"""Command-line front end (``drlmi``).

Subcommands::

    analyze        worst-case cost of a closed loop (certificate SDP)
    synthesize     output-feedback controller (cor, ind or h2)
    worst-case     worst-case variances, total or per output, with Monte Carlo
    bode           largest singular value per output over a frequency grid
    simulate       averaged cost along one simulated trajectory
    bench-turbine  H2 vs distributionally robust design on the turbine model

Exit codes: 0 success, 1 input error, 2 infeasible or unstable, 3 solver
trouble.  Solver options can be overridden with the environment variable
``DRLMI_SOLVER_OPTS`` holding a JSON object, for example
``{"tol": 1e-8, "backend": {"max_iter": 500}}``.
"""

import argparse
import json
import os
import pathlib
import sys
from importlib import resources

import numpy as np

from . import analysis, io, synthesis
from .ambiguity import Kind
from .errors import DrlmiError, IllConditioned, Infeasible, InvalidInput, NotPd, NotPsd, SolverFailure, UnstableSystem
from .matops import psd_factor, spectral_radius
from .model import ClosedLoop, close_loop, frequency_response_max_sv, simulate, weighted_h2_norm_sq
from .sdpcore import SolverOptions

ENV_SOLVER_OPTS = "DRLMI_SOLVER_OPTS"
DEFAULT_SEED = 20240601
EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3
TURBINE_SCALING = (1.0, 5.0, 100.0, 1.0)


def turbine_standin_path():
    """Path of the shipped (non-authoritative) turbine stand-in problem."""
    return resources.files("drlmi").joinpath("data", "turbine_standin.json")


# ---------------------------------------------------------------------------
# helpers


def solver_options():
    raw = os.environ.get(ENV_SOLVER_OPTS, "").strip()
    if not raw:
        return SolverOptions()
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{ENV_SOLVER_OPTS} is not valid JSON: {exc.msg}") from None
    if not isinstance(d, dict):
        raise InvalidInput(f"{ENV_SOLVER_OPTS} must hold a JSON object")
    return SolverOptions.coerce(d)


def fmt(x):
    """Six significant digits for tables."""
    if isinstance(x, str):
        return x
    return f"{float(x):.6g}"


def print_table(header, rows, out=None):
    out = out or sys.stdout
    cells = [[str(h) for h in header]] + [[fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for k, r in enumerate(cells):
        print("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))), file=out)
        if k == 0:
            print("  ".join("-" * w for w in widths), file=out)


def _problem(args):
    prob = io.read_problem(args.problem)
    amb = prob.ambiguity
    if getattr(args, "kind", None) in ("cor", "ind"):
        amb = amb.replace(kind=args.kind)
    if getattr(args, "gamma", None) is not None:
        amb = amb.replace(gamma=args.gamma)
    prob.ambiguity = amb
    return prob


def _closed_loop(prob, args, scaled=False):
    plant = prob.scaled_plant() if scaled else prob.plant
    ctrl = io.read_controller(args.controller) if getattr(args, "controller", None) else prob.controller
    if ctrl is None:
        cl = ClosedLoop(plant.A, plant.B_w, plant.C_z, plant.D_zw)
    else:
        if ctrl.B_c.shape[1] != plant.n_y or ctrl.C_c.shape[0] != plant.n_u:
            raise InvalidInput(
                f"controller maps {ctrl.B_c.shape[1]} measurements to {ctrl.C_c.shape[0]} inputs; "
                f"plant has n_y={plant.n_y}, n_u={plant.n_u}"
            )
        cl = close_loop(plant, ctrl)
    cl.require_stable()
    return cl


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        pathlib.Path(path).write_text(text, encoding="utf-8")


def _seed(args):
    seed = DEFAULT_SEED if args.seed is None else args.seed
    print(f"seed: {seed}")
    return seed


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args):
    prob = _problem(args)
    opts = solver_options()
    cl = _closed_loop(prob, args, args.scaled)
    amb = prob.ambiguity
    if prob.autocorrelation is not None and amb.kind is Kind.CORRELATED:
        cert = analysis.analyze_autocorrelated(cl, amb, prob.autocorrelation, opts)
    else:
        cert = analysis.analyze(cl, amb, opts)
    doc = io.result_document(
        "analyze", status="optimal", kind=amb.kind.value, gamma=amb.gamma,
        cost=cert.cost, **{"lambda": cert.lam}, Q=cert.Q, P=cert.P,
    )
    if cert.mu is not None:
        doc["mu"] = cert.mu
    rows = [["worst-case cost", cert.cost], ["lambda", cert.lam]]
    if args.check_gap:
        if prob.autocorrelation is not None and amb.kind is Kind.CORRELATED:
            primal = analysis.solve_moment_relaxation_autocorrelated(cl, amb, prob.autocorrelation, opts).value
        else:
            primal = analysis.solve_moment_relaxation(cl, amb, opts, method="primal").value
        doc["primal"] = primal
        doc["duality_gap"] = cert.cost - primal
        rows += [["moment relaxation", primal], ["duality gap", cert.cost - primal]]
    print(f"analysis: kind={amb.kind.value} gamma={fmt(amb.gamma)}")
    print_table(["quantity", "value"], rows)
    if args.out:
        io.write_result(args.out, doc, args.output)
    elif args.output == "csv":
        sys.stdout.write(io.result_csv(doc))
    return EXIT_OK


def _reanalyze(plant, ctrl, amb, kind, opts):
    cl = close_loop(plant, ctrl)
    cl.require_stable()
    if kind == "h2":
        return cl, weighted_h2_norm_sq(cl, amb.Sigma_nom)
    return cl, analysis.analyze(cl, amb, opts).cost


def cmd_synthesize(args):
    prob = _problem(args)
    opts = solver_options()
    plant = prob.scaled_plant() if args.scaled else prob.plant
    amb = prob.ambiguity
    kind = args.kind or amb.kind.value
    if kind == "h2":
        res = synthesis.synthesize_h2(plant, amb.Sigma_nom, opts)
    else:
        amb = amb.replace(kind=kind)
        res = synthesis.synthesize(plant, amb, opts)
    cl, re = _reanalyze(plant, res.controller, amb, kind, opts)
    rows = [
        ["synthesis cost", res.cost],
        ["re-analysis cost", re],
        ["relative difference", abs(re - res.cost) / max(abs(res.cost), 1e-300)],
        ["spectral radius", cl.spectral_radius],
    ]
    info = {"kind": kind, "gamma": amb.gamma, "cost": res.cost, "reanalysis_cost": re}
    if kind != "h2" and not args.no_compare:
        h2 = synthesis.synthesize_h2(plant, amb.Sigma_nom, opts)
        _, h2_wc = _reanalyze(plant, h2.controller, amb, kind, opts)
        rows.append(["H2 controller worst case", h2_wc])
        rows.append(["worst case <= H2 worst case", "yes" if re <= h2_wc * (1 + 1e-6) else "no"])
        info["h2_worst_case"] = h2_wc
    print(f"synthesis: kind={kind} gamma={fmt(amb.gamma)}" + (" (scaled outputs)" if args.scaled else ""))
    print_table(["quantity", "value"], rows)
    io.write_controller(args.out, res.controller, **info)
    print(f"controller written to {args.out}")
    return EXIT_OK


def _mc(cl, Sigma, args, seed):
    policy = analysis.extract_worst_case_policy(Sigma, cl)
    est = analysis.verify_policy_cost(policy, cl, T=args.horizon, n_seeds=args.samples, seed=seed, workers=args.workers)
    return policy, est


def cmd_worst_case(args):
    prob = _problem(args)
    opts = solver_options()
    cl = _closed_loop(prob, args, args.scaled)
    amb = prob.ambiguity
    seed = _seed(args)
    names = prob.names()
    targets = [(names[i], cl.select_outputs([i])) for i in range(cl.n_z)] if args.per_output else [("total", cl)]
    rows, first, persistent = [], None, []
    for k, (name, sub) in enumerate(targets):
        res = analysis.solve_moment_relaxation(sub, amb, opts)
        row = [name, res.value]
        if args.samples > 0:
            policy, est = _mc(sub, res.Sigma, args, seed + k)
            row += [est.mean, est.std]
            if spectral_radius(sub.calA + sub.calB @ policy.F_wchi) > 1 - 1e-6:
                persistent.append(name)
            if first is None:
                first = (policy, sub)
        rows.append(row)
    header = ["output", "worst-case variance"] + (["MC mean", "MC std"] if args.samples > 0 else [])
    print(f"worst case: kind={amb.kind.value} gamma={fmt(amb.gamma)}")
    print_table(header, rows)
    if persistent:
        print(
            "note: the worst-case policy for " + ", ".join(persistent) + " keeps a marginally stable mode, "
            "so single runs are not ergodic and the MC mean converges slowly in --samples"
        )
    if args.out:
        _write_text(args.out, io.table_csv([h.replace(" ", "_").lower() for h in header], rows))
    if args.trajectories:
        if first is None:
            raise InvalidInput("--trajectories needs --samples > 0")
        policy, sub = first
        s = analysis.sample_worst_case(policy, sub, args.horizon, seed)
        nw = sub.n_w
        hdr = ["t"] + [f"w{i + 1}" for i in range(nw)] + [f"what{i + 1}" for i in range(nw)]
        data = [[t, *s.w[t], *s.what[t]] for t in range(s.w.shape[0])]
        _write_text(args.trajectories, io.table_csv(hdr, data))
    return EXIT_OK


def parse_grid(spec):
    """``"N"`` (default range, N points) or ``"lo,hi,N"``.

    Points are log spaced, or linearly spaced when ``lo`` is 0.
    """
    if spec is None:
        return None
    parts = [p.strip() for p in str(spec).split(",")]
    try:
        if len(parts) == 1:
            lo, hi, n = 1e-3, np.pi, int(parts[0])
        elif len(parts) == 3:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        else:
            raise ValueError
    except ValueError:
        raise InvalidInput(f"bad grid {spec!r}; use N or lo,hi,N") from None
    if n < 1 or not 0 <= lo <= hi <= np.pi:
        raise InvalidInput("grid needs N >= 1 and 0 <= lo <= hi <= pi")
    if lo == 0:
        return np.linspace(lo, hi, n)
    return np.logspace(np.log10(lo), np.log10(hi), n)


def bode_rows(cl, names, grid):
    rows = []
    for i, name in enumerate(names):
        for th, sv in frequency_response_max_sv(cl, [i], grid):
            rows.append([name, th, sv])
    return rows


def cmd_bode(args):
    prob = _problem(args)
    cl = _closed_loop(prob, args, args.scaled)
    rows = bode_rows(cl, prob.names(), parse_grid(args.grid))
    _write_text(args.out, io.table_csv(["output", "theta", "sigma_max"], rows))
    if args.out not in (None, "-"):
        print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def cmd_simulate(args):
    prob = _problem(args)
    opts = solver_options()
    cl = _closed_loop(prob, args, args.scaled)
    amb = prob.ambiguity
    seed = _seed(args)
    if args.policy == "nominal":
        rng = np.random.default_rng(seed)
        L = psd_factor(amb.Sigma_nom)
        w = rng.standard_normal((args.horizon, L.shape[1])) @ L.T
        predicted = weighted_h2_norm_sq(cl, amb.Sigma_nom)
    else:
        res = analysis.solve_moment_relaxation(cl, amb, opts)
        policy = analysis.extract_worst_case_policy(res.Sigma, cl)
        w = analysis.sample_worst_case(policy, cl, args.horizon, seed).w
        predicted = res.value
    sim = simulate(cl, w)
    print(f"simulation: policy={args.policy} horizon={args.horizon}")
    print_table(["quantity", "value"], [["averaged cost", sim.cost], ["predicted", predicted]])
    if args.out:
        hdr = ["t"] + [f"z{i + 1}" for i in range(cl.n_z)] + [f"w{i + 1}" for i in range(cl.n_w)]
        data = [[t, *sim.outputs[t], *w[t]] for t in range(w.shape[0])]
        _write_text(args.out, io.table_csv(hdr, data))
    return EXIT_OK


def run_turbine_benchmark(prob, gamma=0.5, variants=("unscaled", "scaled"), opts=None, grid=None):
    """H2 and correlated DR designs with per-output worst-case attacks.

    For each variant the controllers are designed on the (scaled) plant; the
    per-output worst-case variances are always reported in the original
    output units, the totals on the design objective.
    """
    amb = prob.ambiguity.replace(kind="cor", gamma=gamma)
    scaling = prob.scaling if prob.scaling is not None else np.array(TURBINE_SCALING[: prob.plant.n_z])
    names = prob.names()
    report = {}
    for variant in variants:
        W = np.ones(prob.plant.n_z) if variant == "unscaled" else np.asarray(scaling, dtype=float)
        p = prob.plant
        design = io.ProblemFile(p, amb, scaling=W).scaled_plant()
        ctrls = {
            "H2": synthesis.synthesize_h2(design, amb.Sigma_nom, opts).controller,
            "DR": synthesis.synthesize_correlated(design, amb, opts).controller,
        }
        entry = {"scaling": W, "total": {}, "per_output": {}, "disturbance_variances": {}, "bode": {}}
        for lab, ctrl in ctrls.items():
            cl_design = close_loop(design, ctrl)
            cl_design.require_stable()
            entry["total"][lab] = analysis.analyze(cl_design, amb, opts).cost
            cl = close_loop(p, ctrl)
            attacks = [analysis.solve_moment_relaxation(cl.select_outputs([i]), amb, opts) for i in range(cl.n_z)]
            entry["per_output"][lab] = [r.value for r in attacks]
            # variances of each disturbance channel under each output's attack
            entry["disturbance_variances"][lab] = [np.diag(r.Sigma.ww).copy() for r in attacks]
            entry["bode"][lab] = bode_rows(cl, names, grid)
            entry["controller_" + lab] = ctrl
        report[variant] = entry
    return report


def cmd_bench_turbine(args):
    src = args.plant or turbine_standin_path()
    prob = io.read_problem(src)
    opts = solver_options()
    variants = ("scaled",) if args.scaled else ("unscaled", "scaled")
    authoritative = args.plant is not None and not prob.meta.get("non_authoritative", False)
    print(f"model: {src}")
    if not authoritative:
        print(
            "note: this is the non-authoritative stand-in model; the published benchmark\n"
            "      tables cannot be reproduced without the original matrices (use --plant)."
        )
    report = run_turbine_benchmark(prob, args.gamma, variants, opts, parse_grid(args.grid))
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = prob.names()
    summary = {"gamma": args.gamma, "model": str(src), "authoritative": authoritative, "variants": {}}
    for variant, e in report.items():
        print(f"\nworst-case output variances, controllers designed for {variant} outputs (gamma={fmt(args.gamma)})")
        rows = [[n, e["per_output"]["H2"][i], e["per_output"]["DR"][i]] for i, n in enumerate(names)]
        rows.append(["total (design objective)", e["total"]["H2"], e["total"]["DR"]])
        print_table(["output", "H2 variance", "DR variance"], rows)
        ok_total = e["total"]["DR"] <= e["total"]["H2"] * (1 + 1e-6)
        ok_first = e["per_output"]["DR"][0] < e["per_output"]["H2"][0]
        print(f"DR total <= H2 total: {'yes' if ok_total else 'no'};  DR {names[0]} < H2 {names[0]}: {'yes' if ok_first else 'no'}")
        wv = e["disturbance_variances"]["DR"][0]
        print(f"worst-case disturbance variances under the {names[0]} attack on DR: " + ", ".join(fmt(v) for v in wv))
        bode = [[r1[0], r1[1], r1[2], r2[2]] for r1, r2 in zip(e["bode"]["H2"], e["bode"]["DR"])]
        bode_path = outdir / f"bode_{variant}.csv"
        bode_path.write_text(io.table_csv(["output", "theta", "sigma_max_h2", "sigma_max_dr"], bode), encoding="utf-8")
        table_path = outdir / f"table_{variant}.csv"
        table_path.write_text(io.table_csv(["output", "h2_variance", "dr_variance"], rows), encoding="utf-8")
        for lab in ("H2", "DR"):
            io.write_controller(outdir / f"controller_{variant}_{lab.lower()}.json", e["controller_" + lab], kind=lab.lower())
        summary["variants"][variant] = {
            "scaling": e["scaling"], "total": e["total"], "per_output": e["per_output"],
            "disturbance_variances": e["disturbance_variances"],
            "dr_total_le_h2": ok_total, "dr_first_output_lt_h2": ok_first,
        }
    (outdir / "report.json").write_text(io.dumps(io.result_document("bench-turbine", **summary)), encoding="utf-8")
    print(f"\nreport, tables, Bode data and controllers written to {outdir}/")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="drlmi", description="Distributionally robust LMI analysis and synthesis.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, kinds=("cor", "ind")):
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--kind", choices=kinds, help="override the ambiguity kind")
        p.add_argument("--gamma", type=float, help="override the Wasserstein radius")
        p.add_argument("--scaled", action="store_true", help="apply the problem's output scaling")

    p = sub.add_parser("analyze", help="worst-case cost of a closed loop")
    common(p)
    p.add_argument("--controller", help="controller file (defaults to the problem's controller)")
    p.add_argument("--output", choices=("json", "csv"), default="json", help="result format")
    p.add_argument("--out", help="result file")
    p.add_argument("--check-gap", action="store_true", help="also solve the moment relaxation")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="output-feedback synthesis")
    common(p, ("cor", "ind", "h2"))
    p.add_argument("--out", default="controller.json", help="controller file to write")
    p.add_argument("--no-compare", action="store_true", help="skip the H2 comparison")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("worst-case", help="worst-case variances with optional Monte Carlo")
    common(p)
    p.add_argument("--controller")
    p.add_argument("--per-output", action="store_true", help="one attack per performance output")
    p.add_argument("--samples", type=int, default=0, help="Monte-Carlo runs per row (0 = none)")
    p.add_argument("--horizon", type=int, default=20000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="processes for the Monte-Carlo runs")
    p.add_argument("--out", help="CSV table")
    p.add_argument("--trajectories", help="CSV with one sampled (w, w_hat) trajectory")
    p.set_defaults(func=cmd_worst_case)

    p = sub.add_parser("bode", help="largest singular value per output")
    common(p)
    p.add_argument("--controller")
    p.add_argument("--grid", help="N or lo,hi,N (default 400 points on [1e-3, pi])")
    p.add_argument("--out", default="-", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("simulate", help="simulate the closed loop")
    common(p)
    p.add_argument("--controller")
    p.add_argument("--policy", choices=("nominal", "worst-case"), default="nominal")
    p.add_argument("--horizon", type=int, default=20000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV trajectory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench-turbine", help="H2 vs DR design on the turbine model")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--scaled", action="store_true", help="only the scaled-output design")
    p.add_argument("--plant", help="problem file replacing the shipped stand-in")
    p.add_argument("--grid", help="Bode grid, N or lo,hi,N")
    p.add_argument("--outdir", default="bench_turbine_out")
    p.set_defaults(func=cmd_bench_turbine)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Infeasible, UnstableSystem) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, IllConditioned, NotPsd, NotPd) as exc:
        print(f"solver trouble: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DrlmiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
