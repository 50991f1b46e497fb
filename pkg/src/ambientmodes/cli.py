"""Command-line pipeline: build models, simulate, estimate, analyze, run cases.

Every command writes a manifest next to its outputs; all randomness flows
from --seed.  Exit codes: 0 success, 1 domain error (with a JSON error
record on stderr), 2 usage error.
"""

import argparse
import json
import os
import sys
import numpy as np
from dataclasses import replace
from pathlib import Path

from . import fileio
from .errors import AmbientModesError
from .estimate import EstimatorConfig, compute_stats, estimate_state_matrix
from .fixtures import DEFAULT_SEEDS, FIXTURE_NAMES, build_fixture, run_case
from .linearize import FULL, REFERENCE_REDUCED, is_hurwitz, linearize, state_labels
from .modal import eigen_modes, match_modes
from .network import solve_equilibrium
from .simulate import NoiseSpec, SimConfig, add_measurement_noise, simulate_nonlinear

OUTDIR_ENV = "AMBIENTMODES_OUTDIR"


def _out_path(arg, default_name):
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTDIR_ENV, ".")) / default_name


def _manifest(args, command, inputs, out, overrides, seed=None):
    manifest = fileio.RunManifest(
        command=command,
        inputs=tuple(str(p) for p in inputs),
        overrides=overrides,
        output_dir=str(Path(out).resolve().parent),
        seed=seed,
    )
    fileio.write_manifest(manifest, out)


def _emit(args, doc, human_lines):
    if args.json:
        print(json.dumps(doc, indent=2, default=fileio._json_default))
    else:
        for line in human_lines:
            print(line)


def cmd_model(args):
    if args.action == "build":
        fixture = build_fixture(args.fixture)
        out = _out_path(args.output, f"{args.fixture}.json")
        fileio.save_model(fixture.model, out)
        _manifest(args, "model build", [], out, {"fixture": args.fixture})
        _emit(args, {"model": str(out), "hash": fileio.model_hash(fixture.model),
                     "notes": fixture.notes},
              [f"wrote {out} ({fixture.notes})"])
        return 0

    model = fileio.load_model(args.model)
    point = solve_equilibrium(model)
    ss = linearize(model, reduced=True)
    modes = eigen_modes(ss.a_c, ss.state_labels)
    hurwitz = is_hurwitz(ss.a_c)
    doc = {
        "model": str(args.model),
        "hash": fileio.model_hash(model),
        "n_gen": model.n_gen,
        "n_vsc": model.n_vsc,
        "equilibrium_p_e": point.p_e0.tolist(),
        "hurwitz_reduced": hurwitz,
        "modes": [{"freq_hz": m.freq, "damping_pct": 100 * m.damping}
                  for m in modes.modes],
    }
    lines = [f"{args.model}: {model.n_gen} machines, {model.n_vsc} converters, "
             f"reduced closed loop {'Hurwitz' if hurwitz else 'NOT Hurwitz'}"]
    lines += [f"  mode {i + 1}: {m.freq:7.4f} Hz  zeta {100 * m.damping:6.3f} %"
              for i, m in enumerate(modes.modes)]
    _emit(args, doc, lines)
    return 0


def cmd_simulate(args):
    model = fileio.load_model(args.model)
    if args.sigma is not None:
        machines = replace(model.machines, sigma=np.full(model.n_gen, args.sigma))
        model = replace(model, machines=machines)
    cfg = SimConfig(dt=args.dt, duration=args.duration, seed=args.seed,
                    burn_in=args.burn_in, sub_steps=args.sub_steps,
                    method=args.method)
    traj = simulate_nonlinear(model, cfg, load_noise=args.load_noise)
    if args.noise_std_delta or args.noise_std_omega:
        traj = add_measurement_noise(
            traj, NoiseSpec(args.noise_std_delta, args.noise_std_omega, seed=args.seed))
    out = _out_path(args.output, "trajectory.csv")
    fileio.save_trajectory(traj, out, meta={
        "seed": args.seed, "model_hash": fileio.model_hash(model),
        "sigma": args.sigma, "method": args.method, "sub_steps": args.sub_steps,
    })
    overrides = {"duration": args.duration, "dt": args.dt, "sigma": args.sigma,
                 "method": args.method, "sub_steps": args.sub_steps}
    _manifest(args, "simulate", [args.model], out, overrides, seed=args.seed)
    _emit(args, {"trajectory": str(out), "n_samples": traj.n_samples},
          [f"wrote {out} ({traj.n_samples} samples at {1 / args.dt:.0f} Hz)"])
    return 0


def cmd_estimate(args):
    traj, _ = fileio.load_trajectory(args.traj)
    coords = REFERENCE_REDUCED if args.coords == "reduced" else FULL
    cfg = EstimatorConfig(tau_steps=args.tau, ridge=args.ridge, coords=coords,
                          ref_machine=args.ref, detrend=args.detrend)
    stats = compute_stats(traj, cfg)
    result = estimate_state_matrix(stats, cfg)
    n_w = traj.omega.shape[1]
    labels = state_labels(n_w, ref=args.ref if coords == REFERENCE_REDUCED else None)
    out = _out_path(args.output, "ahat.csv")
    fileio.save_matrix(result.a_hat, out, labels=labels)
    fileio.save_json(result.diagnostics, out.parent / (out.stem + ".json"))
    _manifest(args, "estimate", [args.traj], out,
              {"tau": args.tau, "ridge": args.ridge, "coords": args.coords})
    _emit(args, {"a_hat": str(out), **result.diagnostics},
          [f"wrote {out}",
           f"  cond(C) {result.diagnostics['cond_c']:.3e}  "
           f"spectral radius {result.diagnostics['spectral_radius']:.6f}  "
           f"imag residual {result.diagnostics['imag_residual']:.2e}"])
    return 0


def _mode_lines(modes):
    lines = [f"{'mode':>4} {'f (Hz)':>9} {'zeta (%)':>9}"]
    for i, m in enumerate(modes.modes):
        lines.append(f"{i + 1:>4} {m.freq:9.4f} {100 * m.damping:9.3f}")
    if modes.real_eigenvalues is not None and len(modes.real_eigenvalues):
        lines.append("real eigenvalues: "
                     + ", ".join(f"{x:.4f}" for x in modes.real_eigenvalues))
    return lines


def cmd_modes(args):
    a, labels = fileio.load_matrix(args.matrix)
    modes = eigen_modes(a, labels)
    doc = {"modes": [{"freq_hz": m.freq, "damping_pct": 100 * m.damping,
                      "lambda": [m.lam.real, m.lam.imag]} for m in modes.modes],
           "real_eigenvalues": list(modes.real_eigenvalues)}
    lines = _mode_lines(modes)
    if args.output:
        out = Path(args.output)
        _write_mode_details(modes, out)
        _manifest(args, "modes", [args.matrix], out, {})
        lines.append(f"wrote {out}")
        doc["details"] = str(out)
    _emit(args, doc, lines)
    return 0


def _write_mode_details(modes, out):
    """Shape and participation vectors in one wide CSV for external plotting."""
    import csv as _csv
    n_shape = len(modes.modes[0].shape) if modes.modes else 0
    n_part = len(modes.modes[0].participation) if modes.modes else 0
    header = (["mode", "f_hz", "zeta_pct", "lambda_re", "lambda_im"]
              + [f"shape_mag_{k + 1}" for k in range(n_shape)]
              + [f"shape_deg_{k + 1}" for k in range(n_shape)]
              + [f"participation_{k + 1}" for k in range(n_part)])
    with out.open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(header)
        for i, m in enumerate(modes.modes):
            writer.writerow(
                [i + 1, f"{m.freq:.6f}", f"{100 * m.damping:.6f}",
                 f"{m.lam.real:.9g}", f"{m.lam.imag:.9g}"]
                + [f"{abs(z):.6f}" for z in m.shape]
                + [f"{np.degrees(np.angle(z)):.3f}" for z in m.shape]
                + [f"{p:.6f}" for p in m.participation])


def cmd_compare(args):
    model = fileio.load_model(args.truth)
    truth_ss = linearize(model, ref=args.ref, reduced=True)
    truth = eigen_modes(truth_ss.a_c, truth_ss.state_labels)
    a_hat, labels = fileio.load_matrix(args.est)
    est = eigen_modes(a_hat, labels or truth_ss.state_labels, source="estimated")
    matching = match_modes(truth, est)

    rows = [{
        "mode": i + 1,
        "f_a": p.truth.freq, "f_e": p.est.freq, "f_error_pct": p.freq_error_pct,
        "zeta_a": 100 * p.truth.damping, "zeta_e": 100 * p.est.damping,
        "zeta_error_pct": p.damping_error_pct,
    } for i, p in enumerate(matching.pairs)]

    out = _out_path(args.output, "mode_table.csv") if args.output else None
    if out:
        import csv as _csv
        with Path(out).open("w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else
                                     ["mode", "f_a", "f_e", "f_error_pct",
                                      "zeta_a", "zeta_e", "zeta_error_pct"])
            writer.writeheader()
            writer.writerows(rows)
        _manifest(args, "compare", [args.truth, args.est], out, {})

    lines = [f"{'mode':>4} {'f_a':>8} {'f_e':>8} {'err%':>7} "
             f"{'zeta_a%':>8} {'zeta_e%':>8} {'err%':>7}"]
    for r in rows:
        lines.append(f"{r['mode']:>4} {r['f_a']:8.4f} {r['f_e']:8.4f} "
                     f"{r['f_error_pct']:+7.2f} {r['zeta_a']:8.3f} "
                     f"{r['zeta_e']:8.3f} {r['zeta_error_pct']:+7.2f}")
    if matching.unmatched_truth:
        lines.append(f"unmatched true modes: "
                     + ", ".join(f"{m.freq:.3f} Hz" for m in matching.unmatched_truth))
    if out:
        lines.append(f"wrote {out}")
    _emit(args, {"rows": rows,
                 "unmatched_truth": [m.freq for m in matching.unmatched_truth],
                 "unmatched_est": [m.freq for m in matching.unmatched_est],
                 "table": str(out) if out else None}, lines)
    return 0


def cmd_case(args):
    fixture = build_fixture(args.fixture)
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else DEFAULT_SEEDS
    sim_cfg = SimConfig(dt=args.dt, duration=args.duration, seed=seeds[0],
                        burn_in=args.burn_in)
    noise = NoiseSpec(args.noise_std_delta, args.noise_std_omega)
    report = run_case(fixture, args.case, seeds=seeds, sim_cfg=sim_cfg,
                      noise_spec=noise)
    out = _out_path(args.output, f"case_{args.case}_{args.fixture}.json")
    fileio.save_json(report.to_dict(), out)
    table_path = out.parent / (out.stem + "_modes.csv")
    _write_case_table(report, table_path)
    _manifest(args, f"case {args.case}", [], out,
              {"fixture": args.fixture, "duration": args.duration, "dt": args.dt},
              seed=seeds[0])

    lines = [f"case {report.case_id} on {report.fixture} (seeds {seeds[0]}..{seeds[-1]})"]
    for r in report.mode_table:
        lines.append(f"  mode {r['mode']}: f_a={r['f_a']:.4f} Hz  "
                     f"med f err {r['freq_error_median_pct']:.2f}%  "
                     f"zeta_a={100 * r['zeta_a']:.2f}%  "
                     f"med zeta err {r['zeta_error_median_pct']:.2f}%")
    for c in report.checks:
        status = "PASS" if c["passed"] else "FAIL"
        lines.append(f"  [{status}] {c['name']}: {c['value']:.4g} {c['op']} {c['threshold']:g}")
    lines.append(f"wrote {out} and {table_path}")
    _emit(args, report.to_dict(), lines)
    return 0


def _write_case_table(report, path):
    import csv as _csv
    fields = ["mode", "f_a", "f_e_median", "freq_error_median_pct",
              "zeta_a", "zeta_e_median", "zeta_error_median_pct"]
    with Path(path).open("w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows([{k: row[k] for k in fields} for row in report.mode_table])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ambientmodes",
        description="Small-signal models of converter-integrated grids and "
                    "measurement-based recovery of their state matrix and modes.",
    )
    parser.add_argument("--json", action="store_true",
                        help="structured output instead of human tables")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="build fixture model files or check a model")
    p.add_argument("action", choices=["build", "check"])
    p.add_argument("--fixture", choices=FIXTURE_NAMES, help="fixture name (build)")
    p.add_argument("--model", help="model file to check")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", help="ambient stochastic simulation to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--burn-in", type=float, default=20.0)
    p.add_argument("--sigma", type=float, default=None,
                   help="override all machine fluctuation intensities")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--sub-steps", type=int, default=5)
    p.add_argument("--method", choices=["heun", "euler"], default="heun")
    p.add_argument("--load-noise", choices=["additive", "multiplicative"],
                   default="additive")
    p.add_argument("--noise-std-delta", type=float, default=0.0,
                   help="measurement noise on angles, rad")
    p.add_argument("--noise-std-omega", type=float, default=0.0,
                   help="measurement noise on speeds, pu")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="recover the state matrix from a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--coords", choices=["reduced", "full"], default="reduced")
    p.add_argument("--ref", type=int, default=0, help="reference machine index")
    p.add_argument("--detrend", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("modes", help="modal analysis of a state matrix CSV")
    p.add_argument("--matrix", required=True)
    p.add_argument("-o", "--output",
                   help="write shape/participation vectors per mode to CSV")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("compare", help="truth-vs-estimate mode table")
    p.add_argument("--truth", required=True, help="model file")
    p.add_argument("--est", required=True, help="estimated matrix CSV")
    p.add_argument("--ref", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("case", help="run a scripted experiment case")
    p.add_argument("case", choices=["I", "II", "noise"])
    p.add_argument("--fixture", choices=FIXTURE_NAMES, default="ninebus_1vsc")
    p.add_argument("--seeds", help="comma-separated seed list (default 1..10)")
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--burn-in", type=float, default=20.0)
    p.add_argument("--noise-std-delta", type=float, default=1e-3)
    p.add_argument("--noise-std-omega", type=float, default=1e-6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_case)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "model":
        if args.action == "build" and not args.fixture:
            parser.error("model build requires --fixture")
        if args.action == "check" and not args.model:
            parser.error("model check requires --model")
    try:
        return args.func(args)
    except (AmbientModesError, ValueError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
