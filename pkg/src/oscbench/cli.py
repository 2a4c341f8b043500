"""Command-line entry points.

One executable, subcommand per workflow: build overlap tables, scan a
frequency vector for near-resonances, rerun the combinatorial lemma
checks, run a Birkhoff normalization, integrate a trajectory, run the
whole pipeline, or render plots from a finished run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    for field in ("J", "r", "k", "seed", "gamma", "delta", "dt", "T", "out_dir"):
        v = getattr(args, field, None)
        if v is not None:
            setattr(cfg, field, v)
    if getattr(args, "eps", None):
        cfg.eps_list = list(args.eps)
    cfg.validate()
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--J", type=int, default=None, help="number of modes")
    p.add_argument("--r", type=int, default=None, help="normalization order")
    p.add_argument("--k", type=int, default=None, help="multiplier decay power")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None, help="nonresonance level")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)


def cmd_overlap(args) -> int:
    from .basis import build_overlap_table, cached_overlap_table

    if args.out:
        table = build_overlap_table(args.k, args.J)
        table.save_csv(args.out)
        path = Path(args.out)
    else:
        table = cached_overlap_table(args.k, args.J, cache_dir=args.cache_dir)
        from .basis import default_cache_dir
        path = (Path(args.cache_dir) if args.cache_dir else default_cache_dir()) \
            / f"overlap_k{args.k}_J{args.J}_v1.csv"
    print(f"{len(table.entries)} nonzero overlaps (k={args.k}, J={args.J}) -> {path}")
    return 0


def cmd_resonance(args) -> int:
    from .frequencies import FrequencyVector, sample_multiplier, scan_nonresonance

    if args.m0:
        freq = FrequencyVector.unperturbed(args.J)
    else:
        freq = FrequencyVector.from_sample(sample_multiplier(args.k, args.J, args.seed))
    scan = scan_nonresonance(freq, r=args.r, J=args.J,
                             gamma=args.gamma or 0.0, delta=args.delta)
    print(f"scanned {scan.n_scanned} index combinations "
          f"({scan.n_structural} structural zeros)")
    print(f"admissible gamma*: {scan.admissible_gamma:.6g}")
    if scan.argmin is not None:
        a = scan.argmin
        print(f"tightest divisor: plus={a.plus} minus={a.minus} "
              f"|Omega|={a.value:.6g} mu={a.mu:g}")
    for v in scan.violations[:20]:
        print(f"VIOLATION plus={v.plus} minus={v.minus} |Omega|={v.value:.6g}")
    if len(scan.violations) > 20:
        print(f"... and {len(scan.violations) - 20} more")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump({
                "n_scanned": scan.n_scanned,
                "n_structural": scan.n_structural,
                "admissible_gamma": scan.admissible_gamma,
                "violations": [
                    {"plus": list(v.plus), "minus": list(v.minus), "omega": v.value}
                    for v in scan.violations
                ],
            }, fh, indent=2)
    return 1 if scan.violations else 0


def cmd_verify_combinatorics(args) -> int:
    from .tuples import verify_A_lemmas

    report = verify_A_lemmas(j_bound=args.j_bound, pair_bound=args.pair_bound,
                             samples=args.samples, seed=args.seed)
    print(f"sup l*A(j1,l)/j1         = {report.sup_l_times_a:.6f} "
          f"at {report.arg_l_times_a}  (bound 2)")
    print(f"sup A / majorant         = {report.sup_a_over_majorant:.6f}  (bound 1)")
    print(f"sup A^2 A^2 / A          = {report.sup_product:.6f} "
          f"at {report.arg_product}")
    print(f"sup mu-product ratio     = {report.sup_mu_product:.6f} "
          f"at {report.arg_mu_product}")
    for name, sup in sorted(report.sample_sups.items()):
        print(f"sampled {name:<22} = {sup:.6f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump({
                "sup_l_times_a": report.sup_l_times_a,
                "sup_a_over_majorant": report.sup_a_over_majorant,
                "sup_product": report.sup_product,
                "sup_mu_product": report.sup_mu_product,
                "sample_sups": {str(k): v for k, v in report.sample_sups.items()},
                "j_bound": args.j_bound,
                "pair_bound": args.pair_bound,
            }, fh, indent=2)
    ok = report.sup_l_times_a <= 2.0 + 1e-12 and report.sup_a_over_majorant <= 1.0 + 1e-12
    return 0 if ok else 1


def cmd_verify(args) -> int:
    return args.verify_func(args)


def cmd_normalform(args) -> int:
    from .basis import cached_overlap_table
    from .frequencies import FrequencyVector, sample_multiplier, scan_nonresonance
    from .normal_form import birkhoff_iterate, save_result
    from .poly import expand_nonlinearity

    cfg = _load_config(args)
    freq = FrequencyVector.from_sample(sample_multiplier(cfg.k, cfg.J, cfg.seed))
    scan = scan_nonresonance(freq, r=cfg.r, J=cfg.J, gamma=cfg.gamma or 0.0,
                             delta=cfg.delta)
    if scan.violations:
        print(f"{len(scan.violations)} divisor violations; aborting", file=sys.stderr)
        return 1
    g = cfg.g_pairs()
    tables = {a: cached_overlap_table(a, cfg.J) for a in sorted({l + m for l, m in g})}
    P = expand_nonlinearity(g, cfg.J, cfg.r, tables=tables)
    result = birkhoff_iterate(freq, P, cfg.r, certificate=scan)
    out = Path(args.out or cfg.out_dir) / "normal_form"
    save_result(result, out)
    for k in sorted(result.residuals):
        print(f"degree {k}: residual {result.residuals[k]:.3e}, "
              f"min divisor {result.min_divisors[k]:.6g}, "
              f"{len(result.generators[k])} generator terms")
    print(f"terminal non-action mass: {result.terminal_nonaction:.3e}")
    print(f"written to {out}")
    return 0


def cmd_evolve(args) -> int:
    from .dynamics import evolve, low_mode_state, measure_action_drift
    from .frequencies import FrequencyVector, derive_seed, sample_multiplier

    cfg = _load_config(args)
    freq = FrequencyVector.from_sample(sample_multiplier(cfg.k, cfg.J, cfg.seed))
    eps = cfg.eps_list[0] if cfg.eps_list else 0.1
    z0 = low_mode_state(cfg.J, eps, s=cfg.s_list[0],
                        seed=derive_seed(cfg.seed, "init", 0))
    traj = evolve(z0, cfg.g_pairs(), freq, dt=cfg.dt, T=cfg.T,
                  scheme=args.scheme, s_list=tuple(cfg.s_list))
    drift = measure_action_drift(traj, cfg.s_list[0])
    de = float(abs(traj.energy - traj.energy[0]).max())
    dl2 = float(abs(traj.l2 - traj.l2[0]).max())
    print(f"eps={eps:g} T={cfg.T:g} dt={cfg.dt:g} scheme={traj.meta['scheme']}")
    print(f"max |H - H(0)|      = {de:.3e}")
    print(f"max |l2 - l2(0)|    = {dl2:.3e}")
    print(f"normalized drift    = {drift:.3e}")
    if args.out:
        import csv as _csv
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["t", "H", "l2", "drift"])
            ds = traj.drift_series(cfg.s_list[0])
            for i in range(traj.t.size):
                w.writerow(["%.17g" % traj.t[i], "%.17g" % traj.energy[i],
                            "%.17g" % traj.l2[i], "%.17g" % ds[i]])
        print(f"trajectory written to {path}")
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import StageError, run_pipeline

    cfg = _load_config(args)
    try:
        manifest = run_pipeline(cfg)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(f"pipeline finished; manifest fingerprint {manifest.fingerprint()}")
    print(f"artifacts under {cfg.out_dir}")
    if args.plots:
        from .pipeline import emit_plots
        for p in emit_plots(cfg.out_dir):
            print(f"plot: {p}")
    return 0


def cmd_plots(args) -> int:
    from .pipeline import emit_plots

    files = emit_plots(args.run)
    for p in files:
        print(f"plot: {p}")
    if not files:
        print("no plottable artifacts found", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscbench",
        description="spectral workbench for the perturbed quantum harmonic oscillator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("overlap", help="build or fetch a basis-overlap table")
    p.add_argument("--k", type=int, required=True, help="arity (3 or 4)")
    p.add_argument("--J", type=int, required=True, help="index cutoff")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", default=None, help="write the table here instead of the cache")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("resonance", help="scan small divisors for one frequency vector")
    p.add_argument("--J", type=int, default=20)
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m0", action="store_true", help="use the unperturbed frequencies")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--delta", type=float, default=4.0)
    p.add_argument("--out", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_resonance)

    p = sub.add_parser("verify", help="rerun standalone verification suites")
    vsub = p.add_subparsers(dest="verify_command", required=True)
    pv = vsub.add_parser("combinatorics", help="index-tuple inequality scan")
    pv.add_argument("--j-bound", type=int, default=120)
    pv.add_argument("--pair-bound", type=int, default=30)
    pv.add_argument("--samples", type=int, default=4000)
    pv.add_argument("--seed", type=int, default=2024)
    pv.add_argument("--out", default=None)
    pv.set_defaults(verify_func=cmd_verify_combinatorics)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("normalform", help="run the Birkhoff normalization once")
    _add_config_flags(p)
    p.add_argument("--out", default=None, help="output directory (default: config out_dir)")
    p.set_defaults(func=cmd_normalform)

    p = sub.add_parser("evolve", help="integrate one trajectory and print invariants")
    _add_config_flags(p)
    p.add_argument("--eps", type=float, nargs="*", default=None)
    p.add_argument("--scheme", choices=("auto", "strang", "rk4"), default="auto")
    p.add_argument("--out", default=None, help="write the trajectory CSV here")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("pipeline", help="run every stage for one config")
    _add_config_flags(p)
    p.add_argument("--eps", type=float, nargs="*", default=None)
    p.add_argument("--plots", action="store_true", help="render plots afterwards")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plots", help="render plots from a finished run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_plots)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
