"""Command-line entry point: ``mimopower {scenario,solve,benchmark,sweep}``.

Exit codes: 0 on success, 2 on invalid configuration or arguments, 3 when
an optimizer aborts on a numerical check.  Every output file carries the
hash of the effective configuration.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .config import OUT_DIR_ENV, default_config, load_config, with_overrides
from .evaluation import (
    MethodSettings,
    antenna_sweep,
    mc_ergodic,
    rate_cdf,
    run_grid,
    scenario_seeds,
)
from .network import generate_scenario
from .pilots import make_pilots
from .power_control import NumericalAbort, algorithm1, algorithm2, write_trace_csv
from .rates import det_coeffs, det_rate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
QUANTILES = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


def _settings(cfg):
    s = cfg.solver
    return MethodSettings(s.eps1, s.max_iter1, s.eps2, s.max_iter2, s.tau, cfg.schedule)


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows, cfg):
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _fmt(x):
    return repr(float(x))


def _out_dir(cfg):
    d = cfg.output_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _setup(cfg):
    scen = generate_scenario(cfg.scenario)
    seed = cfg.scenario.seed if cfg.pilots.seed is None else cfg.pilots.seed
    book = make_pilots(cfg.pilot_kind, cfg.pilots.length, scen, seed=seed, path=cfg.pilots.path)
    return scen, book


def cmd_scenario(cfg, args):
    scen = generate_scenario(cfg.scenario)
    out = _out_dir(cfg)
    d = scen.to_dict()
    d["config_hash"] = cfg.config_hash()
    _write_json(out / "scenario.json", d)
    print(f"wrote {out / 'scenario.json'} ({scen.num_users} users, {scen.num_cells} cells)")
    return EXIT_OK


def cmd_solve(cfg, args):
    scen, book = _setup(cfg)
    coeffs = det_coeffs(book, scen)
    letter = cfg.method_letter
    s = cfg.solver
    trace = []
    info = {}
    if letter == "D":
        st, trace = algorithm1(coeffs, eps1=s.eps1, max_iter=s.max_iter1)
        p = st.p
        info = {"iterations": st.iterations, "converged": bool(st.converged)}
    elif letter == "S":
        st, trace = algorithm2(scen, book, schedule=cfg.schedule, tau=s.tau, eps2=s.eps2,
                               max_iter=s.max_iter2, seed=cfg.scenario.seed)
        p = st.p
        info = {"iterations": st.t, "converged": bool(st.converged)}
    else:
        p = np.full(scen.num_users, scen.pmax)
        info = {"iterations": 0, "converged": True}

    out = _out_dir(cfg)
    h = cfg.config_hash()
    _write_json(out / "power.json", {
        "config_hash": h, "method": cfg.method, "pilots": cfg.pilot_kind.value,
        "power_w": [float(x) for x in p],
    })
    write_trace_csv(out / "trace.csv", trace, comment=f"config_hash={h}", timing=not args.no_timing)
    rdet = det_rate(p, coeffs)
    summary = {
        "config_hash": h, "config": cfg.to_dict(), "method": cfg.method, **info,
        "det_sum_rate_bits": float(rdet.sum()),
        "det_rate_bits": [float(x) for x in rdet],
    }
    if cfg.evaluation.draws and not args.no_eval:
        est = mc_ergodic(p, scen, book, cfg.evaluation.draws, seed=cfg.master_seed,
                         threads=cfg.evaluation.threads)
        summary.update({
            "ergodic_sum_rate_bits": est.sum_rate,
            "ergodic_sum_rate_stderr": float(np.sqrt(np.sum(est.stderr**2))),
            "draws": est.n_draws, "stream_id": est.stream_id,
        })
    _write_json(out / "summary.json", summary)
    print(f"{cfg.method}: {info['iterations']} iterations, deterministic sum rate "
          f"{rdet.sum():.4f} bits -> {out}")
    return EXIT_OK


def cmd_benchmark(cfg, args):
    ev = cfg.evaluation
    seeds = scenario_seeds(cfg.master_seed, ev.num_seeds)
    res = run_grid(cfg.scenario, ev.labels, seeds, cfg.pilots.length, ev.draws, cfg.master_seed,
                   _settings(cfg), threads=ev.threads, external_path=cfg.pilots.path)
    out = _out_dir(cfg)
    cols = ["seed", "label", "cell", "user", "power_w", "det_rate", "ergodic_mean", "ergodic_se"]
    _write_csv(out / "results.csv", cols,
               [[r[c] if c in ("seed", "label", "cell", "user") else _fmt(r[c]) for c in cols]
                for r in res.records], cfg)

    samples = {}
    for lab in res.labels:
        if ev.cdf_over == "cell":
            samples[lab] = res.cell_sums[lab].ravel()
        else:
            samples[lab] = np.array([r["ergodic_mean"] for r in res.records if r["label"] == lab])
    cdf_rows = []
    for lab in res.labels:
        c = rate_cdf(samples[lab])
        cdf_rows += [[lab, _fmt(v), _fmt(q)] for v, q in zip(c.values, c.probs)]
    _write_csv(out / "cdf.csv", ["label", "rate_bits", "cdf"], cdf_rows, cfg)

    methods = {}
    for lab in res.labels:
        c = rate_cdf(samples[lab])
        methods[lab] = {
            "median": c.median,
            "percentiles": {f"p{int(round(100 * q))}": c.quantile(q) for q in QUANTILES},
            "mean_network_sum_rate": float(res.network_sums[lab].mean()),
        }
    summary = {
        "config_hash": cfg.config_hash(), "config": cfg.to_dict(), "seeds": seeds,
        "cdf_over": ev.cdf_over, "methods": methods,
        "stream_ids": {str(k): v for k, v in res.stream_ids.items()},
    }
    if "D-N" in methods and "S-O" in methods:
        a, b = methods["D-N"]["median"], methods["S-O"]["median"]
        summary["median_improvement_DN_over_SO_pct"] = 100.0 * (a - b) / b
    _write_json(out / "summary.json", summary)
    for lab, m in methods.items():
        print(f"{lab}: median {m['median']:.4f} bits")
    return EXIT_OK


def cmd_sweep(cfg, args):
    ev = cfg.evaluation
    rows = antenna_sweep(cfg.scenario, ev.antennas, ev.labels, cfg.pilots.length, ev.draws,
                         cfg.master_seed, _settings(cfg))
    out = _out_dir(cfg)
    _write_csv(out / "sweep.csv", ["antennas", *ev.labels],
               [[r["antennas"], *(_fmt(r[lab]) for lab in ev.labels)] for r in rows], cfg)
    for r in rows:
        print(r["antennas"], " ".join(f"{lab}={r[lab]:.3f}" for lab in ev.labels))
    return EXIT_OK


COMMANDS = {"scenario": cmd_scenario, "solve": cmd_solve, "benchmark": cmd_benchmark, "sweep": cmd_sweep}


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (default: shipped 7-cell setup)")
    common.add_argument("--seed", type=int, help="scenario seed")
    common.add_argument("--master-seed", type=int, help="seed for scenario seeds and MC draws")
    common.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or ./results)")
    common.add_argument("--method", help="deterministic | stochastic | equal")
    common.add_argument("--pilots", help="orthogonal | random | nonorthogonal | external")
    common.add_argument("--draws", type=int, help="Monte Carlo draws per evaluation")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--max-iter", type=int, help="iteration cap for the optimizers")
    common.add_argument("--num-seeds", type=int, help="scenario seeds for benchmark/sweep")
    common.add_argument("--labels", type=_csv_list(str), help="grid labels, e.g. D-N,E-O")
    common.add_argument("--antennas", type=_csv_list(int), help="antenna counts for sweep, e.g. 32,64,96")
    common.add_argument("--no-timing", action="store_true", help="write 0 in the wall_ms trace column")
    common.add_argument("--no-eval", action="store_true", help="solve: skip the Monte Carlo evaluation")

    p = argparse.ArgumentParser(prog="mimopower", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("scenario", parents=[common], help="generate a scenario and write it as JSON")
    sub.add_parser("solve", parents=[common], help="run one power-control method")
    sub.add_parser("benchmark", parents=[common], help="method x pilot grid over scenario seeds")
    sub.add_parser("sweep", parents=[common], help="sum rate versus number of antennas")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = with_overrides(cfg, seed=args.seed, master_seed=args.master_seed, out_dir=args.out_dir,
                             method=args.method, pilots=args.pilots, draws=args.draws,
                             threads=args.threads, max_iter=args.max_iter, num_seeds=args.num_seeds,
                             labels=args.labels, antennas=args.antennas)
        return COMMANDS[args.command](cfg, args)
    except NumericalAbort as e:
        print(f"error: numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
