"""Command-line interface.

Subcommands: ``preprocess`` (event CSV to panel windows), ``simulate-scenario``,
``fit`` (margins then the mixture sampler), ``predict`` and ``report``.
Every run is seeded from one root seed, which is recorded in its outputs.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import vine as vn
from .dataio import (
    ConfigError,
    LoadError,
    TraceNotFoundError,
    build_windows,
    cluster_count_bins,
    cluster_table,
    coefficient_table,
    histogram_bins,
    load_config,
    load_events,
    load_panel,
    panel_arrays,
    read_trace,
    write_csv,
    write_json,
    write_panel,
    write_trace,
)
from .estimator import build_model
from .margins import SUMMARY_ROWS, BetaMarginals, to_udata
from .sampler import Dataset, SamplerError, predictive_sample, run_chain
from .scenarios import DESK_SCALE, FULL_SCALE, get_scenario, run_scenario

EXIT_CODES = {"input": 3, "config": 4, "sampler": 5, "data": 6}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _out_dir(args, default):
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(root, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(root).spawn(n)]


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args):
    events = load_events(args.input)
    records = build_windows(events, width=args.width)
    out = _out_dir(args, ".")
    path = write_panel(out / "panel.csv", records)
    print(f"{len(records)} windows written to {path}")


def cmd_simulate_scenario(args):
    scale = dict(FULL_SCALE if args.full_scale else DESK_SCALE)
    for key, val in (("n_replicates", args.replicates), ("n_iter", args.iters), ("burn_in", args.burnin)):
        if val is not None:
            scale[key] = val
    try:
        spec = get_scenario(args.id, args.variant, n_replicates=scale["n_replicates"],
                            **({"n_obs": args.n_obs} if args.n_obs else {}))
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    out = _out_dir(args, f"scenario_{args.id}")
    report = run_scenario(
        spec, n_iter=scale["n_iter"], burn_in=scale["burn_in"], thin=args.thin or 1, seed=args.seed,
        out_dir=out, n_predictive=args.n_predictive, n_truth=args.n_predictive,
        coef_prior_sd=args.coef_prior_sd, n_jobs=args.jobs,
    )
    write_json(out / "run.json", {
        "scenario": spec.name, "seed": args.seed, "n_replicates": spec.n_replicates,
        "n_iter": scale["n_iter"], "burn_in": scale["burn_in"], "thin": args.thin or 1,
        "coef_prior_sd": args.coef_prior_sd, "n_predictive": args.n_predictive,
    })
    counts = report.modal_counts
    print(f"scenario {spec.name}: modal cluster counts {counts.tolist()}")
    if report.mean_ari is not None:
        print(f"mean adjusted Rand index {report.mean_ari:.3f}")
    print(f"max tau discrepancy per replicate {[round(v, 3) for v in report.column('max_tau_diff')]}")


def _header_model(head):
    cfg = head["config"]
    return build_model(cfg["dim"], cfg["n_covariates"], cfg["vine"], cfg["families"], cfg["links"],
                       cfg["calibration"], cfg["covariate_models"], cfg["coef_prior_mean"], cfg["coef_prior_sd"],
                       covariate_priors=head["covariate_priors"])


def _write_tables(out, trace, head):
    spec = vn.VineSpec(head["config"]["vine"], head["config"]["dim"], head["config"]["families"])
    labels = [e.label for e in spec.edges]
    paths = []
    if head.get("margins"):
        table = head["margins"]
        # a1, b1, a2, ... regardless of the key order the header was stored in
        cols = sorted(table, key=lambda c: (int(c[1:]), c[0]))
        paths.append(write_csv(out / "summary_margins.csv", ["statistic", *cols],
                               [[s, *(table[c][s] for c in cols)] for s in SUMMARY_ROWS]))
    if len(trace):
        paths.append(write_csv(out / "summary_coefficients.csv", *coefficient_table(trace, labels)))
        for j, name in enumerate(head.get("phi_names", [])):
            paths.append(write_csv(out / f"summary_{name}.csv", *cluster_table(trace, name, head["phi_names"])))
        paths.append(write_csv(out / "summary_weights.csv", *cluster_table(trace, "weight")))
        paths.append(write_json(out / "cluster_counts.json", cluster_count_bins(trace)))
    return paths


def cmd_fit(args):
    cfg = load_config(args.config, seed=args.seed, n_iter=args.iters, burn_in=args.burnin, thin=args.thin,
                      input=args.input, out_dir=args.out_dir)
    if cfg.input is None:
        raise CliError("config", "no input panel given (use --input or the config key 'input')")
    records = load_panel(cfg.input)
    if not records:
        raise CliError("input", f"{cfg.input} contains no records")
    Y, X = panel_arrays(records, cfg.damage_threshold)
    if Y.shape[1] != cfg.dim:
        raise CliError("config", f"panel has {Y.shape[1]} responses per row but config dim is {cfg.dim}")
    if cfg.n_covariates == 0:
        X = np.zeros((len(Y), 0))
    elif cfg.n_covariates != 1:
        raise CliError("config", "panel data provide exactly one covariate (the disaster indicator)")
    margin_seed, chain_seed = _seeds(cfg.seed, 2)
    margins_table = None
    if cfg.margin_mode == "beta":
        margins = BetaMarginals(n_iter=cfg.margin_iter, burn_in=cfg.margin_burn_in, random_state=margin_seed)
        try:
            margins.fit(Y)
        except ValueError as exc:
            raise CliError("input", f"Beta margins need responses strictly inside (0, 1): {exc}") from None
        U = margins.transform(Y)
        margins_table = margins.summary()
    else:
        U = to_udata(Y, cfg.margin_mode)
    data = Dataset(U, X)
    model = build_model(cfg.dim, cfg.n_covariates, cfg.vine, cfg.families, cfg.links, cfg.calibration,
                        cfg.covariate_models, cfg.coef_mean_array(), cfg.coef_prior_sd, data.x)
    dp = cfg.dp_config()
    dp.seed = chain_seed
    trace = run_chain(data, model, dp)
    out = _out_dir(args, cfg.out_dir or "fit_output")
    head = {
        "config": cfg.to_dict(),
        "chain_seed": chain_seed,
        "margin_seed": margin_seed,
        "covariate_priors": [c.to_dict() for c in model.g0.covariates],
        "phi_names": model.g0.phi_names(),
        "margins": margins_table,
    }
    write_trace(out / "trace.ndjson", trace, head)
    ucols = [f"u{j + 1}" for j in range(cfg.dim)]
    write_csv(out / "udata.csv", ["country", "period", *ucols, "x"],
              [[r.country, r.period, *U[i], *(X[i] if X.shape[1] else [None])] for i, r in enumerate(records)])
    est = trace.point_estimate()
    write_csv(out / "labels.csv", ["country", "period", "cluster"],
              [[r.country, r.period, int(est[i])] for i, r in enumerate(records)])
    _write_tables(out, trace, head)
    print(f"{len(records)} records, modal cluster count {trace.modal_n()}; outputs in {out}")


def cmd_predict(args):
    trace, head = read_trace(args.trace)
    if not len(trace):
        raise CliError("input", f"{args.trace} has no kept iterations")
    model = _header_model(head)
    U, X = predictive_sample(trace, model, args.n_draws, np.random.default_rng(args.seed))
    out = _out_dir(args, Path(args.trace).parent)
    cols = [f"u{j + 1}" for j in range(U.shape[1])] + [f"x{h + 1}" for h in range(X.shape[1])]
    write_csv(out / "predictive.csv", cols, np.column_stack([U, X]).tolist())
    write_json(out / "predictive_hist.json", {"seed": args.seed, **histogram_bins(U, args.bins)})
    print(f"{args.n_draws} predictive draws written to {out}")


def cmd_report(args):
    trace, head = read_trace(args.trace)
    out = _out_dir(args, Path(args.trace).parent)
    paths = _write_tables(out, trace, head)
    print("\n".join(str(p) for p in paths))


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="dpmvine", description="Dirichlet-process mixtures of conditional vine copulas")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out-dir", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="root seed (default 0)")

    def chain(sp):
        sp.add_argument("--iters", type=int, help="total sweeps")
        sp.add_argument("--burnin", type=int, help="burn-in sweeps")
        sp.add_argument("--thin", type=int, help="keep every k-th sweep after burn-in")

    sp = sub.add_parser("preprocess", help="build panel windows from an event CSV")
    sp.add_argument("--input", required=True, help="CSV with header country,year,value,damage")
    sp.add_argument("--width", type=int, default=4, help="window length in years")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("simulate-scenario", help="run a simulation scenario end to end")
    sp.add_argument("--id", required=True, help="scenario id 1-5 (or e.g. 3b)")
    sp.add_argument("--variant", default="a", help="a or b for scenarios 2-5")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--n-obs", type=int, help="sample size per replicate (default 100)")
    sp.add_argument("--n-predictive", type=int, default=5000)
    sp.add_argument("--coef-prior-sd", type=float, default=1.0)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--full-scale", action="store_true", help="100 replicates x 5000 sweeps, burn-in 1000")
    chain(sp)
    common(sp)
    sp.set_defaults(func=cmd_simulate_scenario)

    sp = sub.add_parser("fit", help="fit margins and the mixture to a panel CSV")
    sp.add_argument("--config", help="JSON run configuration")
    sp.add_argument("--input", help="panel CSV (overrides the config)")
    sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
    sp.add_argument("--out-dir", help="output directory")
    chain(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="posterior predictive draws from a saved trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--n-draws", type=int, default=5000)
    sp.add_argument("--bins", type=int, default=20)
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("report", help="summary tables from a saved trace")
    sp.add_argument("--trace", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except TraceNotFoundError as exc:
        category, msg = "input", str(exc)
    except (LoadError, FileNotFoundError) as exc:
        category, msg = "input", str(exc)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except SamplerError as exc:
        category, msg = "sampler", str(exc)
    except ValueError as exc:
        category, msg = "data", str(exc)
    else:
        return 0
    print(f"error [{category}]: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
