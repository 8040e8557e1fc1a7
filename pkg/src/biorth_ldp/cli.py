"""Command-line experiment runner.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical errors.
Every run writes ``manifest.json`` last; it lists all produced files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analysis import (HalfSpaceEvent, PiecewiseCDF, bounded_lipschitz, ks_distance,
                       ldp_probe, quadrature_oracle, reference_measure, wasserstein1)
from .config import ExperimentConfig, load_config, reference_compatible
from .ensemble_model import AngelescoSpec
from .equilibrium import minimize_angelesco, solve_ensemble
from .errors import BiorthError, ConfigError, ContractError, DomainError, NumericalError
from .matrix_model import draw_boson_frequencies, write_draws_csv
from .references import reference_law
from .sampler import EmpiricalMeasure, empirical_measure, merge_batches, run_chains

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, cfg: ExperimentConfig, command: str, out_dir: str):
        self.cfg = cfg
        self.command = command
        self.out = out_dir
        self.files = []
        self.metrics = {}
        self.started = datetime.now(timezone.utc).isoformat()
        self.t0 = time.perf_counter()

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_table(self, name, header, columns):
        """Whitespace-separated plot data with a commented header."""
        with open(self.path(name), "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for row in zip(*columns):
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])

    def write_manifest(self):
        missing = [f for f in self.files if not os.path.exists(os.path.join(self.out, f))]
        if missing:
            raise NumericalError("manifest lists files that were not written", missing=missing)
        manifest = {
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "config": self.cfg.raw,
            "tool_version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": time.perf_counter() - self.t0,
            "files": sorted(self.files),
            "metrics": self.metrics,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _OutputLock:
    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise ConfigError(f"output directory is locked ({self.path}); another run owns it") from exc
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


# ----------------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------------

def _sample(cfg: ExperimentConfig, chains: int):
    batches = run_chains(cfg.ensemble, cfg.chain_config(), chains)
    return batches, merge_batches(batches)


def _solve(cfg: ExperimentConfig):
    spec = cfg.ensemble
    eq = cfg.equilibrium
    tol = float(eq["tolerance"])
    if isinstance(spec, AngelescoSpec):
        grid = eq["grid"]
        sizes = grid if isinstance(grid, list) else [int(grid)] * spec.p
        return minimize_angelesco(spec, sizes, tolerance=min(tol, 1e-12))
    if isinstance(eq["grid"], list):
        raise ConfigError("equilibrium.grid: a single integer is required for one species")
    return solve_ensemble(spec, int(eq["grid"]), cfg.truncate(), tol), None


def cmd_sample(cfg, run: Run, args):
    chains = args.chains if args.chains is not None else int(cfg.sampler["chains"])
    batches, pooled = _sample(cfg, chains)
    p = pooled.p
    for b in batches:
        rows = [list(x) + [ld] for x, ld in zip(b.configurations, b.log_density)]
        run.write_csv(f"chain_{b.seed[1]}.csv", [f"x{k}" for k in range(p)] + ["log_density"], rows)
    mu = empirical_measure(pooled)
    run.write_csv("pooled_measure.csv", ["atom", "mass"], zip(mu.atoms, mu.masses))
    report = {
        "ensemble": cfg.ensemble.to_dict(),
        "chain_config": cfg.chain_config().to_dict(),
        "seeds": [list(b.seed) for b in batches],
        "acceptance_rates": [b.acceptance_rate for b in batches],
        "step_sizes": [b.step_size for b in batches],
        "integrated_autocorrelation": [b.iat for b in batches],
        "kept_configurations": int(pooled.configurations.shape[0]),
    }
    run.write_json("sample.json", report)
    run.metrics["acceptance_rates"] = report["acceptance_rates"]
    _print_table("sample", [("chain", "acceptance", "step", "iat")] +
                 [(b.seed[1], f"{b.acceptance_rate:.3f}", f"{b.step_size:.4f}", f"{b.iat:.2f}") for b in batches])


def cmd_equilibrium(cfg, run: Run, args):
    report, kern = _solve(cfg)
    spec = cfg.ensemble
    if kern is not None:
        for j, mu in enumerate(report.minimizer):
            run.write_csv(f"minimizer_species{j}.csv", ["node", "weight", "density"],
                          zip(mu.nodes, mu.weights, mu.density))
            run.write_table(f"equilibrium_species{j}.dat", ["node", "density"], [mu.nodes, mu.density])
    else:
        mu = report.minimizer
        run.write_csv("minimizer.csv", ["node", "weight", "density"], zip(mu.nodes, mu.weights, mu.density))
        columns, header = [mu.nodes, mu.density], ["node", "solved_density"]
        for name in ("rho-infinity", "semicircle"):
            if reference_compatible(name, spec):
                density, _, _ = reference_law(name)
                columns.append(density(mu.nodes))
                header.append(f"{name}_density")
                run.metrics["w1_vs_reference"] = wasserstein1(mu, reference_measure(name))
        run.write_table("equilibrium.dat", header, columns)
    run.write_json("rate_report.json", report.to_dict())
    run.metrics.update({"energy": report.energy_value, "c_constant": report.c_constant,
                        "duality_gap": report.final_duality_gap})
    _print_table("equilibrium", [("energy", "c", "gap", "iterations"),
                                 (f"{report.energy_value:.10g}", f"{report.c_constant:.10g}",
                                  f"{report.final_duality_gap:.3e}", report.iterations)])


def _source_measure(cfg, run: Run):
    source = cfg.verify["source"]
    if source == "sample":
        batches, pooled = _sample(cfg, int(cfg.sampler["chains"]))
        run.metrics["acceptance_rates"] = [b.acceptance_rate for b in batches]
        return empirical_measure(pooled)
    if source == "equilibrium":
        report, kern = _solve(cfg)
        if kern is not None:
            raise ConfigError("verify.source: equilibrium verification needs a one-species ensemble")
        return report.minimizer
    if source == "boson-matrix":
        bm = cfg.boson_matrix
        draws = draw_boson_frequencies(int(bm["n"]), int(bm["alpha"]), int(bm["draws"]), cfg.seed,
                                       float(bm["calibration_scale"]))
        f = np.concatenate([d.frequencies for d in draws])
        return EmpiricalMeasure(f, np.full(f.size, 1.0 / f.size))
    return reference_measure(cfg.verify["against"])


def cmd_verify(cfg, run: Run, args):
    v = cfg.verify
    against, metric = v["against"], v["metric"]
    if against is None:
        raise ConfigError("verify.against: choose rho-infinity, semicircle or oracle")
    src = _source_measure(cfg, run)
    if against == "oracle":
        n = int(cfg.sampler["n"]) if v["source"] == "sample" else int(cfg.oracle["n"])
        res = quadrature_oracle(cfg.ensemble, n, cfg.oracle["resolution"], (), cfg.truncate())
        target = PiecewiseCDF(res.cdf_knots, res.cdf_values, res.cdf_values.copy())
    else:
        target = reference_measure(against)
    result = {"source": v["source"], "against": against, "metric": metric}
    if metric == "w1":
        value = wasserstein1(src, target)
    elif metric == "ks":
        value = ks_distance(src, target)
    else:
        bl = bounded_lipschitz(src, target)
        value = bl.lower
        result["bl"] = bl.to_dict()
    result["value"] = value
    threshold = v["threshold"]
    result["threshold"] = threshold
    result["passed"] = None if threshold is None else bool(value <= float(threshold))
    run.write_json("verify.json", result)
    run.metrics[f"{metric}_vs_{against}"] = value
    status = "n/a" if threshold is None else ("PASS" if result["passed"] else "FAIL")
    _print_table("verify", [("source", "against", "metric", "value", "threshold", "status"),
                            (v["source"], against, metric, f"{value:.6g}", threshold, status)])


def cmd_ldp_probe(cfg, run: Run, args):
    event = HalfSpaceEvent.parse(args.event or cfg.ldp["event"])
    ns = [int(s) for s in args.n.split(",")] if args.n else [int(s) for s in cfg.ldp["n"]]
    if isinstance(cfg.ensemble, AngelescoSpec):
        raise ConfigError("ldp-probe: needs a one-species ensemble")
    rep = ldp_probe(cfg.ensemble, event, ns, int(cfg.ldp["grid"]), cfg.truncate(), cfg.ldp["resolution"])
    run.write_json("ldp_probe.json", rep.to_dict())
    run.metrics.update({"inf_rate": rep.inf_rate, "monotone_toward": rep.monotone_toward,
                        "exponents": [r.exponent for r in rep.rows]})
    rows = [("n", "P(A)", "error", "exponent", "inf I", "inf I/2", "bound")]
    rows += [(r.n, f"{r.probability:.6g}", f"{r.probability_error:.2e}", f"{r.exponent:.6g}",
              f"{rep.inf_rate:.6g}", f"{rep.bound_line:.6g}", "ok" if r.bound_holds else "violated")
             for r in rep.rows]
    _print_table(f"ldp-probe {rep.event}", rows)


def cmd_boson_matrix(cfg, run: Run, args):
    bm = dict(cfg.boson_matrix)
    for key in ("n", "alpha", "draws"):
        if getattr(args, key) is not None:
            bm[key] = getattr(args, key)
    draws = draw_boson_frequencies(int(bm["n"]), int(bm["alpha"]), int(bm["draws"]), cfg.seed,
                                   float(bm["calibration_scale"]))
    write_draws_csv(draws, run.path("boson_draws.csv"))
    f = np.sort(np.concatenate([d.frequencies for d in draws]))
    mu = EmpiricalMeasure(f, np.full(f.size, 1.0 / f.size))
    edges = np.linspace(0.0, float(max(f[-1], 5.2)), 61)
    hist, _ = np.histogram(f, bins=edges, density=True)
    mids = 0.5 * (edges[1:] + edges[:-1])
    density, _, _ = reference_law("rho-infinity")
    run.write_table("boson_histogram.dat", ["frequency", "histogram", "rho_infinity"], [mids, hist, density(mids)])
    w1 = wasserstein1(mu, reference_measure("rho-infinity"))
    run.write_json("boson_matrix.json", {"parameters": bm, "calibration_scale": float(bm["calibration_scale"]),
                                         "mean_frequency": mu.mean(), "w1_vs_rho_infinity": w1})
    run.metrics.update({"w1_vs_rho_infinity": w1, "mean_frequency": mu.mean()})
    _print_table("boson-matrix", [("n", "draws", "mean", "W1 vs rho-infinity"),
                                  (bm["n"], bm["draws"], f"{mu.mean():.6g}", f"{w1:.6g}")])


def cmd_oracle(cfg, run: Run, args):
    n = args.n if args.n is not None else int(cfg.oracle["n"])
    resolution = args.resolution if args.resolution is not None else cfg.oracle["resolution"]
    events = [HalfSpaceEvent.parse(e) for e in cfg.oracle["events"]]
    if isinstance(cfg.ensemble, AngelescoSpec):
        raise ConfigError("oracle: needs a one-species ensemble")
    res = quadrature_oracle(cfg.ensemble, n, resolution, events, cfg.truncate())
    run.write_json("oracle.json", res.to_dict())
    run.write_table("oracle_marginal_cdf.dat", ["x", "cdf"], [res.cdf_knots, res.cdf_values])
    run.metrics.update({"log_Z": res.log_Z, "Z": res.Z, "error_estimate": res.error_estimate})
    _print_table("oracle", [("n", "Z", "log Z", "error")] +
                 [(n, f"{res.Z:.10g}", f"{res.log_Z:.10g}", f"{res.error_estimate:.2e}")])


COMMANDS = {
    "sample": cmd_sample,
    "equilibrium": cmd_equilibrium,
    "verify": cmd_verify,
    "ldp-probe": cmd_ldp_probe,
    "boson-matrix": cmd_boson_matrix,
    "oracle": cmd_oracle,
}


def _print_table(title, rows):
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    print(f"[{title}]")
    for r in rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML experiment config")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override a config field (repeatable)")

    parser = argparse.ArgumentParser(prog="biorth-ldp", parents=[common],
                                     description="Biorthogonal ensembles: sampling, equilibrium measures, checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="run Metropolis chains")
    p.add_argument("--chains", type=int, default=None)

    p = sub.add_parser("equilibrium", parents=[common], help="solve the discretized energy problem")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--truncate", default=None, help="a,b")
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("verify", parents=[common], help="compare a measure against a reference")
    p.add_argument("--against", choices=["rho-infinity", "semicircle", "oracle"], default=None)
    p.add_argument("--metric", choices=["w1", "bl", "ks"], default=None)
    p.add_argument("--source", choices=["sample", "equilibrium", "boson-matrix", "reference"], default=None)

    p = sub.add_parser("ldp-probe", parents=[common], help="oracle exponents vs constrained minima")
    p.add_argument("--event", default=None, help="g,t with g in {x, x^2, |x|}")
    p.add_argument("--n", default=None, help="comma-separated n values, each <= 3")

    p = sub.add_parser("boson-matrix", parents=[common], help="matrix-model frequency draws")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)

    p = sub.add_parser("oracle", parents=[common], help="quadrature partition function at n <= 3")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    return parser


def _overrides(args):
    sets = list(getattr(args, "set", []) or [])
    if getattr(args, "seed", None) is not None:
        sets.append(f"seed={args.seed}")
    if getattr(args, "out", None) is not None:
        sets.append(f"output={args.out}")
    cmd = args.command
    if cmd == "equilibrium":
        if args.grid is not None:
            sets.append(f"equilibrium.grid={args.grid}")
        if args.truncate is not None:
            sets.append(f"equilibrium.truncate=[{args.truncate}]")
        if args.tol is not None:
            sets.append(f"equilibrium.tolerance={args.tol!r}")
    if cmd == "verify" and args.source is not None:
        sets.append(f"verify.source={args.source}")
    if cmd == "verify" and args.against is not None:
        sets.append(f"verify.against={args.against}")
    if cmd == "verify" and args.metric is not None:
        sets.append(f"verify.metric={args.metric}")
    if cmd == "sample" and args.chains is not None:
        sets.append(f"sampler.chains={args.chains}")
    return sets


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None), _overrides(args))
        os.makedirs(cfg.output, exist_ok=True)
        with _OutputLock(cfg.output):
            r = Run(cfg, args.command, cfg.output)
            COMMANDS[args.command](cfg, r, args)
            r.write_manifest()
        return EXIT_OK
    except (ConfigError, ContractError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        if exc.payload:
            print(json.dumps(_jsonable(exc.payload), sort_keys=True), file=sys.stderr)
        return EXIT_NUMERICAL
    except BiorthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
