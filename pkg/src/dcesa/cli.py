"""Command-line entry point: ``dcesa {optimize,compare,evaluate,draws} --config FILE``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import bayesian_d, prior_family, relative_efficiency
from .config import (
    CampaignConfig,
    ConfigError,
    check_keys,
    as_int,
    as_number,
    section,
    build_draws,
    load_config,
    resolve_algorithm,
    resolve_multistart,
    resolve_outputs,
    resolve_prior,
    resolve_problem,
    resolve_quadrature,
)
from .design import code_design
from .evaluation import (
    SimulationStudy,
    crossing_point,
    efficiency_histogram,
    expected_min_t_curve,
)
from .io import DesignFileError, design_to_csv, drawset_to_csv, read_design, to_json, trace_to_csv, write_outputs
from .optimizers.cooling import DegenerateProblemError
from .optimizers.multistart import multistart, start_designs

log = logging.getLogger("dcesa")

THREADS_ENV = "DCESA_THREADS"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class OutputError(OSError):
    pass


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def _output_dir(outputs: dict, base: Path) -> Path:
    out = Path(outputs["dir"])
    if not out.is_absolute():
        out = base / out
    if not out.is_dir():
        raise OutputError(f"output directory {out} does not exist")
    if not os.access(out, os.W_OK | os.X_OK):
        raise OutputError(f"output directory {out} is not writable")
    return out


def _manifest(command: str, resolved: dict, threads: int, **extra) -> dict:
    return {
        "command": command,
        "version": f"dcesa {__version__}",
        "config": resolved,
        "threads": threads,
        **extra,
    }


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- optimize


def cmd_optimize(doc: dict, base: Path, seed: int | None, threads: int) -> dict:
    cc = CampaignConfig.from_dict(doc, seed)
    out_dir = _output_dir(cc.outputs, base)
    draws = build_draws(cc.prior, cc.quadrature)
    ms = cc.multistart
    log.info("optimize: %s, %d starts, %d prior nodes", cc.algorithm, ms["n_starts"], len(draws))
    t0 = time.monotonic()
    best, results = multistart(
        cc.algorithm, cc.spec, draws, cc.cooling, ms["n_starts"], ms["seed"], ms["time_budget"],
        workers=threads, record_trace=cc.outputs["trace"],
    )
    wall = time.monotonic() - t0
    check = bayesian_d(code_design(best.best_design, cc.spec), draws, cc.spec.n_alts)
    prefix = out_dir / cc.outputs["prefix"]
    manifest = _manifest(
        "optimize", cc.resolved, threads,
        seeds={
            "multistart": ms["seed"],
            "quadrature": cc.quadrature["seed"],
            "runs": [r.seed for r in results],
        },
        n_draws=len(draws),
        best_d_b=best.best_d_b,
        best_d_b_recomputed=check,
        best_run=next(i for i, r in enumerate(results) if r is best),
        wall_time=wall,
        runs=[r.summary() for r in results],
    )
    files = {
        f"{prefix}_design.csv": design_to_csv(best.best_design),
        f"{prefix}_manifest.json": to_json(manifest),
    }
    if cc.outputs["trace"] and best.trace is not None:
        files[f"{prefix}_trace.csv"] = trace_to_csv(best.trace)
    write_outputs(files)
    log.info("best D_B = %.6f (%.1f s)", best.best_d_b, wall)
    return files


# ---------------------------------------------------------------- compare


def _compare_priors(doc: dict, spec) -> list[tuple[dict, object]]:
    if "prior_grid" in doc:
        grid = section(doc, "prior_grid")
        check_keys(grid, {"lambda", "kappa"}, "prior_grid")
        cells = []
        for lam in grid.get("lambda", [1.0]):
            as_number(lam, "prior_grid.lambda", positive=True)
            for kap in grid.get("kappa", [1.0]):
                as_number(kap, "prior_grid.kappa", positive=True)
                try:
                    prior = prior_family(lam, kap, spec)
                except ValueError as exc:
                    raise ConfigError("prior_grid", str(exc)) from None
                cells.append(({"family": {"lambda": lam, "kappa": kap}}, prior))
        if not cells:
            raise ConfigError("prior_grid", "empty grid")
        return cells
    prior_doc, prior = resolve_prior(section(doc, "prior"), spec)
    return [(prior_doc, prior)]


def cmd_compare(doc: dict, base: Path, seed: int | None, threads: int) -> dict:
    check_keys(
        doc, {"problem", "prior", "prior_grid", "quadrature", "algorithm", "multistart", "outputs"}, "<root>"
    )
    problem, spec = resolve_problem(doc)
    cells = _compare_priors(doc, spec)
    quad = resolve_quadrature(doc)
    alg_doc, name, cooling = resolve_algorithm(section(doc, "algorithm", required=False))
    if name != "SA":
        raise ConfigError("algorithm.name", "compare pits CE against SA; give the SA settings here")
    ms = resolve_multistart(doc, seed)
    outputs = resolve_outputs(doc, "compare")
    out_dir = _output_dir(outputs, base)
    resolved = {
        "problem": problem,
        "priors": [c[0] for c in cells],
        "quadrature": quad,
        "algorithm": alg_doc,
        "multistart": ms,
        "outputs": outputs,
    }

    starts = start_designs(spec, ms["n_starts"], ms["seed"])
    designs = [d for d, _ in starts]
    summary, eff_rows, hist_rows, cell_info = [], [], [], []
    for prior_doc, prior in cells:
        fam = prior_doc.get("family", {})
        lam, kap = fam.get("lambda", ""), fam.get("kappa", "")
        draws = build_draws(prior, quad)  # frozen for both algorithms
        t0 = time.monotonic()
        _, ce = multistart("CE", spec, draws, None, ms["n_starts"], ms["seed"],
                           workers=threads, initial_designs=designs)
        ce_wall = time.monotonic() - t0
        t0 = time.monotonic()
        if ms["fairness"]:
            _, sa = multistart("SA", spec, draws, cooling, None, ms["seed"], time_budget=ce_wall,
                               initial_designs=designs)
        else:
            _, sa = multistart("SA", spec, draws, cooling, ms["n_starts"], ms["seed"],
                               workers=threads, initial_designs=designs)
        sa_wall = time.monotonic() - t0
        n_pairs = min(len(ce), len(sa))
        hist = efficiency_histogram(ce[:n_pairs], sa[:n_pairs], spec.m)
        eff = hist["efficiencies"]
        ce_best = max(r.best_d_b for r in ce)
        sa_best = max(r.best_d_b for r in sa)
        summary.append([
            lam, kap, n_pairs,
            float(np.mean([r.best_d_b for r in ce])), float(np.mean([r.wall_time for r in ce])),
            float(np.mean([r.best_d_b for r in sa])), float(np.mean([r.wall_time for r in sa])),
            float(eff.mean()), float(np.mean(eff < 1.0)),
            ce_best, sa_best, relative_efficiency(ce_best, sa_best, spec.m),
            ce_wall, sa_wall, len(sa),
        ])
        for i in range(n_pairs):
            eff_rows.append([lam, kap, i + 1, ce[i].best_d_b, sa[i].best_d_b, float(eff[i])])
        edges, counts = hist["bin_edges"], hist["counts"]
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            hist_rows.append([lam, kap, round(float(lo), 10), round(float(hi), 10), int(c)])
        cell_info.append({
            "prior": prior_doc, "n_draws": len(draws),
            "ce_runs": [r.summary() for r in ce], "sa_runs": [r.summary() for r in sa],
        })
        log.info("prior (%s, %s): CE %.4f  SA %.4f  mean eff %.4f",
                 lam, kap, summary[-1][3], summary[-1][5], summary[-1][7])

    prefix = out_dir / outputs["prefix"]
    header = [
        "lambda", "kappa", "n_pairs", "ce_mean_db", "ce_mean_runtime", "sa_mean_db", "sa_mean_runtime",
        "mean_rel_eff", "share_below_1", "ce_best_db", "sa_best_db", "best_rel_eff",
        "ce_total_runtime", "sa_total_runtime", "sa_n_runs",
    ]
    manifest = _manifest(
        "compare", resolved, threads,
        seeds={"multistart": ms["seed"], "quadrature": quad["seed"], "runs": [s for _, s in starts]},
        cells=cell_info,
    )
    files = {
        f"{prefix}_summary.csv": _rows_to_csv(header, summary),
        f"{prefix}_efficiencies.csv": _rows_to_csv(
            ["lambda", "kappa", "pair", "ce_db", "sa_db", "efficiency"], eff_rows),
        f"{prefix}_histogram.csv": _rows_to_csv(["lambda", "kappa", "bin_low", "bin_high", "count"], hist_rows),
        f"{prefix}_manifest.json": to_json(manifest),
    }
    write_outputs(files)
    return files


# ---------------------------------------------------------------- evaluate


def _resolve_simulation(doc: dict, seed: int | None) -> dict:
    sec = section(doc, "simulation", required=False)
    check_keys(sec, {"n_respondents", "n_replicates", "seed", "emse_p", "t_curve"}, "simulation")
    out = {
        "n_respondents": as_int(sec.get("n_respondents", 100), "simulation.n_respondents", 1),
        "n_replicates": as_int(sec.get("n_replicates", 1000), "simulation.n_replicates", 1),
        "seed": as_int(sec.get("seed", 0), "simulation.seed", 0),
        "emse_p": bool(sec.get("emse_p", True)),
        "t_curve": None,
    }
    if seed is not None:
        out["seed"] = seed
    if sec.get("t_curve") is not None:
        tc = sec["t_curve"]
        if not isinstance(tc, dict):
            raise ConfigError("simulation.t_curve", "must be an object")
        check_keys(tc, {"r_min", "r_max", "n_replicates", "threshold"}, "simulation.t_curve")
        r_min = as_int(tc.get("r_min", 1), "simulation.t_curve.r_min", 1)
        r_max = as_int(tc.get("r_max", 100), "simulation.t_curve.r_max", r_min)
        out["t_curve"] = {
            "r_min": r_min,
            "r_max": r_max,
            "n_replicates": as_int(tc.get("n_replicates", out["n_replicates"]), "simulation.t_curve.n_replicates", 1),
            "threshold": as_number(tc.get("threshold", 1.96), "simulation.t_curve.threshold", positive=True),
        }
    return out


def cmd_evaluate(doc: dict, base: Path, seed: int | None, threads: int) -> dict:
    check_keys(
        doc,
        {"problem", "prior", "quadrature", "designs", "beta_true", "reference", "simulation", "outputs"},
        "<root>",
    )
    problem, spec = resolve_problem(doc)
    prior_doc, prior = (None, None)
    if "prior" in doc:
        prior_doc, prior = resolve_prior(doc["prior"], spec)
    quad = resolve_quadrature(doc)
    sim = _resolve_simulation(doc, seed)
    outputs = resolve_outputs(doc, "evaluate")

    entries = doc.get("designs")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("designs", "must be a non-empty list of {name, path}")
    named = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "path" not in e:
            raise ConfigError(f"designs[{i}]", "needs a 'path'")
        check_keys(e, {"name", "path"}, f"designs[{i}]")
        name = str(e.get("name", Path(e["path"]).stem))
        if os.sep in name or not name:
            raise ConfigError(f"designs[{i}].name", "must be a plain file-name part")
        named.append((name, e["path"]))
    if len({n for n, _ in named}) != len(named):
        raise ConfigError("designs", "design names must be unique")
    reference = doc.get("reference")
    if reference is not None and reference not in {n for n, _ in named}:
        raise ConfigError("reference", f"{reference!r} is not one of the design names")

    beta_true = doc.get("beta_true", "prior_mean")
    if isinstance(beta_true, str):
        if beta_true != "prior_mean" or prior is None:
            raise ConfigError("beta_true", "must be a list of m numbers, or 'prior_mean' with a prior given")
        beta_true = prior.mean
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_true.shape != (spec.m,):
        raise ConfigError("beta_true", f"must have m = {spec.m} entries")
    out_dir = _output_dir(outputs, base)

    designs = []
    for name, path in named:
        p = Path(path) if Path(path).is_absolute() else base / path
        try:
            designs.append((name, p, read_design(p, spec)))
        except DesignFileError as exc:
            raise DesignFileError(f"{p}: {exc}") from None
        except OSError as exc:
            raise OutputError(f"cannot read design {p}: {exc.strerror}") from None

    resolved = {
        "problem": problem,
        "prior": prior_doc,
        "quadrature": quad if prior is not None else None,
        "designs": [{"name": n, "path": str(p)} for n, p, _ in designs],
        "beta_true": beta_true.tolist(),
        "reference": reference,
        "simulation": sim,
        "outputs": outputs,
    }
    d_b = {}
    if prior is not None:
        draws = build_draws(prior, quad)
        for name, _, design in designs:
            d_b[name] = bayesian_d(code_design(design, spec), draws, spec.n_alts)

    files = {}
    prefix = out_dir / outputs["prefix"]
    for name, path, design in designs:
        study = SimulationStudy(design, spec, beta_true, sim["n_respondents"], sim["n_replicates"], sim["seed"])
        report = study.run(workers=threads, with_emse_p=sim["emse_p"] and spec.n_alts == 2)
        body = report.to_dict()
        if name in d_b:
            body["d_b"] = d_b[name]
            if reference is not None and np.isfinite(d_b[name]) and np.isfinite(d_b[reference]):
                body["relative_efficiency_vs_reference"] = relative_efficiency(d_b[name], d_b[reference], spec.m)
        if sim["t_curve"] is not None:
            tc = sim["t_curve"]
            curve = expected_min_t_curve(
                design, spec, beta_true, range(tc["r_min"], tc["r_max"] + 1), tc["n_replicates"],
                sim["seed"], workers=threads,
            )
            body["t_crossing"] = crossing_point(curve, tc["threshold"])
            files[f"{prefix}_{name}_tcurve.csv"] = _rows_to_csv(["r", "expected_min_t", "n_skipped"], curve)
        doc_out = _manifest(
            "evaluate", resolved, threads,
            design={"name": name, "path": str(path)},
            seeds={
                "simulation": sim["seed"],
                "replicates": study.replicate_seeds(),
                "quadrature": quad["seed"] if prior is not None else None,
            },
            report=body,
        )
        files[f"{prefix}_{name}_report.json"] = to_json(doc_out)
        log.info("%s: EMSE_beta %.5f  EMSE_p %.6f  skipped %d", name, report.emse_beta, report.emse_p, report.n_skipped)
    write_outputs(files)
    return files


# ---------------------------------------------------------------- draws


def cmd_draws(doc: dict, base: Path, seed: int | None, threads: int) -> dict:
    check_keys(doc, {"problem", "prior", "quadrature", "outputs"}, "<root>")
    problem, spec = resolve_problem(doc)
    prior_doc, prior = resolve_prior(section(doc, "prior"), spec)
    quad = resolve_quadrature(doc)
    if seed is not None:
        quad["seed"] = seed
    outputs = resolve_outputs(doc, "draws")
    out_dir = _output_dir(outputs, base)
    draws = build_draws(prior, quad)
    resolved = {"problem": problem, "prior": prior_doc, "quadrature": quad, "outputs": outputs}
    prefix = out_dir / outputs["prefix"]
    files = {
        f"{prefix}_draws.csv": drawset_to_csv(draws),
        f"{prefix}_manifest.json": to_json(
            _manifest("draws", resolved, threads, seeds={"quadrature": quad["seed"]}, n_draws=len(draws))
        ),
    }
    write_outputs(files)
    return files


COMMANDS = {
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "evaluate": cmd_evaluate,
    "draws": cmd_draws,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcesa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dcesa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "optimize": "construct a design (multistart SA or CE)",
        "compare": "paired CE vs SA runs from shared starts",
        "evaluate": "simulation study of one or more design CSVs",
        "draws": "dump the prior draw set for audit",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON campaign config")
        p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
        p.add_argument(
            "--threads", type=int, default=None,
            help=f"worker processes (default: ${THREADS_ENV} or the CPU count)",
        )
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = load_config(args.config)
        files = COMMANDS[args.command](doc, Path(args.config).resolve().parent, args.seed, threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (DesignFileError, OutputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
