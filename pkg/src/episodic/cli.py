"""Command-line entry point: simulate / fit / gof / analyze / benchmark.

File formats:
  events CSV      header ``time,kind``; time in fractional days since the
                  window start, strictly increasing; kind 1 = original post,
                  0 = repost
  params JSON     {"alpha", "gamma", "mu1", "mu0", "rho1", "rho0",
                   "offspring": "exponential"|"weibull",
                   "hazard": {"family": "sinusoidal"|"bspline", "beta": [...]}}
                  (rho as [shape, scale] for the Weibull family)
  fit JSON        {"params", "se", "loglik", "loglik_trace", "converged",
                   "derived", "config", "seed"}

All outputs are written atomically (temp file + rename). Exit codes:
0 success, 1 data error, 2 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analytics, gof, hazard as hz, uncertainty
from .clem import FitConfig, direct_fit, fit as clem_fit, result_from_params
from .model import (
    EventSequence,
    ModelParams,
    OffspringFamily,
    pack_params,
    param_names,
)
from .simulate import simulate


class DataError(Exception):
    """Malformed input; maps to exit code 1."""


def _atomic_write(path, text: str):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Params JSON


def params_to_json(params: ModelParams) -> dict:
    def rho(r):
        return list(r) if params.offspring is OffspringFamily.WEIBULL else float(r)

    family = "bspline" if isinstance(params.hazard, hz.BSplineHazard) else "sinusoidal"
    return {
        "alpha": params.alpha,
        "gamma": params.gamma,
        "mu1": params.mu1,
        "mu0": params.mu0,
        "rho1": rho(params.rho1),
        "rho0": rho(params.rho0),
        "offspring": params.offspring.value,
        "hazard": {"family": family, "beta": list(params.hazard.beta)},
    }


def params_from_json(obj: dict, where: str) -> ModelParams:
    try:
        hcfg = obj["hazard"]
        family = hcfg["family"]
        beta = tuple(float(b) for b in hcfg["beta"])
        if family == "bspline":
            spec = hz.BSplineHazard(beta=beta)
        elif family == "sinusoidal":
            spec = hz.SinusoidalHazard(beta=beta)
        else:
            raise ValueError(f"unknown hazard family {family!r}")
        offspring = OffspringFamily(obj.get("offspring", "exponential"))

        def rho(v):
            if offspring is OffspringFamily.WEIBULL:
                return (float(v[0]), float(v[1]))
            return float(v)

        return ModelParams(
            alpha=float(obj["alpha"]),
            gamma=float(obj["gamma"]),
            mu1=float(obj["mu1"]),
            mu0=float(obj["mu0"]),
            rho1=rho(obj["rho1"]),
            rho0=rho(obj["rho0"]),
            hazard=spec,
            offspring=offspring,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataError(f"{where}: bad model parameters: {exc}") from exc


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


# ---------------------------------------------------------------------------
# Events CSV


def write_events_csv(path, events: EventSequence, labels=None):
    lines = []
    if labels is None:
        lines.append("time,kind")
        for t, k in zip(events.times, events.marks):
            lines.append(f"{_fmt(t)},{int(k)}")
    else:
        lines.append("time,kind,label")
        for t, k, l in zip(events.times, events.marks, labels.labels):
            lines.append(f"{_fmt(t)},{int(k)},{int(l)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_events_csv(path, horizon=None) -> EventSequence:
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not raw or raw[0].split(",")[:2] != ["time", "kind"]:
        raise DataError(f"{path}:1: expected header 'time,kind'")
    times, marks = [], []
    prev = None
    for ln, row in enumerate(raw[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) < 2:
            raise DataError(f"{path}:{ln}: expected 'time,kind', got {row!r}")
        try:
            t = float(parts[0])
            k = int(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: {exc}") from exc
        if k not in (0, 1):
            raise DataError(f"{path}:{ln}: kind must be 0 or 1, got {parts[1]!r}")
        if t < 0.0:
            raise DataError(f"{path}:{ln}: negative time {t}")
        if prev is not None and t <= prev:
            raise DataError(
                f"{path}:{ln}: times must be strictly increasing "
                f"({t} follows {prev}); jitter duplicate timestamps upstream"
            )
        prev = t
        times.append(t)
        marks.append(k)
    if horizon is None:
        if not times:
            raise DataError(f"{path}: no events and no --T to set the window")
        horizon = float(math.ceil(times[-1])) if times[-1] > 0 else 1.0
    if times and times[-1] > horizon:
        raise DataError(f"{path}: last event {times[-1]} exceeds the window T={horizon}")
    return EventSequence(window_start=0.0, window_end=float(horizon), times=times, marks=marks)


# ---------------------------------------------------------------------------
# Sub-commands


def _hazard_template(args) -> hz.HazardSpec:
    if args.hazard == "bspline":
        return hz.BSplineHazard(beta=(0.0,) * args.knots)
    return hz.SinusoidalHazard(beta=(0.0,) * (1 + 2 * args.harmonics))


def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    params = params_from_json(cfg, args.config)
    horizon = float(cfg.get("horizon", 0.0)) if args.horizon is None else args.horizon
    if horizon < 0.0:
        raise DataError("horizon must be nonnegative")
    truncation = cfg.get("truncation", "drop")
    events, labels = simulate(params, horizon, seed=args.seed, truncation=truncation)
    write_events_csv(args.out, events)
    if args.labels_out:
        write_events_csv(args.labels_out, events, labels)
    return 0


def _fit_config(args) -> FitConfig:
    return FitConfig(
        sub_window_length=args.s,
        max_iterations=args.max_iterations,
        starts=args.starts,
        seed=args.seed,
        offspring_family=OffspringFamily(args.offspring),
        hazard_template=_hazard_template(args),
    )


def _fit_json(result, se_map, args, config: FitConfig) -> dict:
    return {
        "params": params_to_json(result.params),
        "se": se_map,
        "loglik": result.loglik,
        "loglik_trace": [float(v) for v in result.loglik_trace],
        "converged": bool(result.converged),
        "n_iterations": result.n_iterations,
        "derived": result.derived,
        "config": {
            "s": config.sub_window_length,
            "max_iterations": config.max_iterations,
            "starts": config.starts,
            "offspring": config.offspring_family.value,
            "hazard_family": "bspline"
            if isinstance(config.hazard_template, hz.BSplineHazard)
            else "sinusoidal",
            "hazard_dim": len(config.hazard_template.beta),
            "T": result.partition.windows[-1].window_end,
        },
        "seed": args.seed,
    }


def cmd_fit(args) -> int:
    events = read_events_csv(args.events, horizon=args.T)
    if len(events) == 0:
        raise DataError("cannot fit an empty event sequence")
    config = _fit_config(args)
    result = clem_fit(events, config)
    se_map = None
    if not args.no_se:
        try:
            var = uncertainty.sandwich(result)
            se_map = dict(zip(var.names, (float(v) for v in var.se)))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            se_map = {"error": str(exc)}
    _atomic_write(args.out, json.dumps(_fit_json(result, se_map, args, config), indent=2) + "\n")
    return 0 if result.converged else 2


def _csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def cmd_gof(args) -> int:
    fit_obj = _load_json(args.fit)
    params = params_from_json(fit_obj.get("params", {}), args.fit)
    cfg = fit_obj.get("config", {})
    horizon = args.T if args.T is not None else cfg.get("T")
    events = read_events_csv(args.events, horizon=horizon)
    if len(events) == 0:
        raise DataError("goodness of fit needs at least one event")
    config = FitConfig(
        sub_window_length=float(cfg.get("s", 7.0)),
        offspring_family=params.offspring,
        hazard_template=params.hazard,
    )
    result = result_from_params(events, params, config)
    out = Path(args.out_dir)

    env = gof.envelope(events, params, w=args.w, seed=args.seed)
    _atomic_write(
        out / "envelope.csv",
        _csv_text(
            ["v", "f_hat", "f_bar", "upper", "lower"],
            zip(env.v, env.f_hat, env.f_bar, env.upper, env.lower),
        ),
    )
    for z in (1, 0):
        try:
            chk = gof.offspring_cdf_check(result, z)
        except ValueError:
            continue
        _atomic_write(
            out / f"offspring_mark{z}.csv",
            _csv_text(
                ["v", "f_hat", "f_model", "ci_lo", "ci_hi"],
                zip(chk.v, chk.empirical, chk.model, chk.ci_lower, chk.ci_upper),
            ),
        )
    res = gof.rescaled_parent_check(result)
    _atomic_write(
        out / "rescaled_parents.csv",
        _csv_text(["v", "f_hat", "f_model"], zip(res.v, res.empirical, res.model)),
    )
    return 0


def _read_table(path, expected_header: list[str]) -> list[list[str]]:
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not raw or [c.strip() for c in raw[0].split(",")] != expected_header:
        raise DataError(f"{path}:1: expected header {','.join(expected_header)!r}")
    rows = []
    for ln, row in enumerate(raw[1:], start=2):
        if not row.strip():
            continue
        parts = [c.strip() for c in row.split(",")]
        if len(parts) != len(expected_header):
            raise DataError(f"{path}:{ln}: expected {len(expected_header)} columns")
        rows.append(parts)
    return rows


def cmd_analyze(args) -> int:
    manifest = _read_table(args.manifest, ["user_id", "path"])
    if not manifest:
        raise DataError(f"{args.manifest}: no users listed")
    base = Path(args.manifest).parent
    users, datasets = [], []
    for uid, rel in manifest:
        p = Path(rel)
        users.append(uid)
        datasets.append(read_events_csv(p if p.is_absolute() else base / p, horizon=args.T))
    config = _fit_config(args)
    results, errors = analytics.batch_fit(datasets, config, n_jobs=args.jobs)
    out = Path(args.out_dir)

    fitted = [(u, r) for u, r in zip(users, results) if r is not None]
    fail_rows = [(u, e.replace(",", ";")) for u, e in zip(users, errors) if e is not None]
    if fail_rows:
        _atomic_write(out / "failures.csv", _csv_text(["user_id", "error"], fail_rows))
    if not fitted:
        raise DataError("every per-user fit failed; see failures.csv")

    metric_names = ["avg_daily_parent_hazard", "expected_posts_per_episode", "expected_episode_length"]
    rows = []
    for uid, res in fitted:
        met = analytics.derived_metrics(res)
        flat = dict(zip(param_names(res.params), pack_params(res.params)))
        rows.append(
            [uid, str(int(res.converged))]
            + [float(flat[k]) for k in ("alpha", "gamma", "mu1", "mu0")]
            + [float(met[k]) for k in metric_names]
        )
    _atomic_write(
        out / "metrics.csv",
        _csv_text(["user_id", "converged", "alpha", "gamma", "mu1", "mu0"] + metric_names, rows),
    )

    res_list = [r for _, r in fitted]
    curves = analytics.hazard_curves(res_list, grid_size=args.grid)
    pca = analytics.curve_pca(curves.curves)
    pca_rows = [
        [float(g), float(m)] + [float(c[i]) for c in pca.components]
        for i, (g, m) in enumerate(zip(curves.grid, pca.mean))
    ]
    comp_header = ["grid", "mean"] + [f"component{j + 1}" for j in range(len(pca.components))]
    _atomic_write(out / "pca.csv", _csv_text(comp_header, pca_rows))
    _atomic_write(
        out / "pca_explained.csv",
        _csv_text(
            ["component", "explained_fraction"],
            [[j + 1, float(f)] for j, f in enumerate(pca.explained)],
        ),
    )

    summary: dict = {"n_users": len(users), "n_fitted": len(fitted)}
    try:
        clus = analytics.three_group_cluster(curves.avg_daily, seed=args.seed)
        _atomic_write(
            out / "clusters.csv",
            _csv_text(
                ["user_id", "avg_daily_parent_hazard", "group"],
                [
                    [uid, float(v), lab]
                    for (uid, _), v, lab in zip(fitted, curves.avg_daily, clus.labels)
                ],
            ),
        )
        summary["cluster_centers"] = [float(c) for c in clus.centers]
    except ValueError as exc:
        summary["cluster_error"] = str(exc)

    if args.covariates:
        cov_rows = _read_table(args.covariates, ["user_id", "n_following", "n_followers"])
        cov_map = {r[0]: (float(r[1]), float(r[2])) for r in cov_rows}
        missing = [u for u, _ in fitted if u not in cov_map]
        if missing:
            raise DataError(f"{args.covariates}: missing covariates for users {missing[:5]}")
        following = np.array([cov_map[u][0] for u, _ in fitted])
        followers = np.array([cov_map[u][1] for u, _ in fitted])
        metrics = {
            name: np.array([analytics.derived_metrics(r)[name] for _, r in fitted])
            for name in metric_names
        }
        try:
            corr = analytics.covariate_correlations(
                metrics, following, followers, n_boot=args.boot, seed=args.seed
            )
            _atomic_write(
                out / "correlations.csv",
                _csv_text(
                    ["metric", "covariate", "r", "se"],
                    [[c["metric"], c["covariate"], float(c["r"]), float(c["se"])] for c in corr],
                ),
            )
        except ValueError as exc:
            summary["correlation_error"] = str(exc)
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_json(args.params)
    truth = params_from_json(cfg, args.params)
    config = FitConfig(
        sub_window_length=args.s,
        starts=args.starts,
        seed=args.seed,
        offspring_family=truth.offspring,
        hazard_template=truth.hazard.with_beta((0.0,) * len(truth.hazard.beta)),
    )
    rows = []
    for rep in range(args.replicates):
        events, _ = simulate(truth, args.horizon, seed=args.seed + rep)
        if len(events) == 0:
            rows.append({"replicate": rep, "n_events": 0, "skipped": True})
            continue
        t0 = time.perf_counter()
        res = clem_fit(events, config)
        clem_sec = time.perf_counter() - t0
        row = {
            "replicate": rep,
            "n_events": len(events),
            "clem_loglik": res.loglik,
            "clem_converged": bool(res.converged),
            "clem_iterations": res.n_iterations,
            "clem_seconds": clem_sec,
        }
        if args.direct:
            t0 = time.perf_counter()
            dparams, dll, dok, devals = direct_fit(events, config)
            row.update(
                {
                    "direct_loglik": dll,
                    "direct_converged": dok,
                    "direct_evals": devals,
                    "direct_seconds": time.perf_counter() - t0,
                }
            )
        rows.append(row)
    done = [r for r in rows if not r.get("skipped")]
    summary = {
        "replicates": args.replicates,
        "fitted": len(done),
        "clem_converged": sum(1 for r in done if r["clem_converged"]),
        "mean_clem_seconds": float(np.mean([r["clem_seconds"] for r in done])) if done else None,
    }
    if args.direct and done:
        summary["mean_direct_seconds"] = float(np.mean([r["direct_seconds"] for r in done]))
        summary["speed_ratio"] = summary["mean_direct_seconds"] / summary["mean_clem_seconds"]
        summary["direct_exceeds_clem"] = sum(
            1 for r in done if r.get("direct_loglik", -np.inf) > r["clem_loglik"] + 1e-6
        )
    _atomic_write(args.out, json.dumps({"summary": summary, "runs": rows}, indent=2) + "\n")
    return 0 if summary["clem_converged"] == len(done) else 2


# ---------------------------------------------------------------------------


def _add_fit_options(p, default_starts=5):
    p.add_argument("--s", type=float, default=7.0, help="sub-window length in days")
    p.add_argument("--T", type=float, default=None, help="window length (default: ceil of last event)")
    p.add_argument("--hazard", choices=("bspline", "sinusoidal"), default="bspline")
    p.add_argument("--knots", type=int, default=7, help="B-spline knot count")
    p.add_argument("--harmonics", type=int, default=1, help="sinusoidal harmonic count")
    p.add_argument("--offspring", choices=("exponential", "weibull"), default="exponential")
    p.add_argument("--starts", type=int, default=default_starts)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="episodic",
        description="Episodic point-process model: simulate, fit, diagnose, analyze.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an event sequence to CSV")
    p.add_argument("config", help="params JSON (may include horizon/truncation)")
    p.add_argument("--horizon", type=float, default=None, help="override window length (days)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", default=None, help="also write ground-truth labels CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the model to an events CSV")
    p.add_argument("events")
    _add_fit_options(p)
    p.add_argument("--no-se", action="store_true", help="skip sandwich standard errors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gof", help="goodness-of-fit CSVs for a fitted model")
    p.add_argument("events")
    p.add_argument("fit", help="fit JSON produced by the fit command")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--w", type=int, default=99, help="envelope replicate count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("analyze", help="batch per-user fits plus cohort analytics")
    p.add_argument("manifest", help="CSV with header user_id,path")
    p.add_argument("--covariates", default=None, help="CSV with header user_id,n_following,n_followers")
    _add_fit_options(p, default_starts=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--grid", type=int, default=96)
    p.add_argument("--boot", type=int, default=10_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("benchmark", help="CLEM vs direct maximization timing report")
    p.add_argument("--params", required=True, help="true params JSON")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--s", type=float, default=5.0)
    p.add_argument("--starts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direct", action="store_true", help="also run the numerical maximizer")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
