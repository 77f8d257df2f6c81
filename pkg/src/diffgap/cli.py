"""Command-line interface: ``diffgap {spectrum,condense,estimate-dim,simulate}``.

Every command writes CSV (header row, 17 significant digits) and/or JSON into
the output directory (``--out``, else ``$DIFFGAP_OUTPUT_DIR``, else the
current directory). Configuration errors exit with status 2 and runtime
failures with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dimension, empirical, rmt, sde
from .exact_score import ExactScore, final_gap, intermediate_gap
from .manifold_data import VarianceProfile, sample_dataset, sample_projection

CONFIG_VERSION = 1
OUTPUT_ENV = "DIFFGAP_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- io helpers


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, doc):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- parsing


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def _time_list(text, points):
    """``a..b`` gives ``points`` log-spaced times, otherwise a comma list."""
    if isinstance(text, str) and ".." in text:
        lo, hi = (float(v) for v in text.split(".."))
        if not 0 < lo < hi:
            raise ConfigError(f"time range must satisfy 0 < lo < hi, got {text}")
        return list(np.geomspace(hi, lo, points))
    return _float_list(text)


def _resolve_profile(p):
    if p.get("two_variance"):
        vals = _float_list(p["two_variance"])
        if len(vals) != 2:
            raise ConfigError("--two-variance takes two values s1,s2")
        return VarianceProfile.two_block(vals[0], vals[1], p["f"])
    if p.get("profile"):
        return VarianceProfile.parse(p["profile"])
    return VarianceProfile.single(p["sigma2"])


def _common(parser):
    parser.add_argument("--config", help="JSON file whose keys override the flags")
    parser.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap for Monte Carlo loops (default: all cores)")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate and print the resolved plan without computing")


def _profile_flags(parser):
    parser.add_argument("--d", type=int, default=100)
    parser.add_argument("--m", type=int, default=40)
    parser.add_argument("--sigma2", type=float, default=1.0)
    parser.add_argument("--two-variance", dest="two_variance", default=None,
                        help="s1,s2: two-block profile (use with --f)")
    parser.add_argument("--f", type=float, default=0.5,
                        help="fraction of latent columns at the first variance")
    parser.add_argument("--profile", default=None,
                        help="single:s | two-block:s1,s2,f | per-dim:v1,...,vm")


def build_parser():
    parser = argparse.ArgumentParser(prog="diffgap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="analytic and finite-matrix spectra of W_t")
    _common(p)
    _profile_flags(p)
    p.add_argument("--t", default="10,1,0.01", help="comma-separated diffusion times")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--grid", type=int, default=256, help="density samples per bulk")

    p = sub.add_parser("condense", help="condensation time over random positions")
    _common(p)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--variances", choices=["aligned", "model"], default="aligned",
                   help="aligned: m coordinates at sigma2; model: eigenvalues of a sampled F F^T")
    p.add_argument("--alpha", type=float, default=0.15)
    p.add_argument("--positions", type=int, default=2000)
    p.add_argument("--position-scale", dest="position_scale", type=float, default=1.0)
    p.add_argument("--mode", choices=["exact", "approximate"], default="exact")

    p = sub.add_parser("estimate-dim", help="dimension sweeps over time or dataset size")
    _common(p)
    _profile_flags(p)
    p.add_argument("--score", default="exact", help="exact | empirical")
    p.add_argument("--t-sweep", dest="t_sweep", default=None, help="lo..hi or comma list")
    p.add_argument("--t-points", dest="t_points", type=int, default=25)
    p.add_argument("--n-sweep", dest="n_sweep", default=None, help="comma-separated N values")
    p.add_argument("--t0", type=float, default=1e-3)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--variant", choices=["forward", "central"], default="forward")
    p.add_argument("--threshold-factor", dest="threshold_factor", type=float, default=5.0)
    p.add_argument("--discard-leading", dest="discard_leading", type=int, default=1)

    p = sub.add_parser("simulate", help="reverse SDE sampling with trajectory diagnostics")
    _common(p)
    _profile_flags(p)
    p.add_argument("--score", default="exact", help="exact | empirical")
    p.add_argument("--N", type=int, default=1000, help="training points for the empirical score")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--t-f", dest="t_f", type=float, default=10.0)
    p.add_argument("--t-0", dest="t_0", type=float, default=1e-3)
    p.add_argument("--schedule", choices=["log", "uniform"], default="log")
    return parser


def _apply_config(args, parser):
    params = {k: v for k, v in vars(args).items() if k not in ("config",)}
    if not args.config:
        return params
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = doc.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    for key, val in doc.items():
        dest = key.replace("-", "_")
        if dest not in params or dest in ("command",):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        params[dest] = val
    return params


# ---------------------------------------------------------------- validation


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate_dims(p):
    _require(isinstance(p["d"], int) and p["d"] >= 2, "--d must be an integer >= 2")
    _require(isinstance(p["m"], int) and 1 <= p["m"] <= p["d"], "--m must satisfy 1 <= m <= d")


def _validate(p):
    cmd = p["command"]
    _require(p["threads"] is None or p["threads"] >= 1, "--threads must be >= 1")
    out = {}
    try:
        if cmd in ("spectrum", "estimate-dim", "simulate"):
            _validate_dims(p)
            profile = _resolve_profile(p)
            profile.column_variances(p["m"])
            out["profile"] = profile
        if cmd == "spectrum":
            ts = _float_list(p["t"])
            _require(len(ts) > 0, "--t must list at least one time")
            _require(all(t > 0 for t in ts), "--t values must be positive")
            _require(p["realizations"] >= 0, "--realizations must be >= 0")
            _require(p["grid"] >= 8, "--grid must be >= 8")
            out["times"] = ts
        elif cmd == "condense":
            _validate_dims(p)
            _require(p["alpha"] > 0, "--alpha must be positive")
            _require(p["positions"] >= 1, "--positions must be >= 1")
            _require(p["sigma2"] > 0, "--sigma2 must be positive")
        elif cmd == "estimate-dim":
            _require(p["score"] in ("exact", "empirical"), f"unknown score kind {p['score']!r}")
            _require(p["repeats"] >= 1, "--repeats must be >= 1")
            _require(p["threshold_factor"] > 0, "--threshold-factor must be positive")
            _require(0 <= p["discard_leading"] <= 3, "--discard-leading must be in 0..3")
            _require(p["t_points"] >= 1, "--t-points must be >= 1")
            times = _time_list(p["t_sweep"], p["t_points"]) if p["t_sweep"] else [p["t0"]]
            _require(len(times) > 0 and all(t > 0 for t in times), "sweep times must be positive")
            ns = _int_list(p["n_sweep"]) if p["n_sweep"] else []
            _require(all(n >= 1 for n in ns), "--n-sweep values must be >= 1")
            if p["score"] == "empirical":
                _require(len(ns) > 0, "the empirical score needs --n-sweep")
            out["times"] = times
            out["ns"] = ns
        elif cmd == "simulate":
            _require(p["score"] in ("exact", "empirical"), f"unknown score kind {p['score']!r}")
            _require(p["steps"] >= 1, "--steps must be >= 1")
            _require(p["samples"] >= 1, "--samples must be >= 1")
            _require(p["t_f"] > p["t_0"] > 0, "need --t-f > --t-0 > 0")
            _require(p["N"] >= 1, "--N must be >= 1")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return out


# ---------------------------------------------------------------- commands


def _outputs(cmd, p, resolved):
    if cmd == "spectrum":
        return ["spectrum_analytic.csv", "spectrum_empirical.csv", "edges.json"]
    if cmd == "condense":
        return ["condense.csv", "condense.json"]
    if cmd == "estimate-dim":
        return ["sv_t{t}_N{N}.csv (one per sweep point)", "dimension_summary.csv"]
    return ["trajectory.csv"]


def _analytic_density(profile, alpha_m, t):
    if profile.kind == "single":
        return rmt.single_variance_density_wt(profile.values[0], alpha_m, t)
    if profile.kind == "two_block":
        s1, s2 = profile.values
        return rmt.two_variance_density_wt(s1, s2, profile.f, alpha_m, t)
    return None


def cmd_spectrum(p, resolved, out):
    profile = resolved["profile"]
    d, m = p["d"], p["m"]
    alpha_m = m / d
    times = resolved["times"]
    rows, edges = [], {"alpha_m": alpha_m, "profile": profile.to_dict(), "times": {},
                       "normalization": "W_t (dimensionless, eigenvalues in [-1, 0])"}
    for t in times:
        dens = _analytic_density(profile, alpha_m, t)
        entry = {}
        if dens is None:
            entry["analytic"] = "not available for per-dimension profiles"
        else:
            for comp, (x, y) in enumerate(dens.sampled(p["grid"])):
                rows.extend((t, comp, xi, yi) for xi, yi in zip(x, y))
            entry.update(dens.to_dict())
            entry["curve"] = rmt.cumulative_dimension_curve(dens, d)
        if profile.kind == "single":
            entry["final_gap"] = final_gap(profile.values[0], alpha_m, t).to_dict()
        elif profile.kind == "two_block":
            s1, s2 = profile.values
            approx = rmt.mixture_approx_edges(s1, s2, profile.f, alpha_m)
            exact = rmt.exact_inner_edges(s1, s2, profile.f, alpha_m)
            entry["mixture_edges"] = {"gamma_plus": approx[0], "gamma_minus": approx[1]}
            if exact is not None:
                entry["exact_inner_edges"] = {"gamma_plus": exact[0], "gamma_minus": exact[1]}
                entry["intermediate_gap"] = intermediate_gap(exact[0], exact[1], t).to_dict()
        edges["times"][repr(float(t))] = entry
    write_csv(out / "spectrum_analytic.csv", ["t", "component", "r", "density"], rows)
    emp_rows = []
    if p["realizations"] > 0:
        pooled = rmt.sample_w_eigenvalues(d, m, profile, times, p["realizations"], p["seed"])
        for t in times:
            vals = pooled[float(t)].reshape(p["realizations"], d)
            for k, row in enumerate(vals):
                emp_rows.extend((t, k, i, r) for i, r in enumerate(np.sort(row)))
            dens = _analytic_density(profile, alpha_m, t)
            if dens is not None:
                edges["times"][repr(float(t))]["ks_distance"] = rmt.ks_distance(vals, dens)
    write_csv(out / "spectrum_empirical.csv", ["t", "realization", "index", "r"], emp_rows)
    write_json(out / "edges.json", edges)
    return f"spectrum: {len(times)} times, {p['realizations']} realizations"


def cmd_condense(p, resolved, out):
    d, m = p["d"], p["m"]
    if p["variances"] == "aligned":
        variances = np.r_[np.full(m, p["sigma2"]), np.zeros(d - m)]
    else:
        variances = sample_projection(d, m, VarianceProfile.single(p["sigma2"]), p["seed"]).gammas
    rng = np.random.default_rng(np.random.SeedSequence(p["seed"], spawn_key=(6,)))
    X = p["position_scale"] * rng.standard_normal((p["positions"], d))
    rows = []
    for x in X:
        rep = empirical.condensation_time(variances, x, p["alpha"], mode=p["mode"])
        rows.append((rep.omega2, np.nan if rep.t_c_exact is None else rep.t_c_exact, rep.t_c_approx))
    write_csv(out / "condense.csv", ["omega2", "t_c_exact", "t_c_approx"], rows)
    origin = empirical.condensation_time(variances, np.zeros(d), p["alpha"], mode=p["mode"])
    summary = {"origin": origin.to_dict(), "positions": len(rows)}
    if p["mode"] == "exact" and len(rows) > 2:
        from scipy.stats import spearmanr
        arr = np.asarray(rows)
        summary["spearman_exact_vs_approx"] = float(spearmanr(arr[:, 1], arr[:, 2])[0])
    write_json(out / "condense.json", summary)
    return f"condense: {len(rows)} positions"


def cmd_estimate_dim(p, resolved, out):
    profile = resolved["profile"]
    d, m = p["d"], p["m"]
    model = sample_projection(d, m, profile, p["seed"])
    x0 = sample_dataset(model, 1, seed=(p["seed"], 1)).points[0]
    ns = resolved["ns"] if p["score"] == "empirical" else [0]
    fields = {}
    if p["score"] == "empirical":
        data = sample_dataset(model, max(ns), seed=p["seed"]).points
        fields = {n: empirical.EmpiricalScore().fit(data[:n]) for n in ns}
    else:
        fields = {0: ExactScore(model)}
    summary = []
    for n in ns:
        for it, t in enumerate(resolved["times"]):
            svs, dims = [], []
            for rep in range(p["repeats"]):
                est = dimension.estimate_singular_values(
                    fields[n], x0, t, p["variant"], (p["seed"], n, it, rep), p["discard_leading"])
                svs.append(est.singular_values)
                dims.append(dimension.detect_dimension(est, p["threshold_factor"]).dimension_or_zero())
            svs = np.asarray(svs)
            dims = np.asarray(dims, dtype=float)
            reps = p["repeats"]
            sv_sem = svs.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(d)
            write_csv(out / f"sv_t{t:.6g}_N{n}.csv", ["index", "normalized_sv", "normalized_sv_sem"],
                      zip(range(d), svs.mean(axis=0), sv_sem))
            dim_sem = dims.std(ddof=1) / np.sqrt(reps) if reps > 1 else 0.0
            summary.append((t, n, dims.mean(), dim_sem))
    write_csv(out / "dimension_summary.csv", ["t", "N", "dim_mean", "dim_sem"], summary)
    return f"estimate-dim: {len(summary)} sweep points"


def cmd_simulate(p, resolved, out):
    profile = resolved["profile"]
    model = sample_projection(p["d"], p["m"], profile, p["seed"])
    if p["score"] == "exact":
        field = ExactScore(model)
    else:
        field = empirical.EmpiricalScore().fit(sample_dataset(model, p["N"], seed=p["seed"]).points)
    subspaces = None
    header = ["t", "orth_residual_mean"]
    if profile.kind == "two_block":
        n1, n2 = profile.block_sizes(p["m"])
        # eigen-directions are ordered by decreasing variance
        subspaces = [np.arange(n1), np.arange(n1, n1 + n2)]
        header += ["tangent_var_high", "tangent_var_low"]
    else:
        header += ["tangent_var"]
    rec = sde.reverse_sample(field, p["t_f"], p["t_0"], p["steps"], p["samples"], p["seed"],
                             schedule=p["schedule"], model=model, subspaces=subspaces,
                             threads=p["threads"])
    write_csv(out / "trajectory.csv", header, rec.rows())
    return f"simulate: {len(rec.times)} steps, {p['samples']} samples"


COMMANDS = {
    "spectrum": cmd_spectrum,
    "condense": cmd_condense,
    "estimate-dim": cmd_estimate_dim,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = _apply_config(args, parser)
        resolved = _validate(params)
    except ConfigError as exc:
        print(f"diffgap {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    out = Path(params["out"] or os.environ.get(OUTPUT_ENV) or ".")
    if params["dry_run"]:
        plan = {"command": args.command, "output_dir": str(out),
                "outputs": _outputs(args.command, params, resolved),
                "params": {k: v for k, v in params.items() if k != "dry_run"}}
        if "times" in resolved:
            plan["times"] = resolved["times"]
        print(json.dumps(_jsonable(plan), indent=2, sort_keys=True))
        return 0
    try:
        out.mkdir(parents=True, exist_ok=True)
        msg = COMMANDS[args.command](params, resolved, out)
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"diffgap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
