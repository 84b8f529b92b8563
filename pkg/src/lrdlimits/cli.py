"""Experiment harness: config resolution, orchestration, reports.

One JSON config file per experiment; every key has a default and flags
override file values (diffable manifests stay the source of truth for what
ran). Outputs are long-format tables plus a manifest JSON echoing the
resolved config and library version. (config, seed) determines every output
byte; progress lines on stdout are best-effort and outside that contract.

Exit codes: 0 success, 2 validation, 3 numerical/accuracy, 4 consistency.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import LrdError, ValidationError
from .io import write_json, write_table
from .model import ModelParams, scaling_d_T
from . import spectra as sp
from . import rosenblatt as rb
from . import fieldsim as fs
from . import convex as cx

__all__ = ["resolve_config", "main", "run_command"]

_DEFAULTS = {
    "mode": "sphere",
    "model": {"d": 2, "gamma": 1.0, "alpha_s": 0.3, "alpha_t": 0.25,
              "svf": "constant", "rho_s": 2.0, "rho_t": 2.0},
    "truncations": {"n_max": 30, "k_max": 50, "n_nodes": 1600, "m_max": 4},
    "horizons": [10.0, 100.0],
    "sampling": {"n_replicates": 1000, "seed": 0, "mc_samples": 200000},
    "cf": {"xi_min": -0.3, "xi_max": 0.3, "n_xi": 21, "xi_probe": 0.2,
           "series_orders": 40},
    # defaults keep the planned grid small; raise the exponents deliberately
    "convex": {"kind": "box", "half_widths": [1.0, 1.0], "radius": 1.0,
               "dim": 2, "alpha_s": 0.1, "alpha_t": 0.1,
               "points_per_period": 6, "tail_budget": 0.01,
               "riesz_samples": 400000},
    "output": {"dir": ".", "format": "csv"},
    "threads": 1,
}


def _merge(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ValidationError(f"config section {path or 'root'} must be an object")
    out = {}
    for k, v in defaults.items():
        if k in override and isinstance(v, dict):
            out[k] = _merge(v, override[k], f"{path}{k}.")
        elif k in override:
            out[k] = override[k]
        else:
            out[k] = v
    extra = set(override) - set(defaults)
    if extra:
        raise ValidationError(
            f"unknown config keys {sorted(path + k for k in extra)}")
    return out


def resolve_config(config_path=None, seed=None, out_dir=None, fmt=None,
                   threads=None):
    """Defaults <- config file <- flags, validated; returns a plain dict."""
    file_cfg = {}
    if config_path is not None:
        try:
            with open(config_path) as f:
                file_cfg = json.load(f)
        except OSError as e:
            raise ValidationError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from e
    cfg = _merge(_DEFAULTS, file_cfg)
    if seed is not None:
        cfg["sampling"]["seed"] = seed
    if out_dir is not None:
        cfg["output"]["dir"] = out_dir
    if fmt is not None:
        cfg["output"]["format"] = fmt
    if threads is not None:
        cfg["threads"] = threads
    if cfg["mode"] not in ("sphere", "convex"):
        raise ValidationError(f"mode must be 'sphere' or 'convex', got {cfg['mode']!r}")
    if cfg["output"]["format"] not in ("csv", "json"):
        raise ValidationError("output format must be 'csv' or 'json'")
    s = cfg["sampling"]["seed"]
    if not isinstance(s, int) or not 0 <= s < 2 ** 64:
        raise ValidationError("seed must be an integer in [0, 2^64)")
    t = cfg["threads"]
    if not isinstance(t, int) or t < 1:
        raise ValidationError("threads must be a positive integer")
    hs = cfg["horizons"]
    if not hs or any(not float(T) >= 1.0 for T in hs):
        raise ValidationError("horizons must be a nonempty list of T >= 1")
    cfg["horizons"] = [float(T) for T in hs]
    return cfg


def _apply_threads(n):
    # best-effort; replicate fan-out is worker-count independent by design
    try:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except Exception:
        pass


def _model(cfg):
    return ModelParams.from_dict(cfg["model"])


def _out(cfg, name):
    d = cfg["output"]["dir"]
    os.makedirs(d, exist_ok=True)
    ext = cfg["output"]["format"]
    return os.path.join(d, f"{name}.{ext}")


def _manifest(cfg, command, files):
    path = os.path.join(cfg["output"]["dir"], f"{command}_manifest.json")
    write_json(path, {
        "library": "lrdlimits",
        "version": __version__,
        "command": command,
        "config": cfg,
        "files": sorted(os.path.basename(f) for f in files),
    })
    return path


def _riesz_spectrum(cfg, p):
    tr = cfg["truncations"]
    return sp.riesz_spectrum(p.alpha_s, p.alpha_t, d=p.d,
                             n_max=int(tr["n_max"]), k_max=int(tr["k_max"]))


def _trace_rows(spec, m_max):
    rows = []
    for m in range(2, m_max + 1):
        det = sp.trace_power_detail(spec, m)
        rows.append((m, det.value, det.tail_bound, "trace-power-completed",
                     det.head_spatial, det.tail_spatial, det.head_temporal,
                     det.tail_temporal))
    return rows


def cmd_spectra(cfg):
    p = _model(cfg).validate_for_mode("sphere")
    tr = cfg["truncations"]
    fmt = cfg["output"]["format"]
    spec = _riesz_spectrum(cfg, p)
    files = []
    rows = [("spatial", int(n), float(spec.spatial.coeffs[n]),
             int(spec.spatial.dims[n]), 0.0, "funk-hecke")
            for n in range(spec.spatial.coeffs.size)]
    rows += [("temporal", k + 1, float(spec.temporal.coeffs[k]), 1, 0.0,
              "nystrom-richardson")
             for k in range(spec.temporal.coeffs.size)]
    files.append(write_table(
        _out(cfg, "spectra_riesz"),
        ["part", "index", "eigenvalue", "multiplicity", "err", "method"],
        rows, fmt))
    arows, trows = [], []
    for T in cfg["horizons"]:
        ang = sp.angular_coeffs(p, T ** p.gamma, int(tr["n_max"]))
        arows += [(T, int(n), float(ang.coeffs[n]), int(ang.dims[n]), 0.0,
                   "funk-hecke") for n in range(ang.coeffs.size)]
        temps = sp.temporal_eigs(p, 0, T, k_max=int(tr["k_max"]),
                                 n_nodes=int(tr["n_nodes"]))
        err = np.abs(temps.eigenvalues - temps.raw_eigenvalues)
        trows += [(T, k + 1, float(temps.eigenvalues[k]), 1, float(err[k]),
                   "nystrom-richardson") for k in range(temps.eigenvalues.size)]
    files.append(write_table(
        _out(cfg, "spectra_angular"),
        ["T", "degree", "coeff", "multiplicity", "err", "method"], arows, fmt))
    files.append(write_table(
        _out(cfg, "spectra_temporal"),
        ["T", "index", "eigenvalue", "multiplicity", "err", "method"], trows, fmt))
    files.append(write_table(
        _out(cfg, "spectra_tails"),
        ["m", "trace_power", "tail_bound", "method", "head_spatial",
         "tail_spatial", "head_temporal", "tail_temporal"],
        _trace_rows(spec, int(tr["m_max"])), fmt))
    return files


def cmd_cumulants(cfg):
    p = _model(cfg).validate_for_mode("sphere")
    tr = cfg["truncations"]
    m_max = int(tr["m_max"])
    if m_max < 2:
        raise ValidationError(
            "cumulant orders start at m = 2: the m = 1 trace of the Riesz "
            "operator diverges (the kernel is not integrable on the diagonal)")
    fmt = cfg["output"]["format"]
    spec = _riesz_spectrum(cfg, p)
    table = rb.cumulants_spectral(spec, m_max)
    rows = [(int(m), float(v), float(e), "spectral")
            for m, v, e in zip(table.m_range, table.values, table.stderr)]
    n_mc = int(cfg["sampling"]["mc_samples"])
    seed = int(cfg["sampling"]["seed"])
    report = []
    for m in (2, 3):
        if m > m_max:
            continue
        mc = rb.cumulants_montecarlo(p, m, n_mc, seed)
        rows.append((m, float(mc.values[0]), float(mc.stderr[0]), "montecarlo"))
        se = math.hypot(float(mc.stderr[0]), float(table.stderr[m - 2]))
        z = (float(mc.values[0]) - table.value(m)) / se
        report.append({"m": m, "spectral": table.value(m),
                       "montecarlo": float(mc.values[0]),
                       "combined_stderr": se, "z": z,
                       "agree_3se": bool(abs(z) <= 3.0)})
    files = [write_table(_out(cfg, "cumulants"),
                         ["m", "value", "err", "method"], rows, fmt)]
    files.append(write_json(
        os.path.join(cfg["output"]["dir"], "cumulants_report.json"),
        {"dual_route": report, "n_mc": n_mc, "seed": seed}))
    return files


def cmd_cf(cfg):
    p = _model(cfg).validate_for_mode("sphere")
    fmt = cfg["output"]["format"]
    c = cfg["cf"]
    xi = np.linspace(float(c["xi_min"]), float(c["xi_max"]), int(c["n_xi"]))
    spec = _riesz_spectrum(cfg, p)
    prod = rb.limit_cf_product(spec, xi)
    rows = [(float(x), float(v.real), float(v.imag), 0.0, "eigen-product")
            for x, v in zip(prod.xi_grid, prod.values)]
    table = rb.cumulants_spectral(spec, int(c["series_orders"]))
    radius = rb._series_radius(table)
    inside = np.abs(xi) < radius
    if np.any(inside):
        ser = rb.limit_cf(table, xi[inside], clip=False)
        rows += [(float(x), float(v.real), float(v.imag), 0.0, "cumulant-series")
                 for x, v in zip(ser.xi_grid, ser.values)]
    files = [write_table(_out(cfg, "cf_curve"),
                         ["xi", "re", "im", "err", "method"], rows, fmt)]
    files.append(write_json(
        os.path.join(cfg["output"]["dir"], "cf_report.json"),
        {"series_radius": float(radius),
         "n_series_points": int(np.count_nonzero(inside))}))
    return files


def cmd_converge(cfg):
    if cfg["mode"] != "sphere":
        raise ValidationError("converge runs in sphere mode")
    p = _model(cfg).validate_for_mode("sphere")
    tr = cfg["truncations"]
    fmt = cfg["output"]["format"]
    seed = int(cfg["sampling"]["seed"])
    n_rep = int(cfg["sampling"]["n_replicates"])
    probe = float(cfg["cf"]["xi_probe"])
    spec = _riesz_spectrum(cfg, p)
    psi_lim = complex(rb.limit_cf_product(spec, np.array([probe])).values[0])
    det2 = sp.trace_power_detail(spec, 2)
    # truncation allowance for a CF value: 2 xi^2 * (completed - head) mass
    cf_budget = 2.0 * probe * probe * (det2.value - det2.truncated
                                       + det2.tail_bound)
    cf_rows, gap_rows, tail_rows = [], [], []
    for T in cfg["horizons"]:
        ang = sp.angular_coeffs(p, T ** p.gamma, int(tr["n_max"]))
        temps = sp.temporal_eigs(p, 0, T, k_max=int(tr["k_max"]),
                                 n_nodes=int(tr["n_nodes"]))
        d_T = scaling_d_T(p, "sphere", T)
        psi_T = complex(rb.finite_T_cf(ang, temps, d_T,
                                       np.array([probe])).values[0])
        cf_rows.append((T, probe, abs(psi_T - psi_lim), 2.0 * cf_budget,
                        "fredholm-product"))
        dw = fs.coupled_gap_weights(spec, ang, temps, d_T)
        analytic = 2.0 * float(np.sum(dw * dw))
        g = rb.sample_quadratic_form(dw, n_rep, seed)
        g2 = g * g
        est = float(g2.mean())
        se = float(g2.std(ddof=1) / math.sqrt(n_rep))
        gap_rows.append((T, analytic, 0.0, "coupled-weights-analytic"))
        gap_rows.append((T, est, se, "coupled-weights-sampled"))
        w_T = fs.flat_weights(ang, temps) / d_T
        tail_rows.append((f"T={T!r}", float(np.sum(w_T * w_T)), 0.0,
                          "finite-T-truncated-hs-mass"))
    w_inf = rb.series_weights(spec)
    tail_rows.append(("limit", float(np.sum(w_inf * w_inf)), 0.0,
                      "limit-truncated-hs-mass"))
    for m, v, b, meth, *_ in _trace_rows(spec, int(tr["m_max"])):
        tail_rows.append((f"c_{m}", v, b, meth))
    table = rb.cumulants_spectral(spec, int(tr["m_max"]))
    cum_rows = [(int(m), float(v), float(e), "spectral")
                for m, v, e in zip(table.m_range, table.values, table.stderr)]
    files = [
        write_table(_out(cfg, "converge_cf"),
                    ["T", "xi", "distance", "err", "method"], cf_rows, fmt),
        write_table(_out(cfg, "converge_gap"),
                    ["T", "mean_square_gap", "err", "method"], gap_rows, fmt),
        write_table(_out(cfg, "converge_cumulants"),
                    ["m", "value", "err", "method"], cum_rows, fmt),
        write_table(_out(cfg, "converge_tails"),
                    ["quantity", "value", "err", "method"], tail_rows, fmt),
    ]
    return files


def _convex_setup(cfg):
    cv = cfg["convex"]
    kind = cv["kind"]
    if kind == "box":
        body = cx.box_body(cv["half_widths"])
    elif kind == "ball":
        body = cx.ball_body(float(cv["radius"]), int(cv["dim"]))
    else:
        raise ValidationError(f"convex kind must be 'box' or 'ball', got {kind!r}")
    a_s = float(cv["alpha_s"])
    a_t = float(cv["alpha_t"])
    m = dict(cfg["model"])
    m["d"] = body.dim - 1
    m["alpha_s"] = a_s
    m["alpha_t"] = a_t
    p = ModelParams.from_dict(m).validate_for_mode("convex")
    grid, plan = cx.plan_spectral_grid(body, a_s, a_t,
                                       tail_budget=float(cv["tail_budget"]),
                                       points_per_period=int(cv["points_per_period"]))
    return body, p, grid, plan


def cmd_convex(cfg):
    if cfg["mode"] != "convex":
        raise ValidationError("the convex command runs in convex mode")
    body, p, grid, plan = _convex_setup(cfg)
    seed = int(cfg["sampling"]["seed"])
    n_rep = int(cfg["sampling"]["n_replicates"])
    v_spec = cx.spectral_variance(body, p, grid)
    report = {
        "body": body.to_dict(),
        "grid": {**grid.to_dict(), **plan},
        "alpha_s": p.alpha_s,
        "alpha_t": p.alpha_t,
        "riesz_constant": cx.riesz_constant(body.dim, p.alpha_s, p.alpha_t),
        "spectral_variance": v_spec,
    }
    files = []
    if n_rep > 0:
        est = cx.riesz_double_integral(body, p.alpha_s, p.alpha_t,
                                       n_samples=int(cfg["convex"]["riesz_samples"]),
                                       seed=seed)
        s = cx.sample_convex_limit(body, p, grid, n_rep, seed)
        v = float(s.var(ddof=1))
        kurt = float(np.mean((s - s.mean()) ** 4)) / v ** 2
        se_v = v * math.sqrt(max(kurt - 1.0, 0.0) / n_rep)
        target = est.value / 2.0
        se = math.hypot(se_v, est.stderr / 2.0)
        z = (v - target) / se
        report["riesz_double_integral"] = {
            "value": est.value, "stderr": est.stderr,
            "n_samples": est.n_samples, "method": est.method}
        report["variance_duality"] = {
            "sample_variance": v, "sample_stderr": se_v,
            "target_half_integral": target, "combined_stderr": se,
            "z": z, "pass_3se": bool(abs(z) <= 3.0)}
        files.append(write_table(
            _out(cfg, "convex_samples"), ["replicate", "value"],
            [(i, float(x)) for i, x in enumerate(s)],
            cfg["output"]["format"]))
    files.append(write_json(
        os.path.join(cfg["output"]["dir"], "convex_report.json"), report))
    return files


def cmd_sample(cfg):
    seed = int(cfg["sampling"]["seed"])
    n_rep = int(cfg["sampling"]["n_replicates"])
    if n_rep < 1:
        raise ValidationError("sample needs n_replicates >= 1")
    if cfg["mode"] == "sphere":
        p = _model(cfg).validate_for_mode("sphere")
        spec = _riesz_spectrum(cfg, p)
        s = rb.sample_S_infinity(spec, n_rep, seed)
    else:
        body, p, grid, _ = _convex_setup(cfg)
        s = cx.sample_convex_limit(body, p, grid, n_rep, seed)
    return [write_table(_out(cfg, "samples"), ["replicate", "value"],
                        [(i, float(x)) for i, x in enumerate(s)],
                        cfg["output"]["format"])]


_COMMANDS = {
    "spectra": cmd_spectra,
    "cumulants": cmd_cumulants,
    "cf": cmd_cf,
    "converge": cmd_converge,
    "convex": cmd_convex,
    "sample": cmd_sample,
}


def run_command(command, cfg):
    """Run one subcommand on a resolved config; returns written file paths."""
    if command not in _COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    os.makedirs(cfg["output"]["dir"], exist_ok=True)
    _apply_threads(cfg["threads"])
    files = _COMMANDS[command](cfg)
    files.append(_manifest(cfg, command, files))
    return files


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="lrdlimits",
        description="LRD spatiotemporal limit experiments")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", metavar="PATH", default=None)
    ap.add_argument("--seed", type=int, default=None, metavar="U64")
    ap.add_argument("--out", default=None, metavar="DIR")
    ap.add_argument("--format", default=None, choices=["csv", "json"])
    ap.add_argument("--threads", type=int, default=None, metavar="N")
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.seed, args.out, args.format,
                             args.threads)
        files = run_command(args.command, cfg)
    except LrdError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    for f in files:
        print(f"wrote {f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
