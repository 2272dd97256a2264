"""Command line front-end: ``tube-spectra <study> [options]``.

Every study writes deterministic CSV (and sometimes JSON) files into the
output directory.  A JSON config file may hold top-level defaults and one
section per study; command line flags override it::

    {"domain": "hersch", "out": "runs/a", "eig": {"R": 8, "h": 0.04, "k": 3}}

Exit codes: 0 success, 1 a study failed, 2 invalid usage or configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import ConfigError, TubeSpectraError
from .workers import THREADS_ENV, thread_count

log = logging.getLogger("tube_spectra")

STUDIES = ("eig", "exhaust", "decay", "weyl", "torsion", "blowup", "perturb", "inradius")
DOMAINS = ("unit_square", "diamond", "slit_disk", "hersch", "cross", "broken_strip")


# --------------------------------------------------------------------------
# configuration


def _pos(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ConfigError(key, f"expected a positive number, got {v!r}")
    return float(v)


def _pos_int(key, v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(key, f"expected a positive integer, got {v!r}")
    return v


def _nonneg_int(key, v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ConfigError(key, f"expected a nonnegative integer, got {v!r}")
    return v


def _number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a number, got {v!r}")
    return float(v)


def _schedule(order):
    def check(key, v):
        if isinstance(v, str):
            try:
                v = [float(x) for x in v.split(",") if x.strip()]
            except ValueError:
                raise ConfigError(key, f"expected comma separated numbers, got {v!r}") from None
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError(key, "expected a nonempty list of numbers")
        out = [_pos(f"{key}[{i}]", x) for i, x in enumerate(v)]
        if order == "inc" and any(b <= a for a, b in zip(out, out[1:])):
            raise ConfigError(key, "schedule must be strictly increasing")
        if order == "dec" and any(b >= a for a, b in zip(out, out[1:])):
            raise ConfigError(key, "schedule must be strictly decreasing")
        return out

    return check


def _numbers(key, v):
    return _schedule(None)(key, v)


def _choice(options):
    def check(key, v):
        if v not in options:
            raise ConfigError(key, f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return check


def _text(key, v):
    if not isinstance(v, str) or not v:
        raise ConfigError(key, f"expected a nonempty string, got {v!r}")
    return v


# key -> (validator, default); None defaults mean "study decides"
COMMON = {
    "domain": (_choice(DOMAINS), "hersch"),
    "theta": (_pos, 1.0),
    "out": (_text, "."),
    "seed": (_nonneg_int, 0),
    "tol": (_pos, 1e-9),
}
SCHEMA = {
    "eig": {"R": (_pos, 8.0), "h": (_pos, 0.05), "k": (_pos_int, 1)},
    "exhaust": {"R": (_schedule("inc"), [4.0, 6.0, 8.0, 10.0]), "h": (_pos, 0.05), "k": (_pos_int, 1)},
    "decay": {"R": (_pos, 12.0), "h": (_pos, 0.05), "step": (_pos, 0.5)},
    "weyl": {"lam": (_numbers, [math.pi**2]), "n": (_numbers, [1, 2, 4, 8]), "h": (_pos, 1 / 64), "r0": (_pos, 2.0)},
    "torsion": {"eps": (_schedule("dec"), [0.05, 0.025, 0.0125]), "x": (_pos, 2.5), "f": (_number, 1.0), "h": (_pos, 0.05), "alpha": (_pos, None)},
    "blowup": {"R_inf": (_schedule("inc"), [8.0, 16.0, 32.0]), "L": (_schedule("inc"), [4.0, 8.0]), "h_sigma": (_pos, 1 / 64), "fd_h": (_pos, 1 / 32)},
    "perturb": {"n": (_nonneg_int, 3), "eps": (_schedule("dec"), [0.05, 0.025, 0.0125]), "h": (_pos, 0.05), "R": (_pos, 8.0), "alpha": (_pos, None)},
    "inradius": {"n": (_nonneg_int, 0), "eps": (_pos, None), "grid_h": (_pos, 0.01), "R": (_pos, 8.0)},
}


def load_config(path) -> dict:
    """Parse a JSON config file; syntax errors raise ConfigError naming the file position."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        keys = re.findall(r'"((?:[^"\\]|\\.)*)"\s*:', text[: e.pos])
        where = keys[-1] if keys else "config"
        raise ConfigError(where, f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return data


def resolve(study: str, config: dict, flags: dict) -> dict:
    """Merge defaults, config file (top level then study section) and flags; validate."""
    schema = dict(COMMON, **SCHEMA[study])
    known_top = set(COMMON) | set(SCHEMA)
    for key in config:
        if key not in known_top:
            raise ConfigError(key, "unknown key")
    section = config.get(study, {})
    if not isinstance(section, dict):
        raise ConfigError(study, "study section must be an object")
    for key in section:
        if key not in schema:
            raise ConfigError(f"{study}.{key}", "unknown key")
    out = {}
    for key, (check, default) in schema.items():
        src, val = None, default
        if key in COMMON and key in config:
            src, val = key, config[key]
        if key in section:
            src, val = f"{study}.{key}", section[key]
        if flags.get(key) is not None:
            src, val = f"--{key}", flags[key]
        out[key] = check(src or key, val) if val is not None else None
    return out


def build_domain(cfg: dict) -> geo.DomainSpec:
    name = cfg["domain"]
    if name == "broken_strip":
        return geo.build_broken_strip(cfg["theta"])
    return {
        "unit_square": geo.build_unit_square,
        "diamond": geo.build_diamond,
        "slit_disk": geo.build_slit_disk,
        "hersch": geo.build_hersch_pipe,
        "cross": geo.build_infinite_cross,
    }[name]()


# --------------------------------------------------------------------------
# studies


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    log.info("wrote %s", p)
    return p


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _R_or_none(spec, R):
    return R if spec.infinite_tubes else None


def run_eig(cfg, out):
    from .spectra import solve_eigs

    spec = build_domain(cfg)
    res = solve_eigs(spec, _R_or_none(spec, cfg["R"]), cfg["h"], cfg["k"], cfg["tol"], seed=cfg["seed"])
    rows = [[j + 1, repr(float(lam)), repr(float(r))] for j, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals))]
    _write(out, "eig.csv", _csv(("j", "lambda", "residual"), rows))


def run_exhaust(cfg, out):
    from .spectra import exhaustion_study

    study = exhaustion_study(build_domain(cfg), cfg["R"], cfg["h"], cfg["k"], cfg["tol"], seed=cfg["seed"])
    _write(out, "exhaustion.csv", study.to_csv())
    _write(out, "exhaustion.json", study.to_json())


def run_decay(cfg, out):
    from .decay import compute_tail_profile, paper_decay_constants, verify_decay_bounds
    from .spectra import solve_eigs

    spec = build_domain(cfg)
    if not spec.infinite_tubes:
        raise ConfigError("domain", "decay needs a domain with infinite tubes")
    eig = solve_eigs(spec, cfg["R"], cfg["h"], 1, cfg["tol"], seed=cfg["seed"])
    prof = compute_tail_profile(eig, spec, step=cfg["step"])
    consts = paper_decay_constants(geo.threshold_energy(spec), float(eig.eigenvalues[0]), eig.mesh.domain.r0)
    check = verify_decay_bounds(prof, consts)
    _write(out, "decay.csv", check.to_csv())
    _write(out, "decay_constants.json", consts.to_json())
    if not check.passed:
        raise TubeSpectraError("tail bound violated")


def run_weyl(cfg, out):
    from .weyl import essential_threshold_report

    ns = [int(n) for n in cfg["n"]]
    if any(n != m for n, m in zip(ns, cfg["n"])):
        raise ConfigError("n", "expected integers")
    rep = essential_threshold_report(build_domain(cfg), cfg["lam"], ns, cfg["h"], r0=cfg["r0"], tol=cfg["tol"])
    _write(out, "weyl.csv", rep.to_csv())


def _alpha(cfg, out):
    if cfg.get("alpha") is not None:
        return cfg["alpha"]
    from .torsion import blow_up_constant

    res = blow_up_constant()
    _write(out, "blowup.csv", res.to_csv())
    return res.alpha


def run_torsion(cfg, out):
    from .torsion import epsilon_scaling_study

    study = epsilon_scaling_study(_alpha(cfg, out), (cfg["x"], 1.0), cfg["f"], cfg["eps"], cfg["h"])
    _write(out, "torsion.csv", study.to_csv())


def run_blowup(cfg, out):
    from .torsion import blow_up_constant

    res = blow_up_constant(cfg["R_inf"], cfg["L"], cfg["h_sigma"], fd_h=cfg["fd_h"])
    _write(out, "blowup.csv", res.to_csv())
    summary = {"alpha": res.alpha, "order": res.order, "L_effect": res.L_effect, "fd_alpha": res.fd_alpha, "fd_deviation": res.fd_deviation}
    _write(out, "blowup.json", json.dumps(summary, indent=2, sort_keys=True))


def run_perturb(cfg, out):
    from . import perturb as pt

    prof = pt.normal_derivative_profile(pt.hersch_ground_states(R=cfg["R"]))
    policy = pt.MeshPolicy(h=cfg["h"], R=cfg["R"]) if cfg["n"] <= 64 else pt.MeshPolicy(cfg["h"], cfg["R"], 4, 0.5, 2.0)
    rep = pt.rho_verdict(cfg["n"], cfg["eps"], prof, _alpha(cfg, out), prof.lambdas[-1], policy)
    _write(out, "perturb.csv", rep.to_csv())
    _write(out, "perturb.json", rep.to_json())


def run_inradius(cfg, out):
    spec = build_domain(cfg)
    if cfg["eps"] is not None:
        if spec.name != "hersch":
            raise ConfigError("eps", "tubes attach to the hersch domain only")
        spec = geo.attach_perturbation_tubes(spec, cfg["n"], cfg["eps"])
    r = geo.inradius(spec, grid_h=cfg["grid_h"], R=cfg["R"] if spec.infinite_tubes else None)
    _write(out, "inradius.json", json.dumps({"radius": r.radius, "center": list(r.center), "radius2": r.radius**2}, indent=2))


RUNNERS = {
    "eig": run_eig,
    "exhaust": run_exhaust,
    "decay": run_decay,
    "weyl": run_weyl,
    "torsion": run_torsion,
    "blowup": run_blowup,
    "perturb": run_perturb,
    "inradius": run_inradius,
}


def run(study: str, cfg: dict) -> int:
    """Run one resolved study; returns the exit status."""
    RUNNERS[study](cfg, Path(cfg["out"]))
    return 0


# --------------------------------------------------------------------------
# SVG plots

PLOT_KINDS = {
    # kind: (x column, y column, log y, group column)
    "decay": ("R", "A", True, None),
    "exhaustion": ("R", "lambda", False, "j"),
    "weyl": ("n", "dual_residual", True, "lambda"),
    "torsion": ("eps", "T_over_eps2", False, None),
    "perturb": ("eps", "drop_over_eps2", False, "n"),
}


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def plot_csv(path, kind: str | None = None, width: int = 640, height: int = 420) -> str:
    """SVG 1.1 polyline plot of a study CSV.

    Raises
    ------
    ConfigError
        If the CSV is empty or its columns do not match the plot kind.
    """
    text = Path(path).read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ConfigError("csv", f"{path} has no data rows")
    cols = set(rows[0])
    if kind is None:
        kind = next((k for k, (x, y, _, _) in PLOT_KINDS.items() if {x, y} <= cols), None)
        if kind is None:
            raise ConfigError("csv", f"unrecognized columns {sorted(cols)}")
    if kind not in PLOT_KINDS:
        raise ConfigError("kind", f"expected one of {', '.join(PLOT_KINDS)}")
    xc, yc, logy, gc = PLOT_KINDS[kind]
    if not {xc, yc} <= cols:
        raise ConfigError("csv", f"kind {kind!r} needs columns {xc!r} and {yc!r}")
    groups: dict = {}
    for r in rows:
        try:
            x, y = float(r[xc]), float(r[yc])
        except ValueError:
            continue
        if logy and y <= 0:
            continue
        groups.setdefault(r.get(gc, "") if gc else "", []).append((x, math.log10(y) if logy else y))
    if not groups:
        raise ConfigError("csv", f"no numeric {xc}/{yc} pairs")
    pts = np.array([p for g in groups.values() for p in g])
    x0, x1 = pts[:, 0].min(), pts[:, 0].max()
    y0, y1 = pts[:, 1].min(), pts[:, 1].max()
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    ml, mr, mt, mb = 70, 20, 20, 50
    W, H = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * W

    def sy(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * H

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{ml}" y="{mt}" width="{W}" height="{H}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{mt + H + 18}" font-size="11" text-anchor="middle">{t:.4g}</text>')
    for t in _nice_ticks(y0, y1):
        lab = f"1e{t:.3g}" if logy else f"{t:.4g}"
        out.append(f'<text x="{ml - 6}" y="{sy(t) + 4:.2f}" font-size="11" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + W / 2}" y="{height - 10}" font-size="12" text-anchor="middle">{xc}</text>')
    out.append(f'<text x="14" y="{mt + H / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {mt + H / 2})">{yc}{" (log10)" if logy else ""}</text>')
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    for k, (g, p) in enumerate(sorted(groups.items())):
        p = sorted(p)
        color = palette[k % len(palette)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        for x, y in p:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        if g:
            out.append(f'<text x="{ml + W - 4}" y="{mt + 14 + 14 * k}" font-size="11" text-anchor="end" fill="{color}">{gc}={g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tube-spectra", description="Dirichlet spectra of domains with tubes")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--threads", type=int, help=f"worker threads (overrides {THREADS_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="study", required=True)

    def common(sp):
        sp.add_argument("--domain", choices=DOMAINS)
        sp.add_argument("--theta", type=float, help="bend angle of broken_strip")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)

    sp = sub.add_parser("eig", help="lowest eigenpairs")
    common(sp)
    sp.add_argument("--R", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--k", type=int)
    sp = sub.add_parser("exhaust", help="eigenvalues along an R schedule")
    common(sp)
    sp.add_argument("--R", help="comma separated radii")
    sp.add_argument("--h", type=float)
    sp.add_argument("--k", type=int)
    sp = sub.add_parser("decay", help="tail profile of u_1 against the explicit bound")
    common(sp)
    sp.add_argument("--R", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--step", type=float)
    sp = sub.add_parser("weyl", help="singular Weyl sequence diagnostics")
    common(sp)
    sp.add_argument("--lam", help="comma separated levels")
    sp.add_argument("--n", help="comma separated sequence indices")
    sp.add_argument("--h", type=float)
    sp.add_argument("--r0", type=float)
    sp = sub.add_parser("torsion", help="T(eps)/eps^2 for one tube on H")
    common(sp)
    sp.add_argument("--eps", help="comma separated, decreasing")
    sp.add_argument("--x", type=float, help="tube centre on y = 1")
    sp.add_argument("--f", type=float, help="constant load")
    sp.add_argument("--h", type=float)
    sp.add_argument("--alpha", type=float, help="skip the blow-up solve")
    sp = sub.add_parser("blowup", help="blow-up constant alpha")
    common(sp)
    sp.add_argument("--R_inf", help="comma separated, increasing")
    sp.add_argument("--L", help="comma separated, increasing")
    sp.add_argument("--h_sigma", type=float)
    sp.add_argument("--fd_h", type=float)
    sp = sub.add_parser("perturb", help="eigenvalue drop and rho verdict")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--eps", help="comma separated, decreasing")
    sp.add_argument("--h", type=float)
    sp.add_argument("--R", type=float)
    sp.add_argument("--alpha", type=float, help="skip the blow-up solve")
    sp = sub.add_parser("inradius", help="inradius of a domain")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--grid_h", type=float)
    sp.add_argument("--R", type=float)
    sp = sub.add_parser("plot", help="SVG plot of a study CSV")
    sp.add_argument("csv")
    sp.add_argument("--kind", choices=tuple(PLOT_KINDS))
    sp.add_argument("-o", "--output", help="SVG path (default: next to the CSV)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads", f"expected a positive integer, got {args.threads}")
            os.environ[THREADS_ENV] = str(args.threads)
        thread_count()
        if args.study == "plot":
            svg = plot_csv(args.csv, args.kind)
            target = Path(args.output) if args.output else Path(args.csv).with_suffix(".svg")
            target.write_text(svg)
            return 0
        config = load_config(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k not in ("config", "threads", "verbose", "study")}
        cfg = resolve(args.study, config, flags)
    except ConfigError as e:
        print(f"tube-spectra: error: {e}", file=sys.stderr)
        return 2
    try:
        return run(args.study, cfg)
    except ConfigError as e:
        print(f"tube-spectra: error: {e}", file=sys.stderr)
        return 2
    except TubeSpectraError as e:
        print(f"tube-spectra: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
