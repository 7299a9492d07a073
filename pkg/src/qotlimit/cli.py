"""Command-line front end.

Usage::

    qotlimit constants --d 1
    qotlimit solve --family identity --d 1 --n 2000 --eps 1e-3
    qotlimit sweep --family identity --d 1 --n 4000 --eps 1e-2:1e-4:5log
    qotlimit sandwich --family identity --d 1 --n 4000 --delta 0.05 --eps 1e-2,1e-3,1e-4
    qotlimit couple --family identity --d 1 --n 4000 --delta 0.1 --eps 1e-3
    qotlimit pme-check --d 1
    qotlimit plot rate out/report.csv

Every option can also come from ``--config FILE``: a flat ``key = value``
file (``#`` starts a comment) with the keys listed in ``CONFIG_KEYS``.
Family parameters are written ``param.A = 2``.  Command-line flags win over
the file.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""

import argparse
import datetime
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, asymptotics, kernels, plots
from .analytic import make_family
from .barenblatt import build_frame, constants, glass_coupling
from .errors import ConfigError, NumericFailure, QotError
from .measures import BoxDomain
from .pme import (
    BarenblattProfile,
    barenblatt_vec,
    corollary_match,
    free_energy,
    internal_energy,
    mass,
    pme_residual,
)
from .qot import primal_objective, solve, write_plan_csv, write_stats

COMMANDS = ("solve", "sweep", "sandwich", "couple", "pme-check", "constants")

# key -> (parser, default); ``None`` defaults are filled per command.
CONFIG_KEYS = {
    "command": (str, None),
    "family": (str, "identity"),
    "d": (int, 1),
    "n": (int, None),
    "lo": (float, 0.0),
    "hi": (float, 1.0),
    "eps": (str, None),
    "delta": (float, None),
    "tol": (float, 1e-8),
    "max_iter": (int, 20000),
    "output_dir": (str, "qotlimit-out"),
    "seed": (int, 0),
    "backend": (str, None),
    "jobs": (int, 1),
    "support_check": (str, "raise"),
    "coarse": (int, 12),
    "m": (str, "2,3"),
    "t": (float, 1.0),
}

DEFAULT_N = {1: 1000, 2: 60, 3: 16}
DEFAULT_EPS = {"solve": "1e-3", "couple": "1e-3", "sweep": "1e-2:1e-4:5log",
               "sandwich": "1e-2:1e-4:5log"}
POSITIVE = ("d", "n", "tol", "max_iter", "jobs", "coarse", "t")


# ---------------------------------------------------------------------------
# configuration

def parse_eps(text, field="eps"):
    """``"1e-3"``, ``"1e-2,1e-3"`` or ``"start:stop:Nlog"`` / ``"...:Nlin"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("range must be start:stop:N{log,lin}")
            start, stop, spec = float(parts[0]), float(parts[1]), parts[2].strip()
            if spec.endswith("log"):
                num = int(spec[:-3])
                if start <= 0 or stop <= 0:
                    raise ValueError("log ranges need positive endpoints")
                vals = np.logspace(math.log10(start), math.log10(stop), num)
            elif spec.endswith("lin"):
                num = int(spec[:-3])
                vals = np.linspace(start, stop, num)
            else:
                raise ValueError("range count must end in 'log' or 'lin'")
            if num < 1:
                raise ValueError("range needs at least one point")
        else:
            vals = np.array([float(v) for v in text.split(",") if v.strip()])
        if len(vals) == 0:
            raise ValueError("no values")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("values must be positive and finite")
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}", field=field) from None
    return [float(v) for v in vals]


def _coerce(key, raw, line=None):
    if key.startswith("param."):
        name = key[len("param."):]
        if not name.isidentifier():
            raise ConfigError("bad parameter name", field=key, line=line)
        try:
            vals = [float(v) for v in str(raw).split(",")]
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}", field=key, line=line) from None
        return vals[0] if len(vals) == 1 else vals
    if key not in CONFIG_KEYS:
        raise ConfigError("unknown key", field=key, line=line)
    kind = CONFIG_KEYS[key][0]
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}", field=key,
                          line=line) from None


def read_config(path):
    """Parse a flat ``key = value`` file into a dict."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field="config") from None
    for no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, val = text.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=no)
        if key in out:
            raise ConfigError("duplicate key", field=key, line=no)
        out[key] = _coerce(key, val, line=no)
    return out


def resolve_config(args):
    """Merge defaults, the config file and command-line flags (in that order)."""
    cfg = {k: v[1] for k, v in CONFIG_KEYS.items()}
    if args.config:
        cfg.update(read_config(args.config))
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, val)
    for item in args.param or ():
        name, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"expected name=value, got {item!r}", field="param")
        cfg["param." + name.strip()] = _coerce("param." + name.strip(), val.strip())
    cmd = args.command
    if cfg["command"] not in (None, cmd):
        raise ConfigError(f"config is for {cfg['command']!r}, not {cmd!r}",
                          field="command")
    cfg["command"] = cmd
    if cfg["d"] not in (1, 2, 3):
        raise ConfigError("d must be 1, 2 or 3", field="d")
    if cfg["n"] is None:
        cfg["n"] = DEFAULT_N[cfg["d"]]
    if cfg["eps"] is None:
        cfg["eps"] = DEFAULT_EPS.get(cmd, "1e-3")
    for key in POSITIVE:
        if not cfg[key] > 0:
            raise ConfigError("must be positive", field=key)
    if not cfg["hi"] > cfg["lo"]:
        raise ConfigError("hi must exceed lo", field="hi")
    if cfg["delta"] is not None and not cfg["delta"] > 0:
        raise ConfigError("must be positive", field="delta")
    if cfg["support_check"] not in ("raise", "warn", "off"):
        raise ConfigError("must be raise, warn or off", field="support_check")
    if cfg["backend"] is not None and cfg["backend"] not in kernels.available_backends():
        raise ConfigError(f"unavailable backend {cfg['backend']!r}", field="backend")
    cfg["eps_values"] = parse_eps(cfg["eps"])
    return cfg


def family_params(cfg):
    return {k[len("param."):]: v for k, v in cfg.items() if k.startswith("param.")}


def build_pair(cfg):
    try:
        return make_family(cfg["family"], d=cfg["d"], n=cfg["n"], lo=cfg["lo"],
                           hi=cfg["hi"], **family_params(cfg))
    except TypeError as exc:
        raise ConfigError(str(exc), field="param") from None
    except ValueError as exc:
        if isinstance(exc, QotError):
            raise
        field = "family" if "family" in str(exc) or "kind" in str(exc) else "param"
        raise ConfigError(str(exc), field=field) from None


def header_lines(cfg):
    """Config echo plus version; the timestamp sits alone on one line."""
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    lines = [f"qotlimit {__version__}", f"generated: {stamp}"]
    for key in sorted(k for k in cfg if k != "eps_values"):
        lines.append(f"config {key} = {cfg[key]}")
    return lines


# ---------------------------------------------------------------------------
# commands

def _solve_one(cfg, eps):
    """Worker entry point: rebuild the instance and solve at one ``eps``."""
    pair = build_pair(cfg)
    return solve(pair.rho0, pair.rho1, eps, tol=cfg["tol"], max_iter=cfg["max_iter"],
                 keep_plan=False, backend=cfg["backend"]).stats


def _run_sweep(cfg, pair, log):
    eps = asymptotics.parse_eps_list(cfg["eps_values"])
    for e in eps:
        asymptotics.check_bandwidth(pair, e)
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            stats = list(pool.map(_solve_one, [cfg] * len(eps), eps))
        for e, st in zip(eps, stats):
            log(f"eps={e:.4g} iterations={st.iterations} T={st.dual:.12g}")
        return asymptotics.assemble_report(pair, eps, stats)
    return asymptotics.sweep(
        pair, eps, tol=cfg["tol"], max_iter=cfg["max_iter"], backend=cfg["backend"],
        progress=lambda e, st: log(f"eps={e:.4g} iterations={st.iterations} "
                                   f"T={st.dual:.12g}"))


def cmd_constants(cfg, out, log):
    path = os.path.join(out, "constants.txt")
    fields = ("d", "sphere_area", "c_d", "c_d1", "c_d2", "theorem_constant",
              "corrected_constant")
    dims = [cfg["d"]] if cfg["d"] else [1, 2, 3]
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines(cfg):
            fh.write(f"# {line}\n")
        fh.write(" ".join(f"{f:>20s}" for f in fields) + "\n")
        for d in dims:
            k = constants(d)
            row = [f"{d:>20d}"] + [f"{getattr(k, f):>20.12g}" for f in fields[1:]]
            fh.write(" ".join(row) + "\n")
    with open(path, encoding="utf-8") as fh:
        sys.stdout.write("".join(ln for ln in fh if not ln.startswith("#")))
    return [path]


def cmd_solve(cfg, out, log):
    pair = build_pair(cfg)
    eps = cfg["eps_values"][0]
    sol = solve(pair.rho0, pair.rho1, eps, tol=cfg["tol"], max_iter=cfg["max_iter"],
                backend=cfg["backend"])
    hdr = header_lines(cfg)
    plan_csv = os.path.join(out, "plan.csv")
    stats_txt = os.path.join(out, "stats.txt")
    write_plan_csv(sol.coupling, pair.rho0, pair.rho1, plan_csv, hdr)
    write_stats(sol.stats, stats_txt, hdr)
    section = asymptotics.cross_section(pair, sol.coupling, eps)
    section_csv = os.path.join(out, "cross_section.csv")
    _write_columns(section_csv, section, hdr)
    support_png = os.path.join(out, "support.png")
    overlay_png = os.path.join(out, "overlay.png")
    plots.plot_support(plan_csv, support_png)
    plots.plot_overlay(section_csv, overlay_png)
    log(f"T_eps={sol.value:.12g} iterations={sol.stats.iterations} "
        f"support_fraction={sol.stats.support_fraction:.4g}")
    return [plan_csv, stats_txt, section_csv, support_png, overlay_png]


def cmd_sweep(cfg, out, log):
    pair = build_pair(cfg)
    rep = _run_sweep(cfg, pair, log)
    return _write_report(cfg, out, rep, log)


def cmd_sandwich(cfg, out, log):
    pair = build_pair(cfg)
    rep = _run_sweep(cfg, pair, log)
    delta = cfg["delta"] if cfg["delta"] is not None else 0.05
    rep = asymptotics.sandwich(pair, delta, rep.eps_list,
                               support_check=cfg["support_check"], coarse=cfg["coarse"],
                               backend=cfg["backend"], report=rep)
    return _write_report(cfg, out, rep, log)


def cmd_couple(cfg, out, log):
    pair = build_pair(cfg)
    eps = cfg["eps_values"][0]
    delta = cfg["delta"] if cfg["delta"] is not None else 0.1
    frame = build_frame(pair.rho0, delta)
    gc = glass_coupling(pair, frame, eps, coarse=cfg["coarse"],
                        support_check=cfg["support_check"], backend=cfg["backend"])
    target = gc.target_points(pair)
    cost = primal_objective(gc.coupling, pair.rho0, target)
    hdr = header_lines(cfg)
    plan_csv = os.path.join(out, "coupling.csv")
    write_plan_csv(gc.coupling, pair.rho0, target, plan_csv, hdr)
    stats_txt = os.path.join(out, "coupling_stats.txt")
    with open(stats_txt, "w", encoding="utf-8") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        for key, val in (("cost", cost), ("row_defect", gc.row_defect),
                         ("col_defect", gc.col_defect),
                         ("map_deviation", gc.map_deviation),
                         ("support_violation", gc.support_violation),
                         ("nnz", gc.coupling.nnz)):
            fh.write(f"{key} = {asymptotics._plain(val)}\n")
    support_png = os.path.join(out, "coupling_support.png")
    plots.plot_support(plan_csv, support_png)
    log(f"cost={cost:.12g} marginal defects {gc.row_defect:.3g}/{gc.col_defect:.3g}")
    return [plan_csv, stats_txt, support_png]


def cmd_pme_check(cfg, out, log):
    d = cfg["d"]
    try:
        ms = [float(v) for v in cfg["m"].split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse {cfg['m']!r}", field="m") from None
    if any(not m > 1 for m in ms):
        raise ConfigError("every m must exceed 1", field="m")
    t = cfg["t"]
    rows = []
    for m in ms:
        prof = BarenblattProfile(m=m, d=d, C=1.0)
        R = 1.2 * max(1.0, 2.0 ** prof.beta_exp) * math.sqrt(prof.C / prof.k) * t ** prof.beta_exp
        masses = [mass(prof, s) for s in (0.5 * t, t, 2 * t)]
        rows.append((m, "mass_spread", max(masses) - min(masses)))
        res = []
        for n in (40, 80, 160):
            dom = BoxDomain([-R] * d, [R] * d, [n] * d)
            res.append(pme_residual(prof, t, dom))
        rows.append((m, "residual_ratio_coarse", res[0] / res[1]))
        rows.append((m, "residual_ratio_fine", res[1] / res[2]))
        dom = BoxDomain([-R] * d, [R] * d, [200 if d == 1 else 80] * d)
        for s in (t, 2 * t):
            u = barenblatt_vec(prof, s, dom.nodes())
            rows.append((m, f"free_energy_t{s:g}", free_energy(u, dom, m)))
            rows.append((m, f"internal_energy_t{s:g}", internal_energy(u, dom, m)))
    pair = make_family("identity", d=d, n=cfg["n"], lo=cfg["lo"], hi=cfg["hi"])
    centre = 0.5 * (cfg["lo"] + cfg["hi"])
    prof, scale = corollary_match(pair, np.full(d, centre), convention="matched")
    rows.append((2.0, "corollary_height_C", prof.C))
    rows.append((2.0, "corollary_scale", scale))
    path = os.path.join(out, "pme_check.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines(cfg):
            fh.write(f"# {line}\n")
        fh.write("m,quantity,value\n")
        for m, name, val in rows:
            fh.write(f"{m!r},{name},{float(val)!r}\n")
    for m, name, val in rows:
        log(f"m={m:g} {name} = {val:.10g}")
    return [path]


def _write_report(cfg, out, rep, log):
    hdr = header_lines(cfg)
    csv = os.path.join(out, "report.csv")
    summary = os.path.join(out, "summary.txt")
    asymptotics.write_report_csv(rep, csv, hdr)
    asymptotics.write_summary(rep, summary, hdr)
    rate_png = os.path.join(out, "rate.png")
    plots.plot_rate(csv, rate_png)
    log(f"fitted_exponent={rep.fitted_exponent:.4f} (expected {2 / (rep.d + 2):.4f}) "
        f"fitted_constant={rep.fitted_constant:.6g} "
        f"theorem={rep.theoretical_constant:.6g} corrected={rep.corrected_constant:.6g}")
    return [csv, summary, rate_png]


def _write_columns(path, cols, hdr):
    names = list(cols)
    with open(path, "w", encoding="utf-8") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*(cols[k] for k in names)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


HANDLERS = {"constants": cmd_constants, "solve": cmd_solve, "sweep": cmd_sweep,
            "sandwich": cmd_sandwich, "couple": cmd_couple, "pme-check": cmd_pme_check}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="qotlimit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"qotlimit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--family", help="identity, affine or perturbed")
        p.add_argument("--d", help="dimension (1-3)")
        p.add_argument("--n", help="cells per axis")
        p.add_argument("--lo", help="lower corner of the source box")
        p.add_argument("--hi", help="upper corner of the source box")
        p.add_argument("--eps", help="value, comma list or start:stop:N{log,lin}")
        p.add_argument("--delta", help="frame width")
        p.add_argument("--tol", help="marginal defect tolerance")
        p.add_argument("--max-iter", dest="max_iter")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", help="reserved for sampled diagnostics")
        p.add_argument("--backend", help="cython or python")
        p.add_argument("--jobs", help="worker processes for sweeps")
        p.add_argument("--support-check", dest="support_check",
                       help="raise, warn or off")
        p.add_argument("--coarse", help="coarse grid for the glass map (d > 1)")
        p.add_argument("--m", help="PME exponents, comma separated")
        p.add_argument("--t", help="PME reference time")
        p.add_argument("--param", action="append", metavar="NAME=VALUE",
                       help="family parameter (repeatable)")
    p = sub.add_parser("plot", help="redraw a figure from its CSV")
    p.add_argument("kind", choices=sorted(plots.KINDS))
    p.add_argument("csv")
    p.add_argument("--out", help="PNG path (default: next to the CSV)")
    return parser


def _provenance(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        if f"{os.sep}qotlimit{os.sep}" in frame.filename:
            mod = os.path.splitext(os.path.basename(frame.filename))[0]
            return f"qotlimit.{mod}"
    return type(exc).__module__


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    def log(msg):
        print(msg, file=sys.stderr)

    try:
        if args.command == "plot":
            out = args.out or os.path.splitext(args.csv)[0] + ".png"
            plots.KINDS[args.kind](args.csv, out)
            print(out)
            return 0
        cfg = resolve_config(args)
        np.random.seed(cfg["seed"])
        out = cfg["output_dir"]
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create: {exc}", field="output_dir") from None
        written = HANDLERS[args.command](cfg, out, log)
        for path in written:
            print(path)
        return 0
    except ConfigError as exc:
        log(f"qotlimit: config error: {exc}")
        return 2
    except NumericFailure as exc:
        log(f"qotlimit: numeric failure in {_provenance(exc)} "
            f"({type(exc).__name__}): {exc}")
        return 3
    except QotError as exc:
        log(f"qotlimit: invalid input in {_provenance(exc)} "
            f"({type(exc).__name__}): {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
