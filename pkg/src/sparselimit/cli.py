"""Command-line entry point.

Every run writes its output (CSV or JSON) plus a JSON manifest recording the
command, resolved parameters, seed, library versions and wall time.  A
manifest can be passed back through ``--config`` to reproduce the run.

Exit status: 0 on success, 2 on bad arguments, 3 on numeric failure.
"""

import argparse
import io
import json
import math
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .conditional import activity_prob, bh_ratio, bh_threshold, conditional_decomposition
from .densities import CMModel, HyperModel, hyper_marginal_density, marginal_density, psi_density, quantile
from .fit import fit_cm, fit_laplace_zeta, fit_rho_d
from .measures import InversePower, InverseQuartic, measure_from_json
from .simulate import KINDS, SignalSpec, exceedance_check, observe, sample_signal
from .zeta import ZetaEvaluator

EXIT_USAGE = 2
EXIT_NUMERIC = 3

TABLE_D = (0.5, 1.0, 1.5)
DEFAULT_QUANTILES = (0.97, 0.98, 0.99, 0.995, 0.9975)


class UsageError(Exception):
    """Invalid arguments detected after parsing."""


# -- formatting -----------------------------------------------------------

def fmt(v) -> str:
    return format(float(v), ".17g")


def write_table(stream, header, columns):
    stream.write(",".join(header) + "\n")
    for row in zip(*columns):
        stream.write(",".join(fmt(v) for v in row) + "\n")


def write_vector(stream, values):
    for v in values:
        stream.write(fmt(v) + "\n")


def parse_grid(text: str) -> np.ndarray:
    """``"a:b:step"`` to an inclusive grid; a comma list is taken literally."""
    try:
        if ":" in text:
            a, b, step = (float(p) for p in text.split(":"))
            if not step > 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9))
            return np.round(a + step * np.arange(n + 1), 12)
        return np.array([float(p) for p in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected 'a:b:step' or a comma list") from None


def parse_floats(text: str):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def parse_rho_grid(text: str, kmax: int):
    """``"4^-k"`` to ``[4^-1, ..., 4^-kmax]``; otherwise a comma list."""
    if "^-k" in text:
        try:
            base = float(text.split("^")[0])
        except ValueError:
            raise UsageError(f"bad rho grid {text!r}") from None
        return [base ** -k for k in range(1, kmax + 1)]
    return parse_floats(text)


def read_vector(path: str) -> np.ndarray:
    """One-column CSV or whitespace/newline separated floats."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    vals = []
    for tok in text.replace(",", "\n").split():
        try:
            vals.append(float(tok))
        except ValueError:
            raise UsageError(f"non-numeric entry {tok!r} in {path}") from None
    return np.array(vals)


def _guard(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _cm_model(args) -> CMModel:
    rho = 0.051 if args.rho is None else args.rho
    d = 1.48 if args.d is None else args.d
    s0 = 0.135 if args.sigma0 is None else args.sigma0
    return _guard(CMModel.from_sigma0, rho, d, s0)


def _measure(args):
    if args.measure:
        try:
            obj = json.loads(args.measure) if args.measure.lstrip().startswith("{") else json.load(open(args.measure))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load measure: {exc}") from None
        return _guard(measure_from_json, obj)
    return _guard(InversePower, 1.0 if args.d is None else args.d)


# -- commands ----------------------------------------------------------------

def cmd_zeta_table(args, out):
    grid = parse_grid(args.grid or "2.0:4.4:0.2")
    ds = parse_floats(args.d_list) if args.d_list else list(TABLE_D)
    out.write("d,x,zeta\n")
    for d in ds:
        vals = np.atleast_1d(ZetaEvaluator(_guard(InversePower, d)).zeta(grid))
        for x, z in zip(grid, vals):
            if args.rounded:
                out.write(f"{d:g},{x:.1f},{z:.1f}\n")
            else:
                out.write(f"{fmt(d)},{fmt(x)},{fmt(z)}\n")


def cmd_psi_curve(args, out):
    m = _measure(args)
    grid = parse_grid(args.grid or "-6:6:0.1")
    write_table(out, ["x", "density"], [grid, np.atleast_1d(psi_density(grid, m))])


def cmd_marginal_curve(args, out):
    grid = parse_grid(args.grid or "-6:6:0.1")
    if args.model == "hyper":
        model = _guard(HyperModel, args.gamma or 0.0, args.rho or 0.0, InverseQuartic())
        dens = hyper_marginal_density(model, grid)
    else:
        dens = marginal_density(_cm_model(args), grid)
    write_table(out, ["y", "density"], [grid, np.atleast_1d(dens)])


def cmd_quantiles(args, out):
    model = _cm_model(args)
    ps = parse_floats(args.quantiles) if args.quantiles else list(DEFAULT_QUANTILES)
    for p in ps:
        if not 0 < p < 1:
            raise UsageError("quantile levels must lie in (0, 1)")
    qs = [quantile(model, p, absolute=not args.signed) for p in ps]
    write_table(out, ["p", "abs_quantile" if not args.signed else "quantile"], [ps, qs])


def _signal_spec(args) -> SignalSpec:
    params = {}
    kind = args.kind
    for key in KINDS.get(kind, ()):
        val = getattr(args, key, None)
        if val is None:
            if kind == "efron" and key == "k":
                val = 500
            else:
                raise UsageError(f"--{key} is required for kind {kind}")
        params[key] = val
    return _guard(SignalSpec, kind, params, args.n, args.seed)


def cmd_simulate(args, out):
    spec = _signal_spec(args)
    mu = sample_signal(spec)
    values = mu if args.signals_only else observe(mu, args.seed)
    write_vector(out, values)
    return {"spec": spec.to_json()}


def cmd_fit(args, out):
    if not args.input:
        raise UsageError("fit needs --input")
    y = read_vector(args.input)
    if y.size < 10:
        raise UsageError("fit needs at least 10 observations")
    if not np.all(np.isfinite(y)):
        raise UsageError("input contains non-finite values")
    model = args.model or "powerzeta"
    if model == "powerzeta":
        res = fit_rho_d(y)
    elif model == "cm":
        res = fit_cm(y)
    elif model == "laplace":
        lam = -math.log(0.9) if args.lam is None else args.lam
        if not lam >= 0:
            raise UsageError("--lambda must be nonnegative")
        res = fit_laplace_zeta(y, lam)
    else:
        raise UsageError(f"unknown model {model!r}")
    obj = res.to_json()
    obj["params"] = {k: float(v) for k, v in obj["params"].items()}
    if args.seed_report:
        obj["seed"] = args.seed
    json.dump(obj, out, indent=2, sort_keys=True)
    out.write("\n")


def cmd_activity_curve(args, out):
    rhos = parse_rho_grid(args.rho_grid or "4^-k", args.kmax)
    d = 1.0 if args.d is None else args.d
    ev = ZetaEvaluator(_guard(InversePower, d))
    grid = parse_grid(args.grid or "0:6:0.1")
    for r in rhos:
        if not 0 <= r < 1:
            raise UsageError("rho values must lie in [0, 1)")
    cols = [grid] + [np.atleast_1d(activity_prob(r, ev, grid)) for r in rhos]
    write_table(out, ["y"] + [f"rho={fmt(r)}" for r in rhos], cols)


def cmd_conditional(args, out):
    model = _cm_model(args)
    y = 4.0 if args.y is None else args.y
    dec = conditional_decomposition(model, y)
    u = parse_grid(args.grid or "-2:8:0.05")
    u = u[u != 0.0]
    total = np.atleast_1d(dec.posterior(u))
    bias = np.atleast_1d(dec.bias_factor(u))
    central = dec.w_central * np.atleast_1d(dec.central(u)) * bias if dec._central else np.zeros_like(u)
    inter = dec.w_intermediate * np.atleast_1d(dec.intermediate(u)) * bias
    rem = dec.w_zeta_remainder * np.atleast_1d(dec.remainder(u) if dec.split else dec.zeta_component(u)) * bias
    write_table(out, ["u", "total", "central", "intermediate", "remainder"], [u, total, central, inter, rem])
    return {"weights": {"central": dec.w_central, "intermediate": dec.w_intermediate,
                        "remainder": dec.w_zeta_remainder, "signal_rate": dec.rho}}


def cmd_bh(args, out):
    model = _cm_model(args)
    q = 0.1 if args.q is None else args.q
    if not 0 < q < 1:
        raise UsageError("q must lie in (0, 1)")
    t = bh_threshold(model, q)
    json.dump({"q": q, "threshold": t, "ratio": float(bh_ratio(model, t))}, out, indent=2, sort_keys=True)
    out.write("\n")


def cmd_check_exceedance(args, out):
    kind = args.kind if args.kind != "efron" else "cauchy_scale"
    base = {}
    for key in KINDS.get(kind, ()):
        v = getattr(args, key, None)
        base[key] = v if v is not None else 1.0
    values = parse_floats(args.values) if args.values else [0.1, 0.03, 0.01]
    spec = _guard(SignalSpec, kind, base, args.n, args.seed)
    eps = 1.0 if args.epsilon is None else args.epsilon
    if not eps > 0:
        raise UsageError("epsilon must be positive")
    rep = exceedance_check(spec, eps, values, method=args.method)
    json.dump(rep, out, indent=2, sort_keys=True)
    out.write("\n")


COMMANDS = {
    "zeta-table": cmd_zeta_table,
    "psi-curve": cmd_psi_curve,
    "marginal-curve": cmd_marginal_curve,
    "quantiles": cmd_quantiles,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "activity-curve": cmd_activity_curve,
    "conditional": cmd_conditional,
    "bh": cmd_bh,
    "check-exceedance": cmd_check_exceedance,
}


def _common(p):
    p.add_argument("--config", help="JSON config or manifest; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout); the manifest goes to OUT.manifest.json")
    p.add_argument("--model", choices=["powerzeta", "cm", "laplace", "hyper"])
    p.add_argument("--rho", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--grid")
    p.add_argument("--quantiles")
    p.add_argument("--measure", help="measure JSON (inline or path)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparselimit", description="Sparse-limit signal inference tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {name: sub.add_parser(name) for name in COMMANDS}
    for p in subs.values():
        _common(p)
    subs["zeta-table"].add_argument("--d-list")
    subs["zeta-table"].add_argument("--rounded", action="store_true", help="one-decimal presentation table")
    subs["marginal-curve"].add_argument("--gamma", type=float)
    subs["quantiles"].add_argument("--signed", action="store_true", help="quantiles of Y instead of |Y|")
    for name in ("simulate", "check-exceedance"):
        p = subs[name]
        p.add_argument("--kind", choices=sorted(KINDS), default="efron" if name == "simulate" else "cauchy_scale")
        p.add_argument("--n", type=int, default=5000 if name == "simulate" else 10**6)
        p.add_argument("--k", type=int)
        p.add_argument("--nu", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--slab")
    subs["simulate"].add_argument("--signals-only", action="store_true")
    subs["check-exceedance"].add_argument("--epsilon", type=float)
    subs["check-exceedance"].add_argument("--values")
    subs["check-exceedance"].add_argument("--method", choices=["mc", "stratified"], default="mc")
    subs["fit"].add_argument("--input")
    subs["fit"].add_argument("--seed-report", action="store_true")
    subs["activity-curve"].add_argument("--rho-grid")
    subs["activity-curve"].add_argument("--kmax", type=int, default=4)
    subs["conditional"].add_argument("--y", type=float)
    subs["bh"].add_argument("--q", type=float)
    parser._subs = subs
    return parser


def _load_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return None
    try:
        with open(known.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _versions():
    return {"sparselimit": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg = _load_config(argv)
    except UsageError as exc:
        parser.error(str(exc))
    if cfg is not None:
        params = dict(cfg.get("params", cfg))
        command = cfg.get("command", params.pop("command", None))
        if command and not any(a in COMMANDS for a in argv):
            argv = [command] + argv
        if command in parser._subs:
            allowed = {a.dest for a in parser._subs[command]._actions}
            parser._subs[command].set_defaults(**{k: v for k, v in params.items()
                                                  if k in allowed and k not in ("config", "out")})
    args = parser.parse_args(argv)
    if getattr(args, "n", None) is not None and args.n < 1:
        parser.error("--n must be positive")

    handler = COMMANDS[args.command]
    buf = io.StringIO()
    t0 = time.perf_counter()
    manifest = {"command": args.command,
                "params": {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out")},
                "seed": args.seed, "versions": _versions()}
    status = 0
    try:
        extra = handler(args, buf)
        manifest["status"] = "ok"
        if extra:
            manifest.update(extra)
    except UsageError as exc:
        print(f"sparselimit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        manifest.update(status="error", failed_operation=args.command,
                        error=f"{type(exc).__name__}: {exc}")
        status = EXIT_NUMERIC
        print(f"sparselimit {args.command}: numeric failure: {exc}", file=sys.stderr)
    manifest["wall_time_s"] = time.perf_counter() - t0

    if args.out:
        if status == 0:
            with open(args.out, "w") as fh:
                fh.write(buf.getvalue())
        manifest["outputs"] = [args.out] if status == 0 else []
        with open(args.out + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(buf.getvalue())
        sys.stderr.write(json.dumps(manifest, sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
