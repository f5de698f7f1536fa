"""Command-line entry point: ``gardner <command> [flags]``.

Every command can record a run manifest (JSON) holding the full parameter
set; passing that file back through ``--config`` reproduces the run, with
any explicit flag taking precedence over the file.

Exit codes: 0 success, 1 runtime or storage failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import (
    CorrelationParams,
    alpha_c_correlated,
    alpha_c_uncorrelated,
    kappa_critical,
)
from .dynamics import StorageFailed, one_bit_recovery, random_patterns, store_patterns, verify_fixed_points
from .montecarlo import (
    Axis,
    Ensemble,
    aggregate,
    default_workers,
    estimate_alpha_hat,
    iter_alpha_paths,
)

# command -> parameter defaults; None marks "must be supplied"
DEFAULTS = {
    "capacity": {"kappa": None, "ma": None},
    "figure-alpha": {"kappa_lo": -1.0, "kappa_hi": 3.0, "step": 0.05, "ma": [0.0, 0.5, 0.8]},
    "figure-kadj": {"kappa_lo": -1.0, "kappa_hi": 3.0, "step": 0.05, "ma": [0.5, 0.8]},
    "sweep": {
        "n": 200,
        "kappa": 0.5,
        "ensemble": "gaussian",
        "ma": 0.0,
        "alpha_min": 0.5,
        "alpha_max": 1.5,
        "alpha_steps": 11,
        "relative": False,
        "trials": 100,
        "seed": None,
        "workers": None,
        "solver_tol": 1e-6,
    },
    "alpha-hat": {
        "n": 200,
        "kappa": 0.5,
        "ensemble": "gaussian",
        "ma": 0.0,
        "trials": 100,
        "seed": None,
        "workers": None,
        "solver_tol": 1e-6,
    },
    "dynamics-demo": {"n": 60, "m": 12, "kappa": 0.1, "seed": None, "flips": 1},
}
STOCHASTIC = {"sweep", "alpha-hat", "dynamics-demo"}
# worker count changes scheduling only, never output
NOT_RECORDED = {"workers"}


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gardner", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gardner {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config or run manifest; flags override it")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--manifest", help="manifest path (default: <out>.manifest.json when --out is set)")

    sp = sub.add_parser("capacity", help="alpha_c for one kappa (optionally correlated)")
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--ma", type=float)
    common(sp)

    for name, help_ in (("figure-alpha", "alpha_c vs kappa curves"), ("figure-kadj", "kappa_adj vs kappa curves")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--kappa-lo", type=float)
        sp.add_argument("--kappa-hi", type=float)
        sp.add_argument("--step", type=float)
        sp.add_argument("--ma", type=float, nargs="+")
        common(sp)

    def ensemble_flags(sp):
        sp.add_argument("--n", type=int)
        sp.add_argument("--kappa", type=float)
        sp.add_argument("--ensemble", choices=["gaussian", "bernoulli", "asymmetric"])
        sp.add_argument("--ma", type=float)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--solver-tol", type=float)

    sp = sub.add_parser("sweep", help="empirical feasibility probability along an alpha grid")
    ensemble_flags(sp)
    sp.add_argument("--alpha-min", type=float)
    sp.add_argument("--alpha-max", type=float)
    sp.add_argument("--alpha-steps", type=int)
    sp.add_argument("--relative", action="store_const", const=True, default=None,
                    help="interpret the alpha range as multiples of the analytic alpha_c")
    common(sp)

    sp = sub.add_parser("alpha-hat", help="empirical capacity by per-trial bisection over m")
    ensemble_flags(sp)
    common(sp)

    sp = sub.add_parser("dynamics-demo", help="store random patterns and check fixed points")
    sp.add_argument("--n", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--flips", type=int)
    common(sp)
    return p


def _resolve(command: str, args: argparse.Namespace) -> dict:
    params = dict(DEFAULTS[command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        data = data.get("params", data)
        unknown = set(data) - set(params)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        params.update(data)
    for key in params:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    missing = [k for k, v in params.items() if v is None and k not in ("ma", "workers")]
    if command == "capacity" and params["kappa"] is None:
        missing = ["kappa"]
    if missing:
        raise UsageError(f"missing required parameter(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")
    return params


def _check_ma(ma):
    if ma is not None and not 0.0 <= ma < 1.0:
        raise UsageError(f"--ma must satisfy 0 <= m_a < 1 (got {ma})")


def _ensemble(params) -> Ensemble:
    kind = params["ensemble"]
    ma = params.get("ma") or 0.0
    _check_ma(ma)
    if kind == "asymmetric":
        return Ensemble.asymmetric(ma)
    if ma:
        raise UsageError("--ma only applies to --ensemble asymmetric")
    return Ensemble.gaussian() if kind == "gaussian" else Ensemble.bernoulli()


def _analytic_alpha(kappa, ensemble: Ensemble) -> float:
    if ensemble.m_a > 0:
        return alpha_c_correlated(kappa, CorrelationParams(ensemble.m_a)).alpha_c
    return alpha_c_uncorrelated(kappa).alpha_c


def _kappa_grid(params):
    lo, hi, step = params["kappa_lo"], params["kappa_hi"], params["step"]
    if not lo < hi:
        raise UsageError("--kappa-lo must be below --kappa-hi")
    if not step > 0:
        raise UsageError("--step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _critical(ma: float, lo: float, hi: float):
    if ma == 0.0:
        kc = 0.0
    else:
        kc = kappa_critical(CorrelationParams(ma), tol=1e-10)
    return kc if lo <= kc <= hi else None


# ---------------------------------------------------------------------------
# commands; each returns (text_output, exit_code)


def cmd_capacity(params):
    kappa, ma = params["kappa"], params["ma"]
    _check_ma(ma)
    if ma is None:
        r = alpha_c_uncorrelated(kappa)
    else:
        r = alpha_c_correlated(kappa, CorrelationParams(ma))
    rec = {
        "kappa": r.kappa,
        "m_a": ma,
        "f_value": r.f_value,
        "alpha_c": r.alpha_c,
        "exactness": r.exactness.value,
        "v_opt": r.v_opt,
        "kappa_adj": r.kappa_adj,
    }
    lines = [
        f"kappa      {fmt(r.kappa)}",
        f"f_value    {fmt(r.f_value)}",
        f"alpha_c    {fmt(r.alpha_c)}",
        f"exactness  {r.exactness.value}",
    ]
    if ma is not None:
        lines += [f"m_a        {fmt(ma)}", f"v_opt      {fmt(r.v_opt)}", f"kappa_adj  {fmt(r.kappa_adj)}"]
    lines.append("record " + json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n", 0


def cmd_figure_alpha(params):
    grid = _kappa_grid(params)
    out = ["kappa,ma,alpha_c,exactness,kappa_adj,critical"]
    for ma in params["ma"]:
        _check_ma(ma)
        cp = CorrelationParams(ma)
        kc = _critical(ma, grid[0], grid[-1])
        points = [(k, 0) for k in grid]
        if kc is not None:
            points.append((kc, 1))
            points.sort()
        for k, flag in points:
            r = alpha_c_correlated(k, cp)
            out.append(f"{fmt(k)},{fmt(ma)},{fmt(r.alpha_c)},{r.exactness.value},{fmt(r.kappa_adj)},{flag}")
    return "\n".join(out) + "\n", 0


def cmd_figure_kadj(params):
    grid = _kappa_grid(params)
    out = ["kappa,ma,kappa_adj,critical"]
    for ma in params["ma"]:
        _check_ma(ma)
        cp = CorrelationParams(ma)
        kc = _critical(ma, grid[0], grid[-1])
        points = [(k, 0) for k in grid]
        if kc is not None:
            points.append((kc, 1))
            points.sort()
        for k, flag in points:
            r = alpha_c_correlated(k, cp)
            out.append(f"{fmt(k)},{fmt(ma)},{fmt(r.kappa_adj)},{flag}")
    return "\n".join(out) + "\n", 0


def _alpha_grid(params, ensemble):
    lo, hi, steps = params["alpha_min"], params["alpha_max"], params["alpha_steps"]
    if not 0 < lo < hi or steps < 2:
        raise UsageError("need 0 < --alpha-min < --alpha-max and --alpha-steps >= 2")
    grid = np.linspace(lo, hi, steps)
    if params["relative"]:
        grid = grid * _analytic_alpha(params["kappa"], ensemble)
    return [float(a) for a in grid]


def cmd_sweep(params, state):
    ensemble = _ensemble(params)
    if params["n"] < 2 or params["trials"] < 0:
        raise UsageError("need --n >= 2 and --trials >= 0")
    grid = _alpha_grid(params, ensemble)
    workers = params["workers"] if params["workers"] is not None else default_workers()
    paths = []
    try:
        for path in iter_alpha_paths(
            params["n"], params["kappa"], ensemble, grid, params["trials"],
            params["seed"], params["solver_tol"], workers,
        ):
            paths.append(path)
    except KeyboardInterrupt:
        state["partial"] = True
    result = aggregate(Axis.ALPHA, grid if params["trials"] > 0 else [], paths)
    state["summary"] = {
        "transition_alpha": result.crossing(),
        "analytic_alpha_c": _analytic_alpha(params["kappa"], ensemble),
        "completed_trials": len(paths),
    }
    return result.to_csv(), 1 if state.get("partial") else 0


def cmd_alpha_hat(params, state):
    ensemble = _ensemble(params)
    if params["n"] < 2 or params["trials"] < 1:
        raise UsageError("need --n >= 2 and --trials >= 1")
    workers = params["workers"] if params["workers"] is not None else default_workers()
    est = estimate_alpha_hat(
        params["n"], params["kappa"], ensemble, params["trials"], params["seed"],
        params["solver_tol"], workers,
    )
    alpha_c = _analytic_alpha(params["kappa"], ensemble)
    text = "alpha_hat,ci,stderr,trials,n_undecided,alpha_c\n"
    text += f"{fmt(est.alpha_hat)},{fmt(est.ci)},{fmt(est.stderr)},{params['trials']},{est.n_undecided},{fmt(alpha_c)}\n"
    return text, 0


def cmd_dynamics_demo(params, state):
    n, m, kappa = params["n"], params["m"], params["kappa"]
    if n < 2 or m < 1 or kappa < 0:
        raise UsageError("need --n >= 2, --m >= 1, --kappa >= 0")
    rng = np.random.default_rng(params["seed"])
    H = random_patterns(m, n, rng)
    lines = [f"dynamics demo: n={n} m={m} alpha={m / n:.4g} kappa={kappa:g} seed={params['seed']}"]
    try:
        stored = store_patterns(H, kappa)
    except StorageFailed as exc:
        lines.append(f"StorageFailed at site {exc.site}: {exc}")
        return "\n".join(lines) + "\n", 1
    mg = stored.per_site_margin
    lines.append(
        f"per-site margin: min={mg.min():.6g} mean={mg.mean():.6g} max={mg.max():.6g}"
    )
    report = verify_fixed_points(H, stored.interaction, kappa)
    lines.append("pattern  satisfied_sites  min_stability")
    stab = H * report.fields
    for i in range(m):
        lines.append(f"{i:7d}  {int(report.satisfied[i].sum()):7d}/{n:<7d}  {stab[i].min():.6g}")
    lines.append(f"fixed points verified: {report.passed} ({report.n_violations} violations)")
    rec = one_bit_recovery(H, stored.interaction, rng, flips_per_pattern=params["flips"])
    lines.append(
        f"one-bit-flip recovery: {rec.recovered}/{rec.attempts} ({rec.fraction:.3f}), mean steps {rec.mean_steps:.3g}"
    )
    return "\n".join(lines) + "\n", 0 if report.passed else 1


COMMANDS = {
    "capacity": lambda p, s: cmd_capacity(p),
    "figure-alpha": lambda p, s: cmd_figure_alpha(p),
    "figure-kadj": lambda p, s: cmd_figure_kadj(p),
    "sweep": cmd_sweep,
    "alpha-hat": cmd_alpha_hat,
    "dynamics-demo": cmd_dynamics_demo,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    start = time.perf_counter()
    state: dict = {}
    try:
        params = _resolve(command, args)
        if command in STOCHASTIC and params.get("seed") is None:
            raise UsageError("--seed is required")
        text, code = COMMANDS[command](params, state)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2

    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if "summary" in state:
        print(json.dumps(state["summary"]), file=sys.stderr)

    manifest_path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if manifest_path:
        manifest = {
            "command": command,
            "params": {k: v for k, v in params.items() if k not in NOT_RECORDED},
            "master_seed": params.get("seed"),
            "tool_version": __version__,
            "outputs": [args.out] if args.out else [],
            "wall_clock_seconds": time.perf_counter() - start,
            "partial": bool(state.get("partial")),
        }
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
