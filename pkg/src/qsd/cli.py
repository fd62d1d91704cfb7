"""Batch front-end: reproducible experiments with CSV artifacts.

Every subcommand reads a kernel (file or model config), writes CSV files
atomically (temp file + rename) plus a manifest recording the config
hash, seed, and library version, and exits with 0 on success, 1 on
runtime errors, 2 on usage/config errors, and 3 when a certification or
bound verification fails.  All numbers are serialized with 17 significant
digits, so reruns diff exactly; ``--threads`` only changes how work is
chunked and never the results.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__, converse, ergodic, estimator, models, qprocess, spectral
from .kernels import read_kernel, write_kernel
from .qprocess import VIOLATION_SLACK
from .spectral import MinorizationRefused, PowerIterationError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_NOT_CERTIFIED = 3


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: str, rows, trailer: str | None = None) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    if trailer:
        lines.append(trailer)
    _write_atomic(path, "\n".join(lines) + "\n")


def _manifest(out_dir: str, subcommand: str, args_repr: dict, seed) -> None:
    config = {k: v for k, v in args_repr.items() if k != "fn"}
    payload = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "subcommand": subcommand,
        "config_hash": hashlib.sha256(payload.encode()).hexdigest(),
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_atomic(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def parse_model_config(path: str) -> models.ModelSpec:
    """Line-oriented config: ``kind``, ``n``, ``seed``, ``params.<name>``."""
    kind = None
    n = None
    seed = None
    params: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected '<key> <value>'")
            key, value = parts
            try:
                if key == "kind":
                    kind = value.strip()
                elif key == "n":
                    n = int(value)
                elif key == "seed":
                    seed = int(value)
                elif key.startswith("params."):
                    params[key[len("params."):]] = float(value)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if kind is None:
        raise ValueError(f"{path}: missing 'kind'")
    if kind not in models.KINDS:
        raise ValueError(f"{path}: unknown kind {kind!r}")
    if n is None and kind not in ("w3", "t3"):
        raise ValueError(f"{path}: missing 'n'")
    return models.ModelSpec(kind=kind, n=n or 0, seed=seed, params=params)


def _load_kernel(args):
    if getattr(args, "kernel", None):
        return read_kernel(args.kernel)
    if getattr(args, "config", None):
        return models.build(parse_model_config(args.config))
    raise ValueError("give --kernel FILE or --config FILE")


def _read_f(arg: str, n: int) -> np.ndarray:
    vals = [float(p) for p in arg.split(",")]
    if len(vals) != n:
        raise ValueError(f"--f has {len(vals)} entries, kernel has {n} states")
    return np.array(vals)


def _parse_grid(arg: str) -> list[int]:
    """Grids are 'lo:hi[:step]' or comma-separated integers."""
    if ":" in arg:
        parts = [int(p) for p in arg.split(":")]
        if len(parts) == 2:
            lo, hi, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            lo, hi, step = parts
        else:
            raise ValueError(f"bad grid {arg!r}")
        return list(range(lo, hi + 1, step))
    return [int(p) for p in arg.split(",")]


def _report_csv(out_path: str, report) -> None:
    trailer = (f"# name={report.name} constant={_fmt(report.constant)} "
               f"rate={_fmt(report.rate)} max_violation={_fmt(report.max_violation)}")
    _write_csv(out_path, "t,T,observed,bound,ratio", report.rows, trailer)


def cmd_model(args) -> int:
    spec = parse_model_config(args.config)
    if args.seed is not None:
        spec = models.ModelSpec(kind=spec.kind, n=spec.n, seed=args.seed,
                                params=spec.params)
    K = models.build(spec)
    os.makedirs(args.out, exist_ok=True)
    write_kernel(K, os.path.join(args.out, "kernel.txt"))
    _manifest(args.out, "model", vars(args), spec.seed)
    return EXIT_OK


def cmd_spectral(args) -> int:
    K = _load_kernel(args)
    S = spectral.compute_spectral(K, tol=args.tol)
    os.makedirs(args.out, exist_ok=True)
    header = (f"rho={_fmt(S.rho)} lambda0_per_step={_fmt(S.lambda0)} "
              f"residual={_fmt(S.residual)}")
    rows = [(x, S.alpha[x], S.eta[x], S.beta[x]) for x in range(K.n)]
    lines = [header, "state,alpha,eta,beta"]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(os.path.join(args.out, "spectral.csv"), "\n".join(lines) + "\n")
    _manifest(args.out, "spectral", vars(args), args.seed)
    return EXIT_OK


def cmd_verify(args) -> int:
    K = _load_kernel(args)
    S = spectral.compute_spectral(K)
    Q = qprocess.build_q_kernel(K, S)
    eta_rep = qprocess.verify_eta_bound(K, S, range(1, args.t_max + 1))
    pairs = [(t, t + dt) for t in range(1, args.pair_t_max + 1)
             for dt in range(1, args.pair_lag_max + 1)]
    q_rep = qprocess.verify_qproc_approx(
        K, S, Q, pairs, gamma=eta_rep.rate if math.isfinite(eta_rep.rate) else None,
        a1=eta_rep.constant,
    )
    mix_rep = qprocess.q_mixing_report(Q, range(1, args.t_max + 1))
    os.makedirs(args.out, exist_ok=True)
    _report_csv(os.path.join(args.out, "eta_bound.csv"), eta_rep)
    _report_csv(os.path.join(args.out, "qproc_approx.csv"), q_rep)
    _report_csv(os.path.join(args.out, "q_mixing.csv"), mix_rep)
    _manifest(args.out, "verify", vars(args), args.seed)
    bad = [r.name for r in (eta_rep, q_rep, mix_rep)
           if r.max_violation > 1.0 + VIOLATION_SLACK]
    if bad:
        print(f"bound violated on validation grid: {', '.join(bad)}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    return EXIT_OK


def cmd_ergodic(args) -> int:
    K = _load_kernel(args)
    S = spectral.compute_spectral(K)
    f = _read_f(args.f, K.n)
    Ts = _parse_grid(args.T_grid)
    os.makedirs(args.out, exist_ok=True)
    if args.plan == "uniform":
        rep = ergodic.verify_ergodic_theorem(K, S, f, Ts)
        rows = [(T, obs, bound, ratio) for (_, T, obs, bound, ratio) in rep.rows]
    else:
        t0 = int(args.plan.split(":", 1)[1])
        gamma, gamma_prime = qprocess.fitted_rates(K, S)
        beta_f = float(S.beta @ f)
        f_inf = float(np.max(np.abs(f))) or 1.0
        rows = []
        for T in Ts:
            if t0 > T:
                raise ValueError(f"plan time {t0} exceeds horizon {T}")
            err = max(
                abs(ergodic.conditional_functional(K, x, f, ergodic.SamplingPlan.dirac(t0, T)) - beta_f)
                for x in range(K.n)
            )
            env = f_inf * (math.exp(-gamma_prime * t0) + math.exp(-gamma * (T - t0)))
            rows.append((T, err, env, err / env if env > 0 else 0.0))
    _write_csv(os.path.join(args.out, "ergodic.csv"), "time,error,bound,ratio", rows)
    _manifest(args.out, "ergodic", vars(args), args.seed)
    return EXIT_OK


_SWEEP_HEADER = "N,T,t0,N_T,estimate,stderr,exact,abs_error,predicted"


def cmd_estimate(args) -> int:
    K = _load_kernel(args)
    S = spectral.compute_spectral(K)
    f = _read_f(args.f, K.n)
    gamma, gamma_prime = qprocess.fitted_rates(K, S)
    if args.T is not None:
        T = args.T
    elif math.isfinite(gamma) and math.isfinite(gamma_prime):
        T = max(1, int(math.floor(
            estimator.predict_tradeoff(S.lambda0, gamma, gamma_prime, N=args.N).T_star + 0.5)))
    else:
        T = 1
    if args.t0 is not None:
        t0 = args.t0
    elif math.isfinite(gamma) and math.isfinite(gamma_prime):
        t0 = ergodic.optimal_t0(gamma, gamma_prime, T)
    else:
        t0 = 0
    batch = estimator.simulate(K, args.x0, T, args.N, args.seed, chunks=args.threads)
    est, se = estimator.estimate_beta(batch, f, ergodic.SamplingPlan.dirac(t0, T))
    exact = float(S.beta @ f)
    if math.isfinite(gamma) and math.isfinite(gamma_prime):
        predicted = estimator.predict_tradeoff(S.lambda0, gamma, gamma_prime, N=args.N).predicted_error
    else:
        predicted = args.N ** -0.5
    row = (args.N, T, t0, batch.N_T, est, se, exact, abs(est - exact), predicted)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "estimate.csv"), _SWEEP_HEADER, [row])
    _manifest(args.out, "estimate", vars(args), args.seed)
    return EXIT_OK


def cmd_sweep(args) -> int:
    K = _load_kernel(args)
    S = spectral.compute_spectral(K)
    f = _read_f(args.f, K.n)
    gamma, gamma_prime = qprocess.fitted_rates(K, S)
    N_list = [int(x) for x in args.N_list.split(",")]
    rows = estimator.sweep_error_vs_N(
        K, S, f, N_list, args.reps, args.seed, gamma, gamma_prime,
        x0=args.x0, chunks=args.threads,
    )
    csv_rows = [
        (r.N, r.T, r.t0, r.N_T, r.estimate, r.stderr, r.exact, r.abs_error, r.predicted)
        for r in rows
    ]
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "sweep.csv"), _SWEEP_HEADER, csv_rows)
    _manifest(args.out, "sweep", vars(args), args.seed)
    if any(r.flagged for r in rows):
        print("some sweep rows went extinct in every replication", file=sys.stderr)
    return EXIT_OK


def cmd_converse(args) -> int:
    K = _load_kernel(args)
    rep = converse.certify_converse(K, t1_max=args.t1_max, T_max=args.T_max)
    os.makedirs(args.out, exist_ok=True)
    rows = [(T, v, rep.envelope(T)) for T, v in rep.decay_curve]
    trailer = (f"# certified={rep.certified} t1={rep.t1} T1={rep.T1} "
               f"delta={_fmt(rep.delta)}")
    _write_csv(os.path.join(args.out, "converse.csv"), "T,sup_pair_tv,envelope",
               rows, trailer)
    _manifest(args.out, "converse", vars(args), args.seed)
    if not rep.certified:
        print("contraction not certified within the search limits", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qsd",
        description="Quasi-stationary analysis of finite absorbed Markov chains.",
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, kernel=True):
        if kernel:
            sp.add_argument("--kernel", help="kernel file (plain-text format)")
            sp.add_argument("--config", help="model config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1,
                        help="worker chunks; never changes results")

    sp = sub.add_parser("model", help="build a kernel from a config file")
    sp.add_argument("--config", required=True)
    common(sp, kernel=False)
    sp.set_defaults(fn=cmd_model)

    sp = sub.add_parser("spectral", help="quasi-stationary law and eigenvalue")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.set_defaults(fn=cmd_spectral)

    sp = sub.add_parser("verify", help="convergence-bound reports")
    common(sp)
    sp.add_argument("--t-max", dest="t_max", type=int, default=200)
    sp.add_argument("--pair-t-max", dest="pair_t_max", type=int, default=10)
    sp.add_argument("--pair-lag-max", dest="pair_lag_max", type=int, default=50)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("ergodic", help="conditional time-average envelopes")
    common(sp)
    sp.add_argument("--f", required=True, help="comma-separated test vector")
    sp.add_argument("--T-grid", dest="T_grid", required=True,
                    help="'lo:hi[:step]' or comma-separated horizons")
    sp.add_argument("--plan", default="uniform", help="'uniform' or 'dirac:<t0>'")
    sp.set_defaults(fn=cmd_ergodic)

    sp = sub.add_parser("estimate", help="Monte Carlo estimate of beta(f)")
    common(sp)
    sp.add_argument("--f", required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--T", type=int, default=None)
    sp.add_argument("--t0", type=int, default=None)
    sp.add_argument("--x0", type=int, default=0)
    sp.set_defaults(fn=cmd_estimate)

    sp = sub.add_parser("sweep", help="error-versus-N tradeoff sweep")
    common(sp)
    sp.add_argument("--f", required=True)
    sp.add_argument("--N-list", dest="N_list", required=True,
                    help="comma-separated increasing sample counts")
    sp.add_argument("--reps", type=int, default=32)
    sp.add_argument("--x0", type=int, default=0)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("converse", help="bridge contraction certification")
    common(sp)
    sp.add_argument("--t1-max", dest="t1_max", type=int, default=None)
    sp.add_argument("--T-max", dest="T_max", type=int, default=200)
    sp.set_defaults(fn=cmd_converse)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MinorizationRefused,) as exc:
        print(f"not certified: {exc}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    except (PowerIterationError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
