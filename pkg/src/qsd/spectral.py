"""Spectral analysis of killed kernels.

Computes the quasi-stationary distribution alpha (left Perron vector of
the killed kernel), the per-step survival eigenvalue rho, the survival
capacity eta (right Perron vector, scaled so alpha . eta = 1), and the
tilted measure beta = eta * alpha, which is the invariant law of the
chain conditioned to survive forever.

Also certifies the one-shot minorization / survival-comparison condition
(nu, c1, c2) and provides the log-linear decay fitter used by every
convergence report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from mpmath import mp

from . import xprec
from .kernels import Distribution, SubStochasticKernel, conditioned_evolve, tv_distance

__all__ = [
    "DecayFit",
    "MinorizationCert",
    "MinorizationRefused",
    "PowerIterationError",
    "SpectralTriple",
    "certify_minorization",
    "compute_spectral",
    "fit_decay",
    "generator_decay_rate",
    "physical_rate",
]


class PowerIterationError(RuntimeError):
    """Eigenpair iteration did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class MinorizationRefused(RuntimeError):
    """The minorization condition could not be certified at any probed t0."""


@dataclass(frozen=True)
class SpectralTriple:
    """Perron data of a killed kernel.

    alpha is the quasi-stationary distribution, rho the per-step survival
    eigenvalue, eta the positive right eigenvector with alpha . eta = 1,
    and beta = eta * alpha (entrywise).  ``residual`` is the largest
    eigen-equation defect actually achieved.
    """

    alpha: Distribution
    rho: float
    eta: np.ndarray
    beta: Distribution
    residual: float

    @property
    def lambda0(self) -> float:
        """Per-step exponential decay rate of survival, -ln(rho)."""
        return -math.log(self.rho)


def compute_spectral(
    K: SubStochasticKernel, tol: float = 1e-12, max_iters: int = 1_000_000
) -> SpectralTriple:
    """Left/right Perron pair by shifted power iteration.

    Iterates on (K + I/2)/1.5; the shift suppresses any residual
    periodicity without moving eigenvectors.  Deterministic: fixed uniform
    start, fixed iteration order.  Raises :class:`PowerIterationError`
    with the last residual if ``max_iters`` is exhausted, and rejects
    kernels whose survival eigenvalue reaches 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = K.entries
    n = K.n
    a = np.full(n, 1.0 / n)
    h = np.ones(n)
    residual = math.inf
    for _ in range(max_iters):
        a_new = (a @ A + 0.5 * a) / 1.5
        a = a_new / a_new.sum()
        h_new = (A @ h + 0.5 * h) / 1.5
        h = h_new / h_new.max()
        rho = float((a @ A).sum())
        res_a = float(np.max(np.abs(a @ A - rho * a)))
        res_h = float(np.max(np.abs(A @ h - rho * h)))
        residual = max(res_a, res_h)
        if residual <= tol:
            break
    else:
        raise PowerIterationError(
            f"no convergence after {max_iters} iterations (residual {residual:.3e})",
            residual,
        )
    if rho >= 1.0 - 1e-12:
        raise ValueError(f"survival eigenvalue {rho!r} >= 1: kernel has no absorption")
    eta = h / float(a @ h)
    beta = a * eta
    return SpectralTriple(alpha=a, rho=rho, eta=eta, beta=beta, residual=residual)


def physical_rate(rate_per_step: float, K: SubStochasticKernel) -> float:
    """Convert a per-step exponential rate to physical time units."""
    return rate_per_step / K.time_unit


def generator_decay_rate(K: SubStochasticKernel, triple: SpectralTriple) -> float:
    """Continuous-time decay rate of a uniformized kernel: (1 - rho)/time_unit.

    Exact for kernels built as I + G/theta: the survival eigenvalue shifts
    along with the generator spectrum.
    """
    return (1.0 - triple.rho) / K.time_unit


@dataclass(frozen=True)
class MinorizationCert:
    """Certified constants for the one-shot minorization condition.

    Every conditioned t0-step law dominates c1 * nu, and nu's survival
    probability dominates c2 times any state's, over the probed horizon
    with an eigenvector-sandwich tail bound beyond it.
    """

    t0: int
    nu: Distribution
    c1: float
    c2: float
    horizon: int


def _pilot_gamma(K: SubStochasticKernel, triple: SpectralTriple) -> float:
    """Crude conditioned-TV decay rate from a short double-precision run."""
    series = []
    rows = np.eye(K.n)
    for t in range(1, 26):
        rows = rows @ K.entries
        rows /= rows.sum(axis=1, keepdims=True)
        worst = max(tv_distance(rows[i], triple.alpha) for i in range(K.n))
        if worst < 1e-12:
            break
        series.append((t, worst))
    if len(series) < 3:
        return 1.0
    return max(fit_decay(series).gamma, 1e-3)


def certify_minorization(
    K: SubStochasticKernel, t0: int = 1, horizon: int | None = None
) -> MinorizationCert:
    """Construct (nu, c1, c2) witnessing the minorization condition.

    nu is the entrywise minimum of the conditioned t0-step laws
    (renormalized), c1 its total mass.  c2 is the worst ratio of nu's
    survival probability to the best state's, probed for t <= horizon;
    the tail beyond the horizon is bounded through the eigenvector
    sandwich (survival ratios converge to eta ratios at the conditioned
    TV decay rate).

    If c1 = 0 at the given t0, t0 is incremented up to n^2 before the
    condition is reported as not satisfied.  On a primitive kernel some
    t0 <= n^2 always works.
    """
    if t0 < 1:
        raise ValueError("t0 must be >= 1")
    triple = compute_spectral(K)
    gamma_hat = _pilot_gamma(K, triple)
    if horizon is None:
        horizon = int(math.ceil(20.0 / gamma_hat))
    if horizon < 1:
        raise ValueError("horizon must be >= 1")

    n = K.n
    t0_used = None
    for cand in range(t0, n * n + 1):
        rows = np.stack([conditioned_evolve(K, np.eye(n)[x], cand) for x in range(n)])
        mins = rows.min(axis=0)
        c1 = float(mins.sum())
        if c1 > 0.0:
            t0_used = cand
            break
    if t0_used is None:
        raise MinorizationRefused(
            f"entrywise minimum of conditioned laws is zero for every t0 <= {n * n}"
        )
    nu = mins / c1

    # Survival-ratio curve: P_nu(t < absorption) / max_x P_x(t < absorption).
    v = np.ones(n)
    ratios = [1.0]
    for _ in range(horizon):
        v = K.entries @ v
        v /= v.max()  # renormalized: ratios of survival probabilities are preserved
        ratios.append(float(nu @ v))
    probe_min = min(ratios)

    # Tail beyond the horizon: survival ratios converge to the eta ratio
    # r_inf = nu(eta)/max eta, with relative deviation <= 2 a e^(-g t)/(1 - a e^(-g t)).
    r_inf = float(nu @ triple.eta) / float(triple.eta.max())
    a_loc = 0.0
    for t in range(1, horizon + 1):
        dev = abs(ratios[t] / r_inf - 1.0)
        if dev < 1e-12:
            continue
        # dev <= 2 a q / (1 - a q) with q = e^(-g t)  =>  a >= dev / (q (2 + dev))
        q = math.exp(-gamma_hat * t)
        a_loc = max(a_loc, dev / (q * (2.0 + dev)))
    q_h = math.exp(-gamma_hat * horizon)
    if a_loc * q_h < 1.0:
        tail = r_inf * (1.0 - 2.0 * a_loc * q_h / (1.0 - a_loc * q_h))
    else:
        tail = 0.0
    c2 = min(probe_min, max(tail, 0.0))
    if c2 <= 0.0:
        raise MinorizationRefused(
            f"survival-comparison constant vanished at t0={t0_used}, horizon={horizon}; "
            "probe a longer horizon"
        )
    return MinorizationCert(t0=t0_used, nu=nu, c1=c1, c2=c2, horizon=horizon)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(value) = log(C) - gamma * t."""

    C: float
    gamma: float
    rms_residual: float


def _log_value(v) -> float:
    # mpf values may underflow float conversion; take the log in mp first.
    if isinstance(v, mp.mpf):
        if v <= 0:
            raise ValueError(f"nonpositive value in decay series: {v}")
        return float(mp.log(v))
    v = float(v)
    if v <= 0 or not math.isfinite(v):
        raise ValueError(f"nonpositive value in decay series: {v!r}")
    return math.log(v)


def fit_decay(series) -> DecayFit:
    """Fit C e^(-gamma t) to positive samples by least squares in log space.

    Needs at least three points with distinct times; any nonpositive value
    is rejected.  Decay is not assumed: gamma is simply the negated slope.
    """
    pts = [(float(t), _log_value(v)) for t, v in series]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a decay rate")
    ts = np.array([t for t, _ in pts])
    ys = np.array([y for _, y in pts])
    if float(ts.std()) == 0.0:
        raise ValueError("degenerate series: all samples at the same time")
    slope, intercept = np.polyfit(ts, ys, 1)
    resid = ys - (slope * ts + intercept)
    return DecayFit(
        C=float(np.exp(intercept)),
        gamma=float(-slope),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
    )


def conditioned_tv_rate(
    K: SubStochasticKernel, triple: SpectralTriple, t_max: int = 60
) -> DecayFit:
    """Decay rate of sup_x TV(law of X_t | survival, alpha).

    The series is computed in extended precision (double noise would swamp
    it past t ~ 45) and the rate is fitted on the tail half of the range,
    where transients from subdominant eigenvalues are exponentially dead.
    """
    pilot = _pilot_gamma(K, triple)
    dps = xprec.working_dps(pilot, t_max)
    with mp.workdps(dps):
        A = xprec.to_mp(K.entries)
        alpha, _, _ = xprec.power_pair(A, dps)
        series = []
        for t, rows in xprec.conditioned_rows(A, t_max):
            worst = max(xprec.tv(rows[i], alpha) for i in range(K.n))
            series.append((t, worst))
    tail = [p for p in series if p[0] > t_max // 2]
    if len(tail) < 3 or any(v == 0 for _, v in tail):
        # constant-eta chains mix conditionally in one step; report +inf rate
        return DecayFit(C=0.0, gamma=math.inf, rms_residual=0.0)
    return fit_decay(tail)
