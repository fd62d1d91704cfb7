"""Bridge operators, their contraction, and the converse certification.

The bridge operator at lag t under horizon T maps a starting state to the
law of X_t conditioned on survival past T.  These operators compose like
a (time-inhomogeneous) Markov semigroup, so a uniform-in-T contraction of
the pair supremum at one lag forces geometric decay of the pair supremum
of the full conditioned evolution - which is what the certification
checks, and what ultimately pins down a unique quasi-stationary law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp, mpf

from . import xprec
from .kernels import SubStochasticKernel, bridge_marginals, tv_distance
from .qprocess import QKernel
from .spectral import compute_spectral, fit_decay

__all__ = [
    "ContractionReport",
    "HypothesisReport",
    "certify_converse",
    "dobrushin_coeff",
    "hypothesis_check",
]


def dobrushin_coeff(K: SubStochasticKernel, t: int, T: int) -> float:
    """Largest pair TV distance between bridge laws at lag t, horizon T.

    Exact over all state pairs; survival reweighting is carried in
    renormalized form, so large T cannot underflow.  Zero for one state.
    """
    M = bridge_marginals(K, t, T)
    worst = 0.0
    for i in range(K.n):
        for j in range(i + 1, K.n):
            worst = max(worst, tv_distance(M[i], M[j]))
    return worst


@dataclass
class ContractionReport:
    """Outcome of the contraction search.

    When ``certified`` is set, every probed horizon T >= T1 (a geometric
    grid plus the infinite-horizon limit) has pair-supremum TV at lag t1
    of at most ``delta`` <= 1/2, and ``decay_curve`` records the pair
    supremum of the full conditioned evolution along T together with the
    implied geometric envelope.
    """

    t1: int
    T1: int
    delta: float
    decay_curve: list
    certified: bool
    probed: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def envelope(self, T: int) -> float:
        return 0.5 ** ((T - self.T1) // self.t1) if T >= self.T1 else 1.0


def _pair_tv_limit(Q: np.ndarray, t1: int) -> float:
    """Infinite-horizon limit of the lag-t1 bridge coefficient: as T grows
    the bridge laws converge to those of the conditioned-forever chain."""
    n = Q.shape[0]
    P = np.linalg.matrix_power(Q, t1)
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, 0.5 * float(np.abs(P[i] - P[j]).sum()))
    return worst


def certify_converse(
    K: SubStochasticKernel, t1_max: int | None = None, T_max: int = 200
) -> ContractionReport:
    """Find the smallest lag whose bridge contraction is uniformly <= 1/2.

    For each candidate lag the horizon supremum is probed on a geometric
    grid {t1, 2 t1, 4 t1, ...} up to ``T_max`` and completed with the
    infinite-horizon limit (on a finite primitive chain the bridge
    coefficient converges in T, so the probe plus the limit is the honest
    finite-compute rendering of a supremum over all horizons).  On
    success, the pair supremum of the conditioned evolution is tabulated
    along T against the geometric envelope (1/2)^floor((T - T1)/t1); a
    search that exhausts its limits returns a not-certified report with
    the probed frontier, never a silent pass.
    """
    if t1_max is None:
        t1_max = max(8, K.n)
    if t1_max < 1 or T_max < 1:
        raise ValueError("search limits must be positive")
    S = compute_spectral(K)
    Q = K.entries * S.eta[None, :] / (S.rho * S.eta[:, None])
    Q /= Q.sum(axis=1, keepdims=True)
    probed: dict[int, list] = {}
    chosen = None
    for t1 in range(1, t1_max + 1):
        grid = []
        T = t1
        while T <= max(T_max, t1):
            grid.append(T)
            T *= 2
        deltas = [(T, dobrushin_coeff(K, t1, T)) for T in grid]
        limit = _pair_tv_limit(Q, t1)
        sup_delta = max(max(d for _, d in deltas), limit)
        probed[t1] = deltas + [(None, limit)]
        if sup_delta <= 0.5:
            chosen = (t1, sup_delta)
            break
    if chosen is None:
        return ContractionReport(
            t1=0, T1=0, delta=math.nan, decay_curve=[], certified=False,
            probed=probed, details={"t1_max": t1_max, "T_max": T_max},
        )
    t1, delta = chosen
    T1 = t1

    # Decay of the pair supremum of the conditioned evolution along T,
    # probed on the lattice T1 + k t1 (where the floor in the envelope is
    # exact), in extended precision since the true values decay below the
    # double-precision noise floor.
    curve_Ts = list(range(T1, T_max + 1, t1))
    pilot = -math.log(max(delta, 1e-6)) / t1
    dps = xprec.working_dps(1.2 * max(pilot, 0.2), T_max)
    decay_curve = []
    with mp.workdps(dps):
        A = xprec.to_mp(K.entries)
        floor = mpf(10) ** (-(dps - 15))
        want = set(curve_Ts)
        for T, rows in xprec.conditioned_rows(A, max(curve_Ts)):
            if T in want:
                worst = mpf(0)
                for i in range(K.n):
                    for j in range(i + 1, K.n):
                        worst = max(worst, xprec.tv(rows[i], rows[j]))
                decay_curve.append((T, float(worst if worst >= floor else mpf(0))))
    report = ContractionReport(
        t1=t1, T1=T1, delta=delta, decay_curve=decay_curve, certified=True,
        probed=probed, details={"t1_max": t1_max, "T_max": T_max, "dps": dps},
    )
    report.details["envelope_ok"] = all(
        v <= report.envelope(T) * (1.0 + 1e-9) for T, v in decay_curve
    )
    return report


@dataclass
class HypothesisReport:
    """Decay curves behind the converse certification's two hypotheses.

    ``marginal_curve``: per horizon T, the worst TV distance (over states
    and probed lags) between the conditioned-forever marginal and the
    bridge marginal.  ``coupling_curve``: per lag t, the worst pair TV
    distance between conditioned-forever marginals.  Both must vanish for
    the converse machinery to apply; fitted rates are reported when the
    curves carry signal.
    """

    marginal_curve: list
    coupling_curve: list
    marginal_decays: bool
    coupling_decays: bool
    marginal_rate: float | None = None
    coupling_rate: float | None = None


def hypothesis_check(K: SubStochasticKernel, Q: QKernel, t_grid, T_grid) -> HypothesisReport:
    """Evaluate the two decay curves the converse certification rests on.

    The marginal curve at horizon T takes the supremum over probed lags
    t <= T (so ``t_grid`` should stay well below the horizons in
    ``T_grid``); the coupling curve is indexed by the lag alone.  Both
    are computed in extended precision and flagged if they fail to decay.
    """
    ts = sorted({int(t) for t in t_grid})
    Ts = sorted({int(T) for T in T_grid})
    if not ts or not Ts or ts[0] < 1 or Ts[0] < 1:
        raise ValueError("grids must contain integers >= 1")
    n = K.n
    t_max = ts[-1]
    T_max = Ts[-1]

    rows_d = np.eye(n)
    pilot_series = []
    for t in range(1, min(T_max, 25) + 1):
        rows_d = rows_d @ Q.entries
        worst = max(
            0.5 * np.abs(rows_d[i] - rows_d[j]).sum()
            for i in range(n) for j in range(i + 1, n)
        ) if n > 1 else 0.0
        if worst > 1e-12:
            pilot_series.append((t, worst))
    try:
        pilot = max(fit_decay(pilot_series).gamma, 1e-3) if len(pilot_series) >= 3 else 1.0
    except ValueError:
        pilot = 1.0
    dps = xprec.working_dps(1.2 * pilot, T_max + t_max)
    floor_exp = -(dps - 15)

    marginal = {}
    coupling = {}
    t_set = set(ts)
    with mp.workdps(dps):
        A = xprec.to_mp(K.entries)
        alpha, rho, eta = xprec.power_pair(A, dps)
        Qmp = xprec.h_transform(A, rho, eta)
        floor = mpf(10) ** floor_exp
        qrows_at = {}
        for t, qrows in xprec.stochastic_rows(Qmp, t_max):
            if t in t_set:
                qrows_at[t] = [row[:] for row in qrows]
                worst = mpf(0)
                for i in range(n):
                    for j in range(i + 1, n):
                        worst = max(worst, xprec.tv(qrows[i], qrows[j]))
                coupling[t] = float(worst if worst >= floor else mpf(0))
        surv = xprec.survival_vectors(A, T_max)
        prows_at = {}
        for t, prows in xprec.conditioned_rows(A, t_max):
            if t in t_set:
                prows_at[t] = [row[:] for row in prows]
        for T in Ts:
            worst = mpf(0)
            for t in ts:
                if t > T:
                    continue
                for x in range(n):
                    b = xprec.bridge_row(prows_at[t][x], surv[T - t])
                    worst = max(worst, xprec.tv(b, qrows_at[t][x]))
            marginal[T] = float(worst if worst >= floor else mpf(0))

    marginal_curve = [(T, marginal[T]) for T in Ts]
    coupling_curve = [(t, coupling[t]) for t in ts]

    def decays(curve):
        head = curve[0][1]
        tail = curve[-1][1]
        return tail == 0.0 or tail <= 0.5 * head

    def rate(curve):
        pos = [(t, v) for t, v in curve if v > 0]
        if len(pos) < 3:
            return None
        try:
            return fit_decay(pos).gamma
        except ValueError:
            return None

    return HypothesisReport(
        marginal_curve=marginal_curve,
        coupling_curve=coupling_curve,
        marginal_decays=decays(marginal_curve),
        coupling_decays=decays(coupling_curve),
        marginal_rate=rate(marginal_curve),
        coupling_rate=rate(coupling_curve),
    )
