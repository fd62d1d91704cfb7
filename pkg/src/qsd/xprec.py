"""Extended-precision propagation helpers.

Verification grids reach horizons where the quantities being bounded decay
like e^(-rate * t) far below the double-precision noise floor (a stepwise
matrix product carries ~1e-15 relative error, swamping anything smaller).
These helpers redo the small-matrix propagation in mpmath with a working
precision chosen from the fitted rate and the largest horizon, so observed
errors stay meaningful all the way down the grid.

Vectors are plain lists of mpf; kernels are mpmath matrices.  Everything
here is deterministic and single-threaded.
"""

from __future__ import annotations

import math

from mpmath import matrix, mp, mpf

_LN10 = math.log(10.0)


def working_dps(rate: float, horizon: int, cushion: int = 30, floor: int = 50) -> int:
    """Decimal digits needed to resolve values of size e^(-rate*horizon)."""
    if not (rate > 0) or not math.isfinite(rate):
        return floor
    return max(floor, int(math.ceil(rate * horizon / _LN10)) + cushion)


def to_mp(entries) -> matrix:
    """mpmath matrix from a numpy array (binary doubles convert exactly)."""
    n = entries.shape[0]
    A = matrix(n, n)
    for i in range(n):
        for j in range(n):
            A[i, j] = mpf(float(entries[i, j]))
    return A


def tv(u, v) -> mpf:
    """Half-L1 distance between two weight lists."""
    return sum(abs(a - b) for a, b in zip(u, v)) / 2


def power_pair(A: matrix, dps: int):
    """Perron data (alpha, rho, eta) of a primitive substochastic mp matrix.

    Shifted power iteration on (A + I/2)/1.5, run to a residual of
    10^-(dps-8) on A itself.  alpha sums to 1 and eta is scaled so that
    alpha . eta = 1.  Must be called inside ``mp.workdps(dps)``.
    """
    n = A.rows
    target = mpf(10) ** (-(dps - 8))
    a = [mpf(1) / n] * n
    h = [mpf(1)] * n
    half = mpf("0.5")
    scale = mpf("1.5")
    max_iters = 500 * dps + 1000
    for _ in range(max_iters):
        a_new = [
            (sum(a[i] * A[i, j] for i in range(n)) + half * a[j]) / scale
            for j in range(n)
        ]
        s = sum(a_new)
        a = [x / s for x in a_new]
        h_new = [
            (sum(A[i, j] * h[j] for j in range(n)) + half * h[i]) / scale
            for i in range(n)
        ]
        m = max(h_new)
        h = [x / m for x in h_new]
        rho = sum(sum(a[i] * A[i, j] for i in range(n)) for j in range(n))
        res_a = max(
            abs(sum(a[i] * A[i, j] for i in range(n)) - rho * a[j]) for j in range(n)
        )
        res_h = max(
            abs(sum(A[i, j] * h[j] for j in range(n)) - rho * h[i]) for i in range(n)
        )
        if res_a <= target and res_h <= target:
            break
    else:
        raise RuntimeError(f"extended-precision power iteration stalled at dps={dps}")
    ah = sum(x * y for x, y in zip(a, h))
    eta = [x / ah for x in h]
    return a, rho, eta


def conditioned_rows(A: matrix, t_max: int):
    """Yield (t, rows) for t = 1..t_max, where rows[x] is the law of X_t
    conditioned on survival, started from x (stepwise renormalized)."""
    n = A.rows
    rows = [[mpf(1) if j == i else mpf(0) for j in range(n)] for i in range(n)]
    for t in range(1, t_max + 1):
        for i in range(n):
            nxt = [sum(rows[i][k] * A[k, j] for k in range(n)) for j in range(n)]
            mass = sum(nxt)
            rows[i] = [x / mass for x in nxt]
        yield t, rows


def survival_vectors(A: matrix, t_max: int) -> list[list[mpf]]:
    """Renormalized survival vectors v_t (proportional to A^t 1), t = 0..t_max."""
    n = A.rows
    out = [[mpf(1)] * n]
    v = out[0]
    for _ in range(t_max):
        v = [sum(A[i, j] * v[j] for j in range(n)) for i in range(n)]
        top = max(v)
        v = [x / top for x in v]
        out.append(v)
    return out


def bridge_row(prefix_row, surv) -> list[mpf]:
    """Conditioned bridge law: prefix law reweighted by remaining survival."""
    w = [p * s for p, s in zip(prefix_row, surv)]
    mass = sum(w)
    return [x / mass for x in w]


def h_transform(A: matrix, rho: mpf, eta) -> matrix:
    """Stochastic matrix Q(x,y) = A(x,y) eta(y) / (rho eta(x))."""
    n = A.rows
    Q = matrix(n, n)
    for i in range(n):
        for j in range(n):
            Q[i, j] = A[i, j] * eta[j] / (rho * eta[i])
    return Q


def stochastic_rows(Q: matrix, t_max: int):
    """Yield (t, rows) of t-step laws of a stochastic mp matrix from each state."""
    n = Q.rows
    rows = [[mpf(1) if j == i else mpf(0) for j in range(n)] for i in range(n)]
    for t in range(1, t_max + 1):
        for i in range(n):
            rows[i] = [sum(rows[i][k] * Q[k, j] for k in range(n)) for j in range(n)]
        yield t, rows
