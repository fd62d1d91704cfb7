"""Kernel and distribution algebra for absorbed Markov chains.

A chain on survivor states E = {0..n-1} plus one absorbing cemetery state
is represented by its killed transition matrix: the n-by-n block of
transition probabilities among survivors.  Row deficits (1 - row sum) are
the per-step absorption probabilities.  All long-horizon products are
computed with stepwise renormalization, carrying the log of the discarded
mass, so horizons in the thousands never underflow.

Distributions over survivor states are plain 1-D numpy arrays; use
:func:`as_distribution` to validate one.  Kernel and generator entries are
frozen at construction, and every operation here is a pure function of its
inputs, so values are safe to share across threads.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Distribution",
    "Generator",
    "HorizonTooLarge",
    "SubStochasticKernel",
    "as_distribution",
    "bridge_marginals",
    "conditioned_evolve",
    "conditioned_marginal_given_T",
    "log_survival_vector",
    "read_kernel",
    "survival_probability",
    "survival_vector",
    "tv_distance",
    "uniformize",
    "write_kernel",
]

#: Distributions are 1-D float arrays over the survivor states.
Distribution = np.ndarray

_MASS_TOL = 1e-12


class HorizonTooLarge(RuntimeError):
    """Survival mass underflowed; the requested horizon is numerically dead."""


def as_distribution(weights, normalized: bool = True) -> Distribution:
    """Validate and return a copy of a weight vector.

    With ``normalized`` the weights must sum to 1 within 1e-12; either way
    they must be finite and nonnegative.
    """
    w = np.asarray(weights, dtype=float).copy()
    if w.ndim != 1:
        raise ValueError("distribution must be a 1-D vector")
    if not np.all(np.isfinite(w)):
        raise ValueError("distribution has non-finite entries")
    if np.any(w < 0):
        raise ValueError("distribution has negative entries")
    if normalized and abs(w.sum() - 1.0) > _MASS_TOL:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return w


def tv_distance(mu: Distribution, nu: Distribution) -> float:
    """Total variation distance, fixed as half the L1 distance."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("distributions have different lengths")
    return 0.5 * float(np.abs(mu - nu).sum())


def _primitivity_witness(entries: np.ndarray) -> list[tuple[int, int]]:
    """Pairs (x, y) never reached with positive probability at the Wielandt
    exponent; empty iff the kernel is primitive."""
    n = entries.shape[0]
    b = entries > 0.0
    # Wielandt: primitive iff B^((n-1)^2 + 1) is entrywise positive.
    target = (n - 1) ** 2 + 1
    acc = np.eye(n, dtype=bool)
    sq = b
    k = target
    while k:
        if k & 1:
            acc = acc @ sq
        sq = sq @ sq
        k >>= 1
    missing = np.argwhere(~acc)
    return [(int(x), int(y)) for x, y in missing]


class SubStochasticKernel:
    """Killed transition matrix on the survivor states.

    Parameters
    ----------
    entries:
        Square matrix, entrywise >= 0, every row sum <= 1, at least one
        row sum < 1 (absorption must be possible).
    time_unit:
        Physical duration of one step (1.0 for native discrete time).
        Per-step rates divide by it to become physical rates.

    Reducible or periodic kernels are rejected at construction: the
    spectral machinery downstream silently breaks without a unique
    strictly dominant eigenvalue, so the failure is surfaced here with
    the offending state pairs.
    """

    def __init__(self, entries, time_unit: float = 1.0):
        m = np.asarray(entries, dtype=float).copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kernel must be a square matrix")
        if not np.all(np.isfinite(m)):
            raise ValueError("kernel has non-finite entries")
        if np.any(m < 0):
            raise ValueError("kernel has negative entries")
        rs = m.sum(axis=1)
        if np.any(rs > 1.0 + _MASS_TOL):
            bad = int(np.argmax(rs))
            raise ValueError(f"row {bad} sums to {rs[bad]!r} > 1")
        if not np.any(rs < 1.0 - _MASS_TOL):
            raise ValueError("no absorption: every row sum equals 1")
        if not (time_unit > 0 and np.isfinite(time_unit)):
            raise ValueError("time_unit must be a positive real")
        missing = _primitivity_witness(m)
        if missing:
            head = ", ".join(f"{x}->{y}" for x, y in missing[:8])
            more = "" if len(missing) <= 8 else f" (+{len(missing) - 8} more)"
            raise ValueError(
                "kernel is reducible or periodic on the survivor states; "
                f"unreachable pairs at the Wielandt exponent: {head}{more}"
            )
        m.setflags(write=False)
        self.entries = m
        self.n = m.shape[0]
        self.time_unit = float(time_unit)

    @property
    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    @property
    def absorption_probabilities(self) -> np.ndarray:
        return 1.0 - self.row_sums

    def __repr__(self) -> str:
        return f"SubStochasticKernel(n={self.n}, time_unit={self.time_unit})"


def _evolve(K: SubStochasticKernel, mu: np.ndarray, t: int) -> tuple[np.ndarray, float]:
    """t-step forward evolution with stepwise renormalization.

    Returns the conditioned (renormalized) distribution and the log of the
    total survival mass accumulated along the way.
    """
    v = mu.astype(float, copy=True)
    log_mass = 0.0
    for _ in range(t):
        v = v @ K.entries
        mass = v.sum()
        if mass < 1e-300:
            raise HorizonTooLarge(
                "survival mass underflowed during evolution; the horizon is "
                "too large for the remaining mass"
            )
        v /= mass
        log_mass += np.log(mass)
    return v, log_mass


def survival_vector(K: SubStochasticKernel, t: int) -> np.ndarray:
    """Vector of t-step survival probabilities, entry x = (K^t 1)(x)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.ones(K.n)
    for _ in range(t):
        v = K.entries @ v
    return v


def log_survival_vector(K: SubStochasticKernel, t: int) -> np.ndarray:
    """Log of the t-step survival probabilities, safe for t in the thousands."""
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.ones(K.n)
    log_scale = 0.0
    for _ in range(t):
        v = K.entries @ v
        top = v.max()
        if top <= 0.0:
            raise HorizonTooLarge("all survival probabilities underflowed")
        v /= top
        log_scale += np.log(top)
    return np.log(v) + log_scale


def survival_probability(K: SubStochasticKernel, mu, t: int, log: bool = False) -> float:
    """P(t < absorption) when started from distribution mu."""
    mu = as_distribution(mu)
    if mu.shape[0] != K.n:
        raise ValueError("distribution length does not match kernel size")
    if t < 0:
        raise ValueError("t must be >= 0")
    _, log_mass = _evolve(K, mu, t)
    return log_mass if log else float(np.exp(log_mass))


def conditioned_evolve(K: SubStochasticKernel, mu, t: int) -> Distribution:
    """Law of X_t given survival to time t, started from mu.

    Computed by stepwise renormalization, so any horizon the chain can
    numerically survive is fine; a zero-mass step raises
    :class:`HorizonTooLarge`.
    """
    mu = as_distribution(mu)
    if mu.shape[0] != K.n:
        raise ValueError("distribution length does not match kernel size")
    if t < 0:
        raise ValueError("t must be >= 0")
    v, _ = _evolve(K, mu, t)
    return v


def conditioned_marginal_given_T(K: SubStochasticKernel, x: int, t: int, T: int) -> Distribution:
    """Law of X_t given X_0 = x and survival past the later horizon T.

    Weights are proportional to K^t(x, .) reweighted by the remaining
    survival probabilities (K^(T-t) 1); both factors are carried in
    renormalized form, so no underflow occurs at large T.
    """
    if not 0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    if not 0 <= x < K.n:
        raise ValueError("state out of range")
    row = np.zeros(K.n)
    row[x] = 1.0
    p, _ = _evolve(K, row, t)
    if t == T:  # no future to condition on; identical to plain evolution
        return p
    v = np.ones(K.n)
    for _ in range(T - t):
        v = K.entries @ v
        v /= v.max()
    w = p * v
    mass = w.sum()
    if mass <= 0.0:
        raise HorizonTooLarge("no surviving mass for the requested bridge")
    return w / mass


def bridge_marginals(K: SubStochasticKernel, t: int, T: int) -> np.ndarray:
    """All conditioned marginals at once: row x is
    ``conditioned_marginal_given_T(K, x, t, T)``."""
    if not 0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    P = np.eye(K.n)
    for _ in range(t):
        P = P @ K.entries
        P /= P.sum(axis=1, keepdims=True)
    if t == T:
        return P
    v = np.ones(K.n)
    for _ in range(T - t):
        v = K.entries @ v
        v /= v.max()
    M = P * v
    return M / M.sum(axis=1, keepdims=True)


class Generator:
    """Continuous-time rate matrix with killing.

    Off-diagonal entries are jump rates (>= 0); row sums <= 0, the deficit
    being the killing rate out of the survivor set.
    """

    def __init__(self, rates):
        g = np.asarray(rates, dtype=float).copy()
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("generator must be a square matrix")
        if not np.all(np.isfinite(g)):
            raise ValueError("generator has non-finite entries")
        off = g.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be >= 0")
        if np.any(np.diag(g) > 0):
            raise ValueError("diagonal entries must be <= 0")
        if np.any(g.sum(axis=1) > _MASS_TOL):
            raise ValueError("row sums must be <= 0 (deficit is the killing rate)")
        g.setflags(write=False)
        self.rates = g
        self.n = g.shape[0]

    def __repr__(self) -> str:
        return f"Generator(n={self.n})"


def uniformize(G: Generator, theta: float) -> SubStochasticKernel:
    """Embed a killed generator as a discrete kernel K = I + G/theta.

    ``theta`` must dominate every diagonal rate magnitude; the returned
    kernel carries time_unit = 1/theta.  The continuous-time decay rate is
    recovered from the kernel's survival eigenvalue rho as
    (1 - rho) / time_unit.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    max_diag = float(np.max(-np.diag(G.rates))) if G.n else 0.0
    if theta < max_diag:
        raise ValueError(
            f"theta={theta!r} is below the largest diagonal rate {max_diag!r}; "
            "the embedded kernel would have negative diagonal entries"
        )
    K = np.eye(G.n) + G.rates / theta
    K[K < 0] = 0.0  # clip roundoff at theta == max diagonal
    return SubStochasticKernel(K, time_unit=1.0 / theta)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_kernel(K: SubStochasticKernel, path) -> None:
    """Write the plain-text kernel format (17 significant digits)."""
    lines = [f"n {K.n} time_unit {_fmt(K.time_unit)}"]
    for row in K.entries:
        lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_kernel(path) -> SubStochasticKernel:
    """Parse the plain-text kernel format; rejects NaN and negative entries."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, s) for i, s in enumerate(raw) if s.strip()]
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    lineno, header = lines[0]
    tok = header.split()
    if len(tok) != 4 or tok[0] != "n" or tok[2] != "time_unit":
        raise ValueError(f"{path}:{lineno}: expected 'n <int> time_unit <float>'")
    try:
        n = int(tok[1])
        time_unit = float(tok[3])
    except ValueError as exc:
        raise ValueError(f"{path}:{lineno}: bad header values: {exc}") from None
    if n <= 0:
        raise ValueError(f"{path}:{lineno}: n must be positive")
    if len(lines) - 1 != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    entries = np.empty((n, n))
    for r, (lineno, s) in enumerate(lines[1:]):
        parts = s.split()
        if len(parts) != n:
            raise ValueError(f"{path}:{lineno}: expected {n} entries, found {len(parts)}")
        for c, p in enumerate(parts):
            try:
                v = float(p)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {p!r}") from None
            if np.isnan(v):
                raise ValueError(f"{path}:{lineno}: NaN entry")
            if v < 0:
                raise ValueError(f"{path}:{lineno}: negative entry {p!r}")
            entries[r, c] = v
    return SubStochasticKernel(entries, time_unit=time_unit)
