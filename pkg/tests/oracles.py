"""Independent oracles for the test suite.

Deliberately different machinery from the library: dense eigensolves
(mpmath's QR-based ``eig``) instead of power iteration, direct matrix
powers instead of stepwise renormalized propagation, and exhaustive path
enumeration instead of any linear-algebra shortcut.  Expected values in
the tests come from these, never from the code under test.
"""

from __future__ import annotations

import itertools

import numpy as np
from mpmath import eig, matrix, mp


def mp_matrix(entries, dps: int = 40) -> matrix:
    n = entries.shape[0]
    M = matrix(n, n)
    for i in range(n):
        for j in range(n):
            M[i, j] = float(entries[i, j])
    return M


def eig_triple(entries, dps: int = 40):
    """(alpha, rho, eta, beta) from dense eigendecompositions of K and K^T.

    Normalized exactly like the library contract: alpha sums to 1, eta is
    scaled so alpha . eta = 1, beta = alpha * eta entrywise.
    """
    n = entries.shape[0]
    with mp.workdps(dps):
        M = mp_matrix(entries, dps)
        E, ER = eig(M)
        k = max(range(n), key=lambda i: E[i].real)
        rho = E[k].real
        eta = [abs(ER[i, k].real) for i in range(n)]
        Et, EL = eig(M.T)
        kt = max(range(n), key=lambda i: Et[i].real)
        alpha = [abs(EL[i, kt].real) for i in range(n)]
        s = sum(alpha)
        alpha = [a / s for a in alpha]
        ah = sum(a * h for a, h in zip(alpha, eta))
        eta = [h / ah for h in eta]
        beta = [a * h for a, h in zip(alpha, eta)]
    return (
        np.array([float(a) for a in alpha]),
        float(rho),
        np.array([float(h) for h in eta]),
        np.array([float(b) for b in beta]),
    )


def second_eigenvalue_magnitude(entries) -> float:
    ev = np.linalg.eigvals(entries)
    ev = ev[np.argsort(-np.abs(ev))]
    return float(np.abs(ev[1]))


def power_marginal(entries, mu, t: int, dps: int = 60) -> np.ndarray:
    """Conditioned law of X_t by direct extended-precision matrix power."""
    n = entries.shape[0]
    with mp.workdps(dps):
        M = mp_matrix(entries, dps)
        P = M ** t
        row = [sum(mp.mpf(float(mu[i])) * P[i, j] for i in range(n)) for j in range(n)]
        mass = sum(row)
        out = [float(r / mass) for r in row]
    return np.array(out)


def paths_upto(n: int, length: int):
    return itertools.product(range(n), repeat=length)


def enum_bridge(entries, x: int, t: int, T: int) -> np.ndarray:
    """Law of X_t given X_0 = x and survival past T, by summing the
    probability of every surviving length-T path."""
    n = entries.shape[0]
    weights = np.zeros(n)
    total = 0.0
    for path in paths_upto(n, T):
        p = 1.0
        prev = x
        for s in path:
            p *= entries[prev, s]
            if p == 0.0:
                break
            prev = s
        if p == 0.0:
            continue
        total += p
        at_t = x if t == 0 else path[t - 1]
        weights[at_t] += p
    return weights / total


def enum_functional(entries, x: int, f, atoms, T: int) -> float:
    """E(sum_atoms w f(X_t) | survival past T) by path enumeration."""
    n = entries.shape[0]
    f = np.asarray(f, dtype=float)
    num = 0.0
    den = 0.0
    for path in paths_upto(n, T):
        p = 1.0
        prev = x
        for s in path:
            p *= entries[prev, s]
            if p == 0.0:
                break
            prev = s
        if p == 0.0:
            continue
        den += p
        states = (x,) + path
        num += p * sum(w * f[states[t]] for t, w in atoms)
    return num / den


def enum_survival(entries, x: int, t: int) -> float:
    """P(t < absorption | X_0 = x) by summing every surviving path."""
    n = entries.shape[0]
    total = 0.0
    for path in paths_upto(n, t):
        p = 1.0
        prev = x
        for s in path:
            p *= entries[prev, s]
            if p == 0.0:
                break
            prev = s
        total += p
    return total


def enum_pair_tv(entries, t: int, T: int) -> float:
    """Dobrushin coefficient of the bridge at (t, T) by path enumeration."""
    n = entries.shape[0]
    rows = [enum_bridge(entries, x, t, T) for x in range(n)]
    return max(
        0.5 * float(np.abs(rows[i] - rows[j]).sum())
        for i in range(n)
        for j in range(i + 1, n)
    )
