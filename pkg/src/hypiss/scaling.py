"""Diagonally scaled matrix norms.

``rho_k(K) = inf { ||D K D^-1||_k : D positive diagonal }`` for k = inf and
k = 2.  For k = inf the infimum is the Perron root of ``|K|`` and a minimizing
diagonal is ``D = diag(1 / v)`` with ``v`` the Perron vector.  For k = 2 the
objective is convex in ``log D``; we seed a derivative-free descent at a point
that already achieves the Perron root and polish from several starts.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NonPositiveDelta


@dataclass(frozen=True)
class ScalingResult:
    value: float
    delta: np.ndarray
    iterations: int
    converged: bool

    def to_dict(self):
        return {"value": self.value, "delta": self.delta.tolist(),
                "iterations": self.iterations, "converged": self.converged}


def _check_delta(delta, n):
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (n,):
        raise ValueError(f"delta must have {n} entries")
    if not np.all(delta > 0) or not np.all(np.isfinite(delta)):
        raise NonPositiveDelta("scaling entries must be positive and finite")
    return delta


def scaled_inf_norm(K, delta):
    """Operator inf-norm of ``diag(delta) K diag(delta)^-1``.

    Examples
    --------
    >>> scaled_inf_norm([[0, 2], [0.125, 0]], [1, 4])
    0.5
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    delta = _check_delta(delta, K.shape[0])
    return float(np.max(np.abs(K) @ (1.0 / delta) * delta))


def scaled_two_norm(K, delta):
    """Spectral norm of ``diag(delta) K diag(delta)^-1``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    delta = _check_delta(delta, K.shape[0])
    return float(np.linalg.norm(delta[:, None] * K / delta[None, :], 2))


def perron_root(A):
    """Spectral radius of a nonnegative matrix (dense eigenvalue solve)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not A.any():
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _perron_seed(A):
    """Nonnegative eigenvector for the eigenvalue of largest real part."""
    w, V = np.linalg.eig(A)
    k = int(np.argmax(w.real))
    v = np.abs(V[:, k].real)
    return v / v.max()


def rho_inf(K, tol=1e-13, max_iter=10_000):
    """Infimum of the scaled inf-norm over positive diagonals.

    Power iteration on ``I + |K|`` (the shift handles periodic matrices such as
    antidiagonal ones) with Collatz-Wielandt bracketing.  The reported value
    is the best upper bound found, which ``delta`` attains exactly.  When
    ``|K|`` is reducible the infimum may not be attained; then ``converged``
    is False and the value falls back to the Perron root.

    Examples
    --------
    >>> round(rho_inf([[0, 2], [0.125, 0]]).value, 12)
    0.5
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = K.shape[0]
    A = np.abs(K)
    if not A.any():
        return ScalingResult(0.0, np.ones(n), 0, True)
    rho = perron_root(A)
    # entries pinned at this floor signal a scaling that only attains the
    # infimum in the limit (reducible |K|)
    tiny = 1e-12
    v = np.maximum(_perron_seed(A), tiny)
    ones = np.ones(n)
    best, best_v = np.max(A @ ones), ones
    it = 0
    for it in range(1, max_iter + 1):
        Av = A @ v
        ratios = Av / v
        hi, lo = ratios.max(), ratios.min()
        if hi < best:
            best, best_v = hi, v.copy()
        if hi - lo <= tol * max(1.0, hi) or best - rho <= tol * max(1.0, rho):
            break
        v = np.maximum(v + Av, tiny)
        v /= v.max()
    converged = best - rho <= 1e-9 * max(1.0, rho) and best_v.min() > tiny
    delta = 1.0 / best_v
    delta /= delta.min()
    if not np.all(np.isfinite(delta)):
        delta = np.ones(n)
    if converged:
        value = scaled_inf_norm(K, delta)
    else:
        value = rho
    return ScalingResult(float(value), delta, it, bool(converged))


def rho_inf_descent(K, seed=0, starts=8, max_evals=4000):
    """Independent estimate of ``rho_inf`` by Nelder-Mead in log(delta)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    return _descent(K, lambda d: scaled_inf_norm(K, d), np.zeros(K.shape[0]),
                    seed, starts, max_evals)


def rho_two(K, seed=0, starts=16, max_evals=10_000):
    """Best spectral norm of ``D K D^-1`` found over positive diagonals ``D``.

    The first start is ``D = sqrt(w / v)`` with ``v``, ``w`` the right and left
    Perron vectors of ``|K|``.  At that point ``|D K D^-1|`` has the common
    right and left eigenvector ``sqrt(v w)``, so its spectral norm is at most
    the Perron root, and therefore the result never exceeds ``rho_inf``.

    Examples
    --------
    >>> round(rho_two([[0, 2], [0.125, 0]]).value, 9)
    0.5
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = K.shape[0]
    A = np.abs(K)
    if not A.any():
        return ScalingResult(0.0, np.ones(n), 0, True)
    candidates = [np.zeros(n), np.log(rho_inf(K).delta)]
    v = np.maximum(_perron_seed(A), 1e-150)
    w = np.maximum(_perron_seed(A.T), 1e-150)
    candidates.append(0.5 * (np.log(w) - np.log(v)))
    def objective(d):
        return np.linalg.svd(d[:, None] * K / d[None, :], compute_uv=False)[0]

    x0 = min(candidates, key=lambda y: objective(np.exp(y - y[0])))
    res = _descent(K, objective, x0, seed, starts, max_evals)
    return ScalingResult(scaled_two_norm(K, res.delta), res.delta, res.iterations, res.converged)


def _descent(K, objective, y0, seed, starts, max_evals, agree_tol=1e-10, agree_needed=1):
    """Multi-start Nelder-Mead in log(delta) with delta[0] fixed to 1.

    The objectives used here are convex in log(delta), so restarts mainly
    guard against simplex stagnation; the loop stops early once
    ``agree_needed`` restarts fail to improve on the incumbent.
    """
    n = K.shape[0]
    y0 = np.asarray(y0, dtype=float) - y0[0]
    if n == 1:
        return ScalingResult(objective(np.ones(1)), np.ones(1), 1, True)

    def f(z):
        y = np.concatenate(([0.0], np.clip(z, -300, 300)))
        return objective(np.exp(y))

    rng = np.random.default_rng(seed)
    best_z = y0[1:]
    best = f(best_z)
    evals, converged = 1, False
    budget = max(1, max_evals // max(1, starts))
    agree = 0
    for k in range(max(1, starts)):
        if evals >= max_evals:
            break
        z0 = best_z if k == 0 else best_z + rng.normal(scale=0.5, size=n - 1)
        res = minimize(f, z0, method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-13,
                                "maxfev": min(budget, max_evals - evals), "adaptive": n > 3})
        evals += res.nfev
        if k > 0 and res.fun >= best - agree_tol * max(1.0, best):
            agree += 1
        if res.fun < best:
            best, best_z = float(res.fun), res.x
        if agree >= agree_needed:
            break
        if k == 0:
            converged = bool(res.success)
    delta = np.exp(np.concatenate(([0.0], np.clip(best_z, -300, 300))))
    delta /= delta.min()
    return ScalingResult(objective(delta), delta, evals, converged)
