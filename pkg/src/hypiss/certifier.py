"""ISS certificates for linearized hyperbolic boundary-control systems.

A certificate consists of positive weights ``f_i(x)`` satisfying the
interior inequality

    Lambda_i f_i' <= -2 (-M_ii f_i + sum_{k != i} |M_ik| f_i^{3/2} / sqrt(f_k))

and a boundary inequality coupling the end values of ``f`` with ``J = G'(0)``.
When ``M = 0`` the weights can be taken constant and the boundary inequality
collapses to ``rho_inf(J) < 1``.

Weights are integrated from the equality version of the interior inequality
in log form, ``y = log f``, where the right side depends only on differences
``y_i - y_k``.  That makes every computation here invariant under a common
rescaling of ``f``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import (BlowUpPresent, CertificationFailure, DimensionMismatch,
                     NonPositiveInit, NonPositiveMu)
from .model import SpatialGrid, sample_coefficients
from .report import ConditionReport
from .scaling import rho_inf, scaled_inf_norm

OVERFLOW_CAP = 1e12
POSITIVITY_FLOOR = 1e-12
INIT_SWEEP = (1e-2, 1e-1, 1.0, 10.0, 1e2)
DEFAULT_GRID_POINTS = 257
GAMMA_FLAG = "reported-form rate, not certified"
BOUNDARY_FORMS = ("printed", "sqrt", "sharp")
# coarser sub-steps while ranking candidates; the winner is re-integrated
SCORE_RATE_STEP = 0.2


@dataclass(frozen=True)
class FProfile:
    """Sampled weights ``f_i(x_j)``.

    ``values`` has shape (n, N') with N' the number of grid points reached
    before blow-up (N' = N when ``blow_up`` is None).
    """

    grid: SpatialGrid
    values: np.ndarray
    blow_up: Optional[float] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionMismatch("f values must have shape (n, N)")
        if not np.all(np.isfinite(v)) or not np.all(v > 0):
            raise NonPositiveInit("stored f values must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, values, grid):
        values = np.asarray(values, dtype=float)
        return cls(grid, np.repeat(values[:, None], grid.count, axis=1))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def complete(self):
        return self.blow_up is None

    @property
    def x(self):
        return self.grid.points[: self.values.shape[1]]

    def endpoint_values(self, orientation):
        """``(f_i(l_i), f_i(L - l_i))``: outgoing and incoming end values."""
        if not self.complete:
            raise BlowUpPresent(f"f blows up at x = {self.blow_up:.6g}")
        left, right = self.values[:, 0], self.values[:, -1]
        out = np.where(orientation.s > 0, right, left)
        inc = np.where(orientation.s > 0, left, right)
        return out, inc

    def scaled(self, c):
        return FProfile(self.grid, self.values * c, self.blow_up)

    def to_dict(self):
        return {"x": self.x.tolist(), "values": self.values.tolist(), "blow_up": self.blow_up}


class Gains(NamedTuple):
    C1: float
    C2: float
    gamma: float
    C_min: float
    C_max: float
    gamma_note: str = GAMMA_FLAG


@dataclass(frozen=True)
class Certificate:
    f: FProfile
    delta: np.ndarray
    theta: float
    alpha: float
    mu: float
    ratio: float
    gains: Gains
    mode: str
    interior: ConditionReport
    boundary: ConditionReport
    boundary_form: str = "sharp"
    flags: tuple = field(default=(f"gamma: {GAMMA_FLAG}",))

    def to_dict(self, include_profile=False):
        out = {
            "status": "success",
            "mode": self.mode,
            "boundary_form": self.boundary_form,
            "delta": self.delta.tolist(),
            "theta": self.theta,
            "alpha": self.alpha,
            "mu": self.mu,
            "ratio": self.ratio,
            "gains": {"C1": self.gains.C1, "C2": self.gains.C2, "gamma": self.gains.gamma,
                      "C_min": self.gains.C_min, "C_max": self.gains.C_max},
            "interior": self.interior.to_dict(),
            "boundary": self.boundary.to_dict(),
            "f_endpoints": {"x0": self.f.values[:, 0].tolist(), "xL": self.f.values[:, -1].tolist()},
            "flags": list(self.flags),
        }
        if include_profile:
            out["f"] = self.f.to_dict()
        return out


# coefficient access at arbitrary x

def _coefficient_evaluator(sys):
    """Return ``ev(x) -> (lam (n, B), M (n, n, B))`` for an array ``x`` of shape (B,)."""
    coefs = list(sys.lam) + [c for row in sys.source_jacobian for c in row]
    if all(c.is_constant for c in coefs):
        x0 = np.zeros(1)
        lam0 = np.array([float(c(x0)[0]) for c in sys.lam])
        M0 = np.array([[float(c(x0)[0]) for c in row] for row in sys.source_jacobian])

        lam_c, M_c = lam0[:, None], M0[:, :, None]

        def ev(x):
            # broadcasts against the batch axis
            return lam_c, M_c
        ev.constant = (lam0, M0)
        return ev

    def ev(x):
        x = np.asarray(x, dtype=float)
        lam = np.stack([np.broadcast_to(c(x), x.shape) for c in sys.lam])
        M = np.stack([np.stack([np.broadcast_to(c(x), x.shape) for c in row])
                      for row in sys.source_jacobian])
        return lam, M
    ev.constant = None
    return ev


# f-system integration (batched over initial conditions)

def _rhs(y, lam, M):
    """Log-form right side ``y_i' = -(2/Lambda_i)(-M_ii + sum |M_ik| e^{(y_i - y_k)/2})``.

    Also returns the stiffness rate used for step control.
    """
    n = y.shape[0]
    absM = np.abs(M)
    diag = np.einsum("iib->ib", M)
    e = np.exp(np.minimum(0.5 * (y[:, None, :] - y[None, :, :]), 700.0))  # (n, n, B)
    off = absM * e
    idx = np.arange(n)
    off[idx, idx, :] = 0.0
    inner = -diag + off.sum(axis=1)
    dy = -2.0 / lam * inner
    rate = np.max(2.0 / np.abs(lam) * (np.abs(diag) + off.sum(axis=1)), axis=0)
    return dy, rate


def _integrate_batch(ev, y0, xs, cap=OVERFLOW_CAP, floor=POSITIVITY_FLOOR, rate_step=0.05,
                     max_substeps=1_000_000):
    """Integrate the log-form f-system for a batch of initial values.

    Parameters
    ----------
    y0 : ndarray, shape (n, B)
        ``log f(0)``, normalized so that each column's maximum is 0.
    xs : ndarray, shape (N,)
        Output grid starting at 0.

    Returns
    -------
    Y : ndarray, shape (n, B, N)
        ``log f`` at the grid points (NaN after blow-up).
    blow : ndarray, shape (B,)
        x where a component crosses the cap or floor (inf if none).
    """
    n, B = y0.shape
    N = xs.size
    Y = np.full((n, B, N), np.nan)
    Y[:, :, 0] = y0
    y = y0.copy()
    hi, lo = math.log(cap), math.log(floor)
    blow = np.full(B, np.inf)
    live = np.ones(B, dtype=bool)
    x = np.zeros(B)
    count = 0
    for j in range(1, N):
        target = xs[j]
        while True:
            todo = live & (x < target)
            if not todo.any():
                break
            count += 1
            if count > max_substeps:
                raise RuntimeError("f-system integration did not finish; reduce the stiffness")
            ii = np.flatnonzero(todo)
            yc, xc = y[:, ii], x[ii]
            lam, M = ev(xc)
            k1, rate = _rhs(yc, lam, M)
            h = np.minimum(target - xc, rate_step / np.maximum(rate, 1e-300))
            last = h >= target - xc
            lam, M = ev(xc + 0.5 * h)
            k2, _ = _rhs(yc + 0.5 * h * k1, lam, M)
            k3, _ = _rhs(yc + 0.5 * h * k2, lam, M)
            lam, M = ev(xc + h)
            k4, _ = _rhs(yc + h * k3, lam, M)
            yn = yc + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            xn = np.where(last, target, xc + h)
            bad = (np.max(yn, axis=0) > hi) | (np.min(yn, axis=0) < lo) | ~np.all(np.isfinite(yn), axis=0)
            if bad.any():
                # locate the crossing by linear interpolation within the step
                frac = np.ones(ii.size)
                with np.errstate(invalid="ignore", divide="ignore"):
                    up = (hi - yc) / (yn - yc)
                    dn = (lo - yc) / (yn - yc)
                cand = np.where(yn > hi, up, np.where(yn < lo, dn, np.inf))
                cand = np.where(np.isfinite(cand), cand, np.inf)
                frac = np.clip(np.min(cand, axis=0), 0.0, 1.0)
                frac = np.where(np.all(np.isfinite(yn), axis=0), frac, 0.0)
                bi = ii[bad]
                blow[bi] = xc[bad] + frac[bad] * h[bad]
                live[bi] = False
            ok = ~bad
            y[:, ii[ok]] = yn[:, ok]
            x[ii[ok]] = xn[ok]
        done = live & (x >= target)
        Y[:, done, j] = y[:, done]
        if not live.any():
            break
    return Y, blow


def _normalized_log(init):
    init = np.asarray(init, dtype=float)
    return np.log(init) - np.log(np.max(init, axis=0, keepdims=True))


def integrate_f_system(sys, init, grid=None, cap=OVERFLOW_CAP, floor=POSITIVITY_FLOOR,
                       rate_step=0.05):
    """Integrate the equality f-system from x = 0 with ``f(0) = init``.

    RK4 in ``log f`` with sub-steps sized so that ``h * rate <= rate_step``.
    Blow-up is declared where some ``f_i`` exceeds ``cap * max(init)`` or
    drops below ``floor * max(init)``.

    Examples
    --------
    >>> from hypiss.model import build_system
    >>> sys = build_system(L=1, lam=[1, -1], source_jacobian=[[-1, 0], [0, 1]])
    >>> f = integrate_f_system(sys, [1.0, 1.0], SpatialGrid.uniform(1, 11))
    >>> bool(abs(f.values[0, -1] - np.exp(-2)) < 1e-9)
    True
    """
    init = np.asarray(init, dtype=float)
    if init.shape != (sys.n,):
        raise DimensionMismatch(f"init must have {sys.n} entries")
    if not np.all(init > 0) or not np.all(np.isfinite(init)):
        raise NonPositiveInit("initial f values must be positive and finite")
    grid = grid or SpatialGrid.uniform(sys.L, DEFAULT_GRID_POINTS)
    scale = float(np.max(init))
    Y, blow = _integrate_batch(_coefficient_evaluator(sys), _normalized_log(init)[:, None],
                               grid.points, cap, floor, rate_step)
    return _profile_from_logs(grid, Y[:, 0, :], blow[0], scale)


def _profile_from_logs(grid, Ylog, blow, scale):
    good = np.all(np.isfinite(Ylog), axis=0)
    last = grid.count if good.all() else int(np.argmin(good))
    vals = scale * np.exp(Ylog[:, :last])
    return FProfile(grid, vals, None if not math.isfinite(blow) else float(blow))


# interior condition

def _interior_terms(sys, f):
    tab = sample_coefficients(sys, f.grid)
    F = f.values
    x = f.grid.points
    lam, M = tab.lam, tab.M
    n = f.n
    diag = np.einsum("iij->ij", M)
    sq = np.sqrt(F)
    cross = np.zeros_like(F)
    for i in range(n):
        for k in range(n):
            if k != i:
                cross[i] += np.abs(M[i, k]) * F[i] * sq[i] / sq[k]
    rhs = -2.0 * (-diag * F + cross)
    D = np.gradient(F, x, axis=1, edge_order=2)
    return lam, D, rhs


def check_interior(sys, f, abs_tol=1e-9):
    """Check the interior inequality at every grid point.

    Derivatives are centered differences (second-order one-sided at the
    ends).  A point passes when ``RHS - LHS > -tol`` where ``tol`` is
    ``abs_tol * max f`` plus a Richardson estimate of the finite-difference
    error (difference against the same stencil on the grid with spacing 2h),
    so solutions of the equality version pass.  The reported margin is
    ``min(RHS - LHS + tol)``; the untolerated minimum is in ``details``.
    """
    if not f.complete:
        raise BlowUpPresent(f"f blows up at x = {f.blow_up:.6g}")
    lam, D, rhs = _interior_terms(sys, f)
    slack = rhs - lam * D
    x = f.grid.points
    fd_err = np.zeros_like(D)
    if x.size >= 5:
        xc = x[::2]
        Dc = np.gradient(f.values[:, ::2], xc, axis=1, edge_order=2)
        err_even = np.abs(D[:, ::2] - Dc)
        fd_err[:, ::2] = err_even
        # odd points sit between two even ones
        fd_err[:, 1::2] = np.maximum(err_even[:, :-1], err_even[:, 1:])[:, : fd_err[:, 1::2].shape[1]]
        if x.size % 2 == 0:
            fd_err[:, -1] = np.maximum(fd_err[:, -1], err_even[:, -1])
    tol = abs_tol * float(np.max(f.values)) + np.abs(lam) * fd_err
    adjusted = slack + tol
    worst = np.unravel_index(np.argmin(adjusted), slack.shape)
    margin = float(adjusted[worst])
    return ConditionReport(margin > 0, margin,
                           {"component": int(worst[0]), "x": float(x[worst[1]])},
                           tolerance=float(tol[worst]),
                           details={"raw_margin": float(np.min(slack))})


# boundary condition

def _boundary_parts(f_out, f_in, J, delta, form):
    J = np.asarray(J, dtype=float)
    if form == "sharp":
        theta_rows = np.abs(J) @ (1.0 / np.sqrt(f_out)) * np.sqrt(f_in)
        return theta_rows, 1.0, 1.0
    d2 = np.asarray(delta, dtype=float) ** 2
    ratio = float(np.min(f_out / d2) / np.max(f_in / d2))
    bound = ratio if form == "printed" else math.sqrt(ratio)
    rows = np.abs(J) @ (1.0 / np.asarray(delta)) * np.asarray(delta)
    return rows, ratio, bound


def check_boundary(f, J, delta, orientation, form="printed"):
    """Boundary inequality at the ends of the weights.

    ``form`` selects the variant:

    ``"printed"``
        ``theta = ||D J D^-1||_inf < ratio`` with
        ``ratio = inf_i f_i(l_i) / delta_i^2 / sup_i f_i(L - l_i) / delta_i^2``.
    ``"sqrt"``
        ``theta < sqrt(ratio)``.
    ``"sharp"``
        ``max_i sum_j |J_ij| sqrt(f_i(L - l_i) / f_j(l_j)) < 1``; ``delta`` is
        not used and the ratio is reported as 1.

    Examples
    --------
    >>> from hypiss.model import Orientation
    >>> o = Orientation(np.array([1., -1.]), np.array([1., 0.]))
    >>> f = FProfile(SpatialGrid.uniform(1, 2), [[2., 1.], [1., 2.]])
    >>> r = check_boundary(f, [[0, .4], [.4, 0]], [1, 1], o)
    >>> round(r.margin, 12)
    0.1
    """
    if form not in BOUNDARY_FORMS:
        raise ValueError(f"form must be one of {BOUNDARY_FORMS}")
    J = np.asarray(J, dtype=float)
    delta = np.ones(J.shape[0]) if delta is None else np.asarray(delta, dtype=float)
    if form != "sharp":
        scaled_inf_norm(J, delta)  # validates delta
    f_out, f_in = f.endpoint_values(orientation)
    rows, ratio, bound = _boundary_parts(f_out, f_in, J, delta, form)
    theta = float(np.max(rows))
    margin = bound - theta
    return ConditionReport(margin > 0, float(margin), {"row": int(np.argmax(rows))},
                           details={"theta": theta, "ratio": ratio, "bound": bound, "form": form})


def search_delta(f, J, orientation, form="printed", seed=0):
    """Maximize the boundary margin over positive diagonal scalings.

    Nelder-Mead in ``log(delta)`` seeded at the ``rho_inf`` minimizer of
    ``J`` and at ``sqrt(f(l))``.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    if form == "sharp" or not J.any():
        delta = np.ones(n) if not J.any() else rho_inf(J).delta
        return delta, check_boundary(f, J, delta, orientation, form)
    f_out, f_in = f.endpoint_values(orientation)

    def neg_margin(z):
        d = np.exp(np.concatenate(([0.0], np.clip(z, -50, 50))))
        rows, _, bound = _boundary_parts(f_out, f_in, J, d, form)
        return -(bound - float(np.max(rows)))

    seeds = [np.log(rho_inf(J).delta), 0.5 * np.log(f_out), np.zeros(n)]
    best_z, best = None, np.inf
    for s in seeds:
        z0 = (s - s[0])[1:]
        if n == 1:
            val = neg_margin(z0)
            res_x, res_f = z0, val
        else:
            res = minimize(neg_margin, z0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13, "maxfev": 4000})
            res_x, res_f = res.x, res.fun
        if res_f < best:
            best, best_z = res_f, res_x
    delta = np.exp(np.concatenate(([0.0], np.clip(best_z, -50, 50))))
    delta /= delta.min()
    return delta, check_boundary(f, J, delta, orientation, form)


# gains

def compute_gains(sys, f, alpha, mu, alpha0=1.0):
    """Constants of the fading-memory ISS estimate.

    Weights ``w_i(x) = sqrt(f_i(x)) exp(-mu s_i x)``;
    ``C_min = min w * min(1, min |Lambda|)``,
    ``C_max = max w * max(1, max |Lambda|)``, ``C1 = C_max / C_min`` and
    ``C2 = (1 + 1/alpha) max_i sqrt(f_i(L - l_i)) exp(mu (L - l_i)) / C_min``.
    ``gamma = mu * alpha0 / 4`` is the rate in the reported form of the
    estimate; it is not certified because ``alpha0`` is not available.
    """
    if not mu > 0:
        raise NonPositiveMu("mu must be positive")
    if not f.complete:
        raise BlowUpPresent(f"f blows up at x = {f.blow_up:.6g}")
    o = sys.orientation
    x = f.grid.points
    w = np.sqrt(f.values) * np.exp(-mu * o.s[:, None] * x[None, :])
    lam = np.abs(sample_coefficients(sys, f.grid).lam)
    C_min = float(np.min(w) * min(1.0, np.min(lam)))
    C_max = float(np.max(w) * max(1.0, np.max(lam)))
    _, f_in = f.endpoint_values(o)
    gain_factor = 1.0 if math.isinf(alpha) else 1.0 + 1.0 / alpha
    C2 = gain_factor * float(np.max(np.sqrt(f_in) * np.exp(mu * (sys.L - o.l)))) / C_min
    return Gains(C_max / C_min, C2, mu * alpha0 / 4.0, C_min, C_max)


def _alpha(theta, ratio):
    return math.inf if theta == 0 else 0.5 * (ratio / theta - 1.0)


# certification

def certify(sys, mu=None, grid=None, init_sweep=INIT_SWEEP, boundary_form="sharp",
            alpha0=1.0, refine=True, force_inhomogeneous=False):
    """Search for weights satisfying both conditions and return a Certificate.

    With ``M = 0`` (and ``force_inhomogeneous`` off) the weights are
    ``f = delta^2`` with ``delta`` the ``rho_inf`` minimizer of ``J``.
    Otherwise initial values ``f(0)`` are swept over ``init_sweep`` per
    component (the first component fixed to 1, by scale invariance), plus
    the homogeneous seed, and the best candidate is refined by a batched
    pattern search in ``log f(0)``.

    Raises
    ------
    CertificationFailure
        Carrying the best interior and boundary margins found.
    """
    if boundary_form not in BOUNDARY_FORMS:
        raise ValueError(f"boundary_form must be one of {BOUNDARY_FORMS}")
    mu = 0.05 / sys.L if mu is None else float(mu)
    if not mu > 0:
        raise NonPositiveMu("mu must be positive")
    grid = grid or SpatialGrid.uniform(sys.L, DEFAULT_GRID_POINTS)
    J = sys.boundary_jacobian
    o = sys.orientation
    if not force_inhomogeneous and sys.source_is_zero(grid):
        r = rho_inf(J)
        f = FProfile.constant(r.delta ** 2, grid)
        interior = ConditionReport(True, 0.0, None, 0.0, note="M = 0: constant weights")
        boundary = ConditionReport(r.value < 1, 1.0 - r.value, None,
                                   details={"theta": r.value, "ratio": 1.0, "bound": 1.0,
                                            "form": "homogeneous"})
        if not boundary.holds:
            raise CertificationFailure(f"rho_inf(J) = {r.value:.6g} >= 1", interior_margin=0.0,
                                       boundary_margin=boundary.margin, mode="homogeneous")
        alpha = _alpha(r.value, 1.0)
        gains = compute_gains(sys, f, alpha, mu, alpha0)
        return Certificate(f, r.delta, r.value, alpha, mu, 1.0, gains, "homogeneous",
                           interior, boundary, "homogeneous")

    ev = _coefficient_evaluator(sys)
    z_best, _ = _sweep(ev, J, o, grid, init_sweep, boundary_form, refine)
    init = np.exp(np.concatenate(([0.0], z_best)))
    f = integrate_f_system(sys, init, grid)
    if not f.complete:
        raise CertificationFailure(
            f"every candidate f blows up before x = L (best reached x = {f.blow_up:.6g})",
            interior_margin=-math.inf, boundary_margin=-math.inf, mode="inhomogeneous")
    interior = check_interior(sys, f)
    if boundary_form == "sharp":
        f_out, _ = f.endpoint_values(o)
        delta = np.sqrt(f_out)
        boundary = check_boundary(f, J, delta, o, "sharp")
    else:
        delta, boundary = search_delta(f, J, o, boundary_form)
    if not (interior.holds and boundary.holds):
        raise CertificationFailure("no swept f satisfies both conditions",
                                   interior_margin=interior.margin,
                                   boundary_margin=boundary.margin, mode="inhomogeneous")
    theta = boundary.details["theta"]
    ratio = boundary.details["bound"]
    alpha = _alpha(theta, ratio)
    gains = compute_gains(sys, f, alpha, mu, alpha0)
    return Certificate(f, delta, theta, alpha, mu, ratio, gains, "inhomogeneous",
                       interior, boundary, boundary_form)


def _score_batch(ev, J, o, grid, Z, form):
    """Boundary margin of each candidate ``log f(0) = [0, z]`` (blow-up penalized)."""
    logs = np.vstack([np.zeros((1, Z.shape[0])), Z.T])
    y0 = logs - logs.max(axis=0, keepdims=True)
    # only the end values matter here; sub-steps are sized by the stiffness rate
    L = grid.L
    Y, blow = _integrate_batch(ev, y0, np.array([0.0, L]), rate_step=SCORE_RATE_STEP)
    scores = np.empty(Z.shape[0])
    for b in range(Z.shape[0]):
        if math.isfinite(blow[b]):
            scores[b] = -1.0 - (L - blow[b]) / L
            continue
        F0, FL = np.exp(Y[:, b, 0]), np.exp(Y[:, b, -1])
        f_out = np.where(o.s > 0, FL, F0)
        f_in = np.where(o.s > 0, F0, FL)
        if form == "sharp":
            rows, _, bound = _boundary_parts(f_out, f_in, J, None, "sharp")
            scores[b] = bound - float(np.max(rows))
        else:
            fp = FProfile(SpatialGrid.uniform(L, 2), np.column_stack([F0, FL]))
            scores[b] = search_delta(fp, J, o, form)[1].margin
    return scores


def _sweep(ev, J, o, grid, init_sweep, form, refine, bound=24.0, rounds=12):
    n = o.s.size
    if n == 1:
        return np.zeros(0), float(_score_batch(ev, J, o, grid, np.zeros((1, 0)), form)[0])
    logs = np.log(np.asarray(init_sweep, dtype=float))
    mesh = np.stack(np.meshgrid(*([logs] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    cands = [mesh]
    if np.any(J):
        d = np.log(rho_inf(J).delta ** 2)
        cands.append((d[1:] - d[0])[None, :])
    Z = np.vstack(cands)
    scores = _score_batch(ev, J, o, grid, Z, form)
    # lexicographic tie-break keeps the merge deterministic
    order = np.lexsort((*Z.T[::-1], -scores))
    z_best, s_best = Z[order[0]].copy(), float(scores[order[0]])
    if not refine:
        return z_best, s_best
    step = float(np.log(10.0))
    rng = np.random.default_rng(0)
    ts = np.array([-1.0, -0.5, -0.25, 0.25, 0.5, 1.0])
    for _ in range(rounds):
        dirs = [t * e for e in np.eye(n - 1) for t in ts]
        if n > 2:
            dirs += list(rng.normal(size=(4 * (n - 1), n - 1)))
        Zr = np.clip(z_best[None, :] + step * np.array(dirs), -bound, bound)
        sr = _score_batch(ev, J, o, grid, Zr, form)
        k = int(np.argmax(sr))
        if sr[k] > s_best:
            z_best, s_best = Zr[k].copy(), float(sr[k])
            if abs(ts[k % ts.size]) < 1.0 or n > 2:
                step *= 0.5
        else:
            step *= 0.25
        if step < 1e-5:
            break
    return z_best, s_best


# maximal ISS length

def max_iss_length(sys, C, step=1e-3, L_cap=10.0, eps0_factor=1e-8, rate_step=0.05):
    """Blow-up length of the f-system with ``f_i(0) = C`` (i <= m), ``eps0`` otherwise.

    ``eps0 = eps0_factor * C`` replaces the singular zero initial value.  The
    coefficients are evaluated at absolute x on ``[0, L_cap]``, so ``sys.L``
    is ignored.  Returns ``L_cap`` when nothing blows up.
    """
    if not C > 0:
        raise NonPositiveInit("C must be positive")
    ev = _coefficient_evaluator(sys)
    n, m = sys.n, sys.m
    rel = np.where(np.arange(n) < m, 1.0, eps0_factor)
    if m == 0:
        rel = np.ones(n)
    # the system is 1-homogeneous in f, so integrate relative to C
    y0 = _normalized_log(rel)[:, None]
    count = int(math.ceil(L_cap / step)) + 1
    xs = np.linspace(0.0, L_cap, count)
    _, blow = _integrate_batch(ev, y0, xs, rate_step=rate_step)
    return float(min(blow[0], L_cap))
