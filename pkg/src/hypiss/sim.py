"""Direct simulation and ISS envelope checks.

Solves

    u_t + A(u, x) u_x + B(u, x) = d2(t, x),
    (u_+(t, 0), u_-(t, L)) = G(u_+(t, L), u_-(t, 0)) + d(t),

with a first-order upwind scheme on a uniform grid.  ``A`` is diagonal
(the speeds), ``B`` is ``M(x) u`` in linear mode and the nonlinear closure
otherwise.  Along the way it tracks C0 and C1 norms, the disturbance history
needed for fading-memory sups, and optionally the Lyapunov functionals.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .errors import (CFLViolation, CompatibilityViolation, DimensionMismatch,
                     HorizonMismatch, NonDiagonalQuasilinear, OverflowUnavoidable)
from .expr import Expr, as_coefficient
from .model import SpatialGrid, sample_coefficients

MODES = ("linear", "semilinear", "quasilinear-diagonal")
MAX_CFL = 0.9
COMPAT_TOL = 1e-6


# disturbances

@dataclass(frozen=True)
class DisturbanceSpec:
    """Boundary disturbance ``d(t)`` and optional internal ``d2(t, x)``.

    Entries may be numbers, expression strings (in ``t``, and ``x`` for the
    internal part), JSON descriptors or callables.
    """

    boundary: tuple
    internal: Optional[tuple] = None
    bound: Optional[float] = None
    horizon: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "boundary",
                           tuple(as_coefficient(c, ("t",)) for c in self.boundary))
        if self.internal is not None:
            object.__setattr__(self, "internal",
                               tuple(as_coefficient(c, ("t", "x")) for c in self.internal))
            if len(self.internal) != len(self.boundary):
                raise DimensionMismatch("internal and boundary disturbances need the same size")
        derivs = []
        for c in self.boundary:
            derivs.append(c.derivative("t") if isinstance(c, Expr) else c.derivative())
        object.__setattr__(self, "_dboundary", tuple(derivs))
        if self.internal is not None:
            object.__setattr__(self, "_dinternal", tuple(
                c.derivative("t") if isinstance(c, Expr) else _time_fd(c) for c in self.internal))

    @classmethod
    def zero(cls, n):
        return cls(tuple(0.0 for _ in range(n)))

    @property
    def n(self):
        return len(self.boundary)

    def d(self, t):
        return np.array([float(c(t)) for c in self.boundary])

    def d_prime(self, t):
        return np.array([float(c(t)) for c in self._dboundary])

    def d2(self, t, x):
        if self.internal is None:
            return None
        return np.stack([np.broadcast_to(c(t, x), np.shape(x)) for c in self.internal])

    def d2_prime(self, t, x):
        if self.internal is None:
            return None
        return np.stack([np.broadcast_to(c(t, x), np.shape(x)) for c in self._dinternal])

    def check_bound(self, T, samples=2001):
        """True when ``|d_i(t)| <= bound`` on a uniform sample of ``[0, T]``."""
        if self.bound is None:
            return True
        ts = np.linspace(0.0, T, samples)
        return bool(all(np.max(np.abs(c(ts))) <= self.bound for c in self.boundary))

    def to_dict(self):
        out = {"boundary": [c.to_json() for c in self.boundary]}
        if self.internal is not None:
            out["internal"] = [c.to_json() for c in self.internal]
        if self.bound is not None:
            out["bound"] = self.bound
        if self.horizon is not None:
            out["horizon"] = self.horizon
        return out

    @classmethod
    def from_dict(cls, obj):
        return cls(tuple(obj["boundary"]), tuple(obj["internal"]) if obj.get("internal") else None,
                   obj.get("bound"), obj.get("horizon"))


def _time_fd(c, eps=1e-6):
    class _D:
        def __call__(self, t, x):
            return (np.asarray(c(t + eps, x)) - np.asarray(c(t - eps, x))) / (2 * eps)
    return _D()


# trajectories

@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: np.ndarray  # (K, n, N)
    c0_norms: np.ndarray
    c1_norms: np.ndarray
    grid: SpatialGrid
    history: dict = field(default_factory=dict)
    lyapunov: Optional[dict] = None
    diverged: bool = False

    def __post_init__(self):
        if len(self.times) != len(self.snapshots):
            raise DimensionMismatch("one snapshot per recorded time")


def c_norms(snapshot, grid):
    """``(c0, c1)``: sup norm and sup norm plus sup of the derivative.

    Derivatives are centered in the interior and second-order one-sided at
    the ends.

    Examples
    --------
    >>> g = SpatialGrid.uniform(1, 5)
    >>> c_norms(np.array([[0.5] * 5, [-0.25] * 5]), g)
    (0.5, 0.5)
    """
    u = np.atleast_2d(np.asarray(snapshot, dtype=float))
    c0 = float(np.max(np.abs(u)))
    du = _dx(u, grid)
    return c0, c0 + float(np.max(np.abs(du)))


def _dx(u, grid):
    return np.gradient(u, grid.h, axis=-1, edge_order=2 if grid.count >= 3 else 1)


def _end_derivative(u, h, left):
    """Second-order one-sided derivative at an end (falls back to first order)."""
    if u.shape[-1] >= 3:
        if left:
            return (-3 * u[..., 0] + 4 * u[..., 1] - u[..., 2]) / (2 * h)
        return (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * h)
    return (u[..., 1] - u[..., 0]) / h


# model pieces used by the stepper

class _Dynamics:
    def __init__(self, sys, grid, mode):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.sys, self.grid, self.mode = sys, grid, mode
        tab = sample_coefficients(sys, grid)
        self.lam0, self.M = tab.lam, tab.M
        self.x = grid.points
        nl = sys.nonlinear
        self.nl = nl
        self.pos = sys.orientation.s > 0
        if mode == "quasilinear-diagonal" and nl is not None and nl.speed is not None:
            test = np.asarray(nl.speed(np.zeros((sys.n, self.x.size)), self.x))
            if test.ndim == 3:
                off = test - np.einsum("iij->ij", test)[:, None, :] * np.eye(sys.n)[:, :, None]
                if np.max(np.abs(off)) > 0:
                    raise NonDiagonalQuasilinear("A(u, x) must be diagonal")
                self._speed = lambda u: np.einsum("iij->ij", np.asarray(nl.speed(u, self.x)))
            else:
                self._speed = lambda u: np.asarray(nl.speed(u, self.x), dtype=float)
        else:
            self._speed = None

    def speeds(self, u):
        return self.lam0 if self._speed is None else self._speed(u)

    def source(self, u):
        if self.mode != "linear" and self.nl is not None and self.nl.source is not None:
            return np.asarray(self.nl.source(u, self.x), dtype=float)
        return np.einsum("ijk,jk->ik", self.M, u)

    def outgoing(self, u):
        """``(u_+(L), u_-(0))`` as an n-vector."""
        return np.where(self.pos, u[:, -1], u[:, 0])

    def boundary_map(self, out):
        if self.mode != "linear" and self.nl is not None and self.nl.boundary is not None:
            return np.asarray(self.nl.boundary(out), dtype=float)
        return self.sys.boundary_jacobian @ out

    def boundary_jacobian_at(self, out, eps=1e-7):
        if self.mode == "linear" or self.nl is None or self.nl.boundary is None:
            return np.asarray(self.sys.boundary_jacobian)
        n = out.size
        Jn = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = eps
            Jn[:, k] = (self.boundary_map(out + e) - self.boundary_map(out - e)) / (2 * eps)
        return Jn

    def set_incoming(self, u, values):
        u[self.pos, 0] = values[self.pos]
        u[~self.pos, -1] = values[~self.pos]

    def incoming(self, u):
        return np.where(self.pos, u[:, 0], u[:, -1])

    def time_derivative_at_ends(self, u, dist, t):
        """``u_t = -A u_x - B + d2`` at both ends, using one-sided differences."""
        h = self.grid.h
        lam = self.speeds(u)
        S = self.source(u)
        d2 = dist.d2(t, self.x) if dist.internal is not None else np.zeros_like(u)
        left = -lam[:, 0] * _end_derivative(u, h, True) - S[:, 0] + d2[:, 0]
        right = -lam[:, -1] * _end_derivative(u, h, False) - S[:, -1] + d2[:, -1]
        return left, right


def _as_initial(u0, sys, grid):
    if callable(u0) and not isinstance(u0, np.ndarray):
        arr = np.asarray(u0(grid.points), dtype=float)
    elif isinstance(u0, (list, tuple)) and u0 and all(isinstance(c, (str, dict)) for c in u0):
        arr = np.stack([as_coefficient(c)(grid.points) for c in u0])
    else:
        arr = np.array(u0, dtype=float)
        if arr.ndim == 0:
            arr = np.full((sys.n, grid.count), float(arr))
    if arr.shape != (sys.n, grid.count):
        raise DimensionMismatch(f"u0 must have shape ({sys.n}, {grid.count}), got {arr.shape}")
    return arr.copy()


def compatibility_residuals(sys, u0, dist, grid, mode="linear"):
    """Zeroth- and first-order compatibility residuals of ``u0`` at t = 0."""
    dyn = _Dynamics(sys, grid, mode)
    u = _as_initial(u0, sys, grid)
    out = dyn.outgoing(u)
    r0 = dyn.incoming(u) - (dyn.boundary_map(out) + dist.d(0.0))
    left, right = dyn.time_derivative_at_ends(u, dist, 0.0)
    ut_out = np.where(dyn.pos, right, left)
    ut_in = np.where(dyn.pos, left, right)
    r1 = ut_in - (dyn.boundary_jacobian_at(out) @ ut_out + dist.d_prime(0.0))
    return r0, r1


def project_compatible(sys, u0, dist, grid, mode="linear", support=0.25):
    """Modify ``u0`` near the incoming ends so both compatibility conditions hold.

    Adds ``c0 phi0 + c1 phi1`` with Hermite bumps supported on a fraction
    ``support`` of the domain at each incoming end.  The derivative condition
    is enforced for the same one-sided difference the checker uses, so the
    residuals vanish to rounding.
    """
    dyn = _Dynamics(sys, grid, mode)
    u = _as_initial(u0, sys, grid)
    x, L, h = grid.points, grid.L, grid.h
    ell = support * L
    xi_l = np.clip(x / ell, 0.0, 1.0)
    xi_r = np.clip((L - x) / ell, 0.0, 1.0)
    phi0_l = (1 - xi_l) ** 2 * (1 + 2 * xi_l)
    phi1_l = x * (1 - xi_l) ** 2
    phi0_r = (1 - xi_r) ** 2 * (1 + 2 * xi_r)
    phi1_r = -(L - x) * (1 - xi_r) ** 2
    # zeroth order
    out = dyn.outgoing(u)
    target = dyn.boundary_map(out) + dist.d(0.0)
    for i in range(sys.n):
        if dyn.pos[i]:
            u[i] += (target[i] - u[i, 0]) * phi0_l
        else:
            u[i] += (target[i] - u[i, -1]) * phi0_r
    # first order: u_t at the incoming end depends linearly on the slope there
    left, right = dyn.time_derivative_at_ends(u, dist, 0.0)
    ut_out = np.where(dyn.pos, right, left)
    want = dyn.boundary_jacobian_at(dyn.outgoing(u)) @ ut_out + dist.d_prime(0.0)
    lam = dyn.speeds(u)
    for i in range(sys.n):
        if dyn.pos[i]:
            have = left[i]
            dphi = _end_derivative(phi1_l, h, True)
            u[i] += (have - want[i]) / (lam[i, 0] * dphi) * phi1_l
        else:
            have = right[i]
            dphi = _end_derivative(phi1_r, h, False)
            u[i] += (have - want[i]) / (lam[i, -1] * dphi) * phi1_r
    return u


# simulation

def simulate(sys, u0, dist, grid, T, mode="linear", cfl=MAX_CFL, record_every=None,
             strict=False, lyapunov=None, max_steps=10_000_000):
    """Upwind simulation up to time ``T``.

    Parameters
    ----------
    record_every : float, optional
        Snapshot cadence in time units (default ``T / 200``).  The disturbance
        history is recorded at every step regardless.
    strict : bool
        Raise :class:`CompatibilityViolation` instead of warning.
    lyapunov : dict, optional
        ``{"f": FProfile, "mu": float, "p": [p1, ...]}``; adds ``W1``/``W2``
        per p and ``V`` per snapshot.

    Examples
    --------
    >>> from hypiss.model import build_system
    >>> sys = build_system(L=1, lam=[1, -1])
    >>> g = SpatialGrid.uniform(1, 33)
    >>> tr = simulate(sys, np.zeros((2, 33)), DisturbanceSpec.zero(2), g, 0.5)
    >>> float(tr.c1_norms.max())
    0.0
    """
    if not 0 < cfl <= MAX_CFL:
        raise CFLViolation(f"CFL number {cfl} outside (0, {MAX_CFL}]")
    if dist.n != sys.n:
        raise DimensionMismatch("disturbance size does not match the system")
    if dist.horizon is not None and T > dist.horizon:
        raise HorizonMismatch(f"T = {T} exceeds the disturbance horizon {dist.horizon}")
    dyn = _Dynamics(sys, grid, mode)
    u = _as_initial(u0, sys, grid)
    r0, r1 = compatibility_residuals(sys, u, dist, grid, mode)
    bad = max(float(np.max(np.abs(r0))), float(np.max(np.abs(r1))))
    if bad > COMPAT_TOL:
        msg = f"u0 violates the compatibility conditions (residual {bad:.3g})"
        if strict:
            raise CompatibilityViolation(msg)
        warnings.warn(msg, stacklevel=2)
    h = grid.h
    x = grid.points
    record_every = T / 200 if record_every is None else float(record_every)
    t = 0.0
    times, snaps = [0.0], [u.copy()]
    hist_t, hist_d, hist_dp = [0.0], [dist.d(0.0)], [dist.d_prime(0.0)]
    has_int = dist.internal is not None
    hist_i0, hist_i1 = [], []
    if has_int:
        hist_i0.append(float(np.max(np.abs(dist.d2(0.0, x)))))
        hist_i1.append(float(np.max(np.abs(dist.d2_prime(0.0, x)))))
    next_rec = record_every
    diverged = False
    steps = 0
    while t < T - 1e-14 * max(1.0, T):
        lam = dyn.speeds(u)
        vmax = float(np.max(np.abs(lam)))
        dt = min(cfl * h / vmax, T - t)
        nu = dt / h
        S = dyn.source(u)
        new = u - dt * S
        if has_int:
            new += dt * dist.d2(t, x)
        back = np.zeros_like(u)
        back[:, 1:] = u[:, 1:] - u[:, :-1]
        fwd = np.zeros_like(u)
        fwd[:, :-1] = u[:, 1:] - u[:, :-1]
        new -= nu * np.where(lam > 0, lam * back, lam * fwd)
        t = t + dt if T - t > dt else T
        dyn.set_incoming(new, dyn.boundary_map(dyn.outgoing(new)) + dist.d(t))
        u = new
        steps += 1
        hist_t.append(t)
        hist_d.append(dist.d(t))
        hist_dp.append(dist.d_prime(t))
        if has_int:
            hist_i0.append(float(np.max(np.abs(dist.d2(t, x)))))
            hist_i1.append(float(np.max(np.abs(dist.d2_prime(t, x)))))
        if not np.all(np.isfinite(u)):
            diverged = True
            break
        if t >= next_rec - 1e-12 or t >= T:
            times.append(t)
            snaps.append(u.copy())
            while next_rec <= t + 1e-12:
                next_rec += record_every
        if steps > max_steps:
            raise RuntimeError("step limit reached")
    if times[-1] != t and not diverged:
        times.append(t)
        snaps.append(u.copy())
    snaps = np.array(snaps)
    norms = np.array([c_norms(s, grid) for s in snaps])
    history = {"t": np.array(hist_t), "d": np.array(hist_d), "d_prime": np.array(hist_dp)}
    if has_int:
        history["d2"] = np.array(hist_i0)
        history["d2_prime"] = np.array(hist_i1)
    traj = Trajectory(np.array(times), snaps, norms[:, 0], norms[:, 1], grid, history,
                      diverged=diverged)
    if lyapunov is not None:
        traj.lyapunov = lyapunov_series(traj, sys, lyapunov["f"], lyapunov["mu"],
                                        lyapunov.get("p", ()), mode=mode)
    return traj


# Lyapunov functionals

def _speeds_for(sys_or_lam, snapshot, grid):
    if isinstance(sys_or_lam, np.ndarray):
        return sys_or_lam
    return sample_coefficients(sys_or_lam, grid).lam


def _weights_log(f, mu, orientation, grid):
    x = grid.points
    return 0.5 * np.log(f.values) - mu * orientation.s[:, None] * x[None, :]


def lyapunov_w(snapshot, f, mu, p, orientation, speeds):
    """``(W_{1,p}, W_{2,p})`` by composite trapezoid quadrature in log-sum-exp form.

    ``W_{1,p} = (int sum_i f_i^p e^{-2 p mu s_i x} u_i^{2p} dx)^{1/(2p)}``;
    ``W_{2,p}`` is the same with ``u`` replaced by ``-Lambda u_x``.

    Parameters
    ----------
    speeds : SystemSpec or ndarray
        The system (speeds sampled on ``f.grid``) or an (n, N) speed table.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    grid = f.grid
    u = np.atleast_2d(np.asarray(snapshot, dtype=float))
    lam = _speeds_for(speeds, u, grid)
    logw = _weights_log(f, mu, orientation, grid)
    q = np.full(grid.count, grid.h)
    q[0] = q[-1] = 0.5 * grid.h
    logq = np.log(q)[None, :]

    def one(v):
        a = np.abs(v)
        if not np.any(a):
            return 0.0
        with np.errstate(divide="ignore"):
            terms = 2 * p * (logw + np.log(a)) + logq
        total = logsumexp(terms)
        out = total / (2 * p)
        if not math.isfinite(out) or out > 709:
            raise OverflowUnavoidable("W_p is not representable")
        return float(np.exp(out))

    return one(u), one(-lam * _dx(u, grid))


def lyapunov_v(snapshot, f, mu, orientation, speeds):
    """Weighted sup ``max sqrt(f) e^{-mu s x} |u| + max sqrt(f) e^{-mu s x} |Lambda u_x|``.

    Examples
    --------
    >>> from hypiss.certifier import FProfile
    >>> from hypiss.model import Orientation
    >>> g = SpatialGrid.uniform(1, 11)
    >>> o = Orientation(np.array([1., -1.]), np.array([1., 0.]))
    >>> u = np.vstack([np.full(11, 0.3), np.zeros(11)])
    >>> round(lyapunov_v(u, FProfile.constant([1, 1], g), 0.1, o, np.array([[1.] * 11, [-1.] * 11])), 12)
    0.3
    """
    grid = f.grid
    u = np.atleast_2d(np.asarray(snapshot, dtype=float))
    lam = _speeds_for(speeds, u, grid)
    w = np.exp(_weights_log(f, mu, orientation, grid))
    return float(np.max(w * np.abs(u)) + np.max(w * np.abs(lam * _dx(u, grid))))


def lyapunov_series(traj, sys, f, mu, ps=(), mode="linear"):
    """V and W_p along a trajectory (speeds frozen at the snapshot in quasilinear mode)."""
    o = sys.orientation
    dyn = _Dynamics(sys, traj.grid, mode)
    out = {"V": [], "W": {int(p): [] for p in ps}}
    for s in traj.snapshots:
        lam = dyn.speeds(s)
        out["V"].append(lyapunov_v(s, f, mu, o, lam))
        for p in ps:
            out["W"][int(p)].append(lyapunov_w(s, f, mu, p, o, lam))
    out["V"] = np.array(out["V"])
    out["W"] = {p: np.array(v) for p, v in out["W"].items()}
    return out


# envelopes

@dataclass(frozen=True)
class EnvelopeReport:
    holds: bool
    worst_time: float
    worst_ratio: float
    fitted: Optional[tuple] = None
    vacuous_times: int = 0
    note: Optional[str] = None

    def to_dict(self):
        out = {"holds": self.holds, "worst_time": self.worst_time, "worst_ratio": self.worst_ratio,
               "vacuous_times": self.vacuous_times}
        if self.fitted is not None:
            out["fitted"] = {"C1": self.fitted[0], "C2": self.fitted[1], "gamma": self.fitted[2]}
        if self.note:
            out["note"] = self.note
        return out


def _fading_sup(t, values, gamma, at):
    """``sup_{tau <= s} e^{-gamma (s - tau)} values(tau)`` at each ``s`` in ``at``.

    ``values`` is sampled at the (increasing) history times ``t``; the sup
    is exact over those samples.
    """
    S = np.empty_like(values)
    S[0] = values[0]
    decay = np.exp(-gamma * np.diff(t))
    for k in range(1, t.size):
        S[k] = max(S[k - 1] * decay[k - 1], values[k])
    idx = np.searchsorted(t, at, side="right") - 1
    return S[np.clip(idx, 0, t.size - 1)]


def _history(traj, dist):
    hist = traj.history
    if hist and "t" in hist:
        if hist["t"][-1] < traj.times[-1] - 1e-12:
            raise HorizonMismatch("disturbance history ends before the trajectory")
        return hist
    if dist is None:
        raise HorizonMismatch("no disturbance history recorded and no disturbance given")
    if dist.horizon is not None and traj.times[-1] > dist.horizon + 1e-12:
        raise HorizonMismatch("trajectory extends past the disturbance horizon")
    t = np.asarray(traj.times, dtype=float)
    out = {"t": t, "d": np.array([dist.d(s) for s in t]),
           "d_prime": np.array([dist.d_prime(s) for s in t])}
    if dist.internal is not None:
        x = traj.grid.points
        out["d2"] = np.array([np.max(np.abs(dist.d2(s, x))) for s in t])
        out["d2_prime"] = np.array([np.max(np.abs(dist.d2_prime(s, x))) for s in t])
    return out


def _envelope_terms(traj, dist, gamma, q):
    """``(lhs, a, b)`` with the estimate reading ``lhs <= C1 a + C2 b``."""
    if q not in (0, 1):
        raise ValueError("q must be 0 or 1")
    hist = _history(traj, dist)
    if dist is not None and dist.horizon is not None and traj.times[-1] > dist.horizon + 1e-12:
        raise HorizonMismatch("trajectory extends past the disturbance horizon")
    t = np.asarray(traj.times)
    lhs = traj.c1_norms if q == 1 else traj.c0_norms
    a = np.exp(-gamma * t) * lhs[0]
    ht = hist["t"]
    b = _fading_sup(ht, np.max(np.abs(hist["d"]), axis=1), gamma, t)
    if q == 1:
        b = b + _fading_sup(ht, np.max(np.abs(hist["d_prime"]), axis=1), gamma, t)
    if "d2" in hist:
        b = b + _fading_sup(ht, hist["d2"], gamma, t)
        if q == 1:
            b = b + _fading_sup(ht, hist["d2_prime"], gamma, t)
    return np.asarray(lhs, dtype=float), a, b


def envelope_check(traj, dist, gains=None, q=1, gamma_grid=None):
    """Compare a trajectory with the fading-memory ISS estimate.

    With ``gains = (C1, C2, gamma)`` the estimate is evaluated as given.
    With ``gains=None`` the gains are fitted to this trajectory first (see
    :func:`fit_envelope`) and reported in ``fitted``.
    """
    fitted = None
    if gains is None:
        fitted = fit_envelope([traj], [dist], q=q, gamma_grid=gamma_grid)
        gains = fitted
    C1, C2, gamma = (float(g) for g in gains)
    lhs, a, b = _envelope_terms(traj, dist, gamma, q)
    rhs = C1 * a + C2 * b
    t = np.asarray(traj.times)
    pos = rhs > 0
    vac = int(np.sum(~pos & (lhs > 0)))
    note = "vacuous window" if vac else None
    if not pos.any():
        return EnvelopeReport(True, float("nan"), 0.0, fitted, vac, note)
    ratio = np.where(pos, lhs / np.where(pos, rhs, 1.0), -np.inf)
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    return EnvelopeReport(worst <= 1.0, float(t[k]), worst, fitted, vac, note)


def fit_envelope(trajs, dists, q=1, gamma_grid=None, inflate=1e-9):
    """Fit ``(C1, C2, gamma)`` so that the estimate holds on every trajectory.

    For each ``gamma`` on a grid a linear program finds the ``C1, C2 >= 0``
    with no violations and the least total relative slack; the ``gamma``
    with the least slack wins.  Times with both terms zero are skipped
    (vacuous).  ``C1`` and ``C2`` are inflated by ``inflate`` (relative) to
    absorb LP rounding.
    """
    if gamma_grid is None:
        gamma_grid = np.geomspace(1e-3, 10.0, 41)
    best = None
    for gamma in gamma_grid:
        rows_a, rows_b, rows_l = [], [], []
        for tr, d in zip(trajs, dists):
            lhs, a, b = _envelope_terms(tr, d, gamma, q)
            keep = (a > 0) | (b > 0)
            rows_a.append(a[keep])
            rows_b.append(b[keep])
            rows_l.append(lhs[keep])
        a, b, lhs = (np.concatenate(r) for r in (rows_a, rows_b, rows_l))
        if a.size == 0:
            continue
        scale = np.maximum(lhs, 1e-300)
        if np.any(lhs > 0):
            scale = np.maximum(lhs, 1e-12 * lhs.max())
        # minimize sum (C1 a + C2 b - lhs) / scale  s.t.  C1 a + C2 b >= lhs
        c = np.array([np.sum(a / scale), np.sum(b / scale)])
        A_ub = -np.column_stack([a, b])
        res = linprog(c, A_ub=A_ub, b_ub=-lhs, bounds=[(0, None), (0, None)], method="highs")
        if not res.success:
            continue
        slack = float(res.fun - np.sum(lhs / scale)) / lhs.size
        if best is None or slack < best[0]:
            best = (slack, res.x[0], res.x[1], float(gamma))
    if best is None:
        raise ValueError("no gamma on the grid admits a fit")
    _, C1, C2, gamma = best
    return (float(C1) * (1 + inflate), float(C2) * (1 + inflate), gamma)


def fit_decay(times, values, C_max=1.1, gamma_hi=100.0, iters=60):
    """Largest rate ``gamma`` with ``V(t) <= C V(s) e^{-gamma (t - s)}`` for all s < t.

    ``C`` is the smallest constant valid at that rate and never exceeds
    ``C_max``.  Returns ``(C, gamma)``; gamma may be 0 or negative when the
    values do not decay.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    t, v = t[keep], v[keep]
    if t.size < 2:
        return 1.0, 0.0
    logv = np.log(v)

    def C_of(g):
        # max over s < t of log V(t) + g (t - s) - log V(s)
        run = -np.inf
        worst = -np.inf
        for k in range(t.size):
            if k:
                worst = max(worst, logv[k] + g * t[k] + run)
            run = max(run, -logv[k] - g * t[k])
        return math.exp(worst)

    lo, hi = -gamma_hi, gamma_hi
    if C_of(lo) > C_max:
        return C_of(lo), lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if C_of(mid) <= C_max:
            lo = mid
        else:
            hi = mid
    return C_of(lo), lo
