"""Explicit conditions for 2x2 linear systems on [0, 1].

The system is

    u1_t + Lambda1 u1_x + a(x) u2 = 0,   u1(t, 0) = k1 u2(t, 0) + d1(t),
    u2_t + Lambda2 u2_x + b(x) u1 = 0,   u2(t, 1) = k2 u1(t, 1) + d2(t),

with Lambda1 > 0 > Lambda2.  Our sufficient condition reduces to the Riccati
equation ``eta' = c1(x) + c2(x) eta**2``, ``eta(0) = |k1|`` with
``c1 = |a| / Lambda1`` and ``c2 = |b| / |Lambda2|``: the system is certified
when eta exists on [0, 1] and ``eta(1) |k2| < 1``.  The small-gain
alternative ("KK" below) is checked over a grid of its tuning parameter K.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BeyondBlowUp, NonPositiveK, NoWitnessFound
from .expr import Constant, as_coefficient
from .report import ConditionReport

ETA_CAP = 1e12
KK_GRID = np.geomspace(1e-3, 1e2, 64)
KK_POINTS = 256
BOUNDARY_NOTE = "boundary of condition"


@dataclass(frozen=True)
class PlanarParams:
    a: object
    b: object
    Lambda1: float
    Lambda2: float
    k1: float
    k2: float

    def __post_init__(self):
        object.__setattr__(self, "a", as_coefficient(self.a))
        object.__setattr__(self, "b", as_coefficient(self.b))
        if not self.Lambda1 > 0 or not self.Lambda2 < 0:
            raise ValueError("need Lambda1 > 0 > Lambda2")
        for name in ("Lambda1", "Lambda2", "k1", "k2"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    @property
    def is_constant(self):
        return bool(self.a.is_constant and self.b.is_constant)

    @property
    def c1(self):
        """``|a| / Lambda1`` (constant coefficients only)."""
        return abs(float(self.a(0.0))) / self.Lambda1

    @property
    def c2(self):
        return abs(float(self.b(0.0))) / abs(self.Lambda2)

    def with_k2(self, k2):
        return PlanarParams(self.a, self.b, self.Lambda1, self.Lambda2, self.k1, k2)

    def to_system(self, L=1.0):
        """Equivalent :class:`~hypiss.model.SystemSpec` on [0, L]."""
        from .model import build_system
        return build_system(n=2, m=1, L=L, lam=[self.Lambda1, self.Lambda2],
                            source_jacobian=[[0.0, self.a], [self.b, 0.0]],
                            boundary_jacobian=[[0.0, self.k1], [self.k2, 0.0]])

    def to_dict(self):
        return {"a": self.a.to_json(), "b": self.b.to_json(), "Lambda1": self.Lambda1,
                "Lambda2": self.Lambda2, "k1": self.k1, "k2": self.k2}


@dataclass(frozen=True)
class RiccatiProfile:
    x: np.ndarray
    eta: np.ndarray
    x_end: float
    blew_up: bool


# Riccati equation with constant coefficients

def blowup_x1(c1, c2, k1):
    """Escape point of ``eta' = c1 + c2 eta**2``, ``eta(0) = |k1|``.

    Examples
    --------
    >>> round(blowup_x1(1, 1, 1), 12) == round(math.pi / 4, 12)
    True
    """
    c1, c2, k = float(c1), float(c2), abs(float(k1))
    if c1 < 0 or c2 < 0:
        raise ValueError("c1 and c2 must be nonnegative")
    if c2 == 0:
        return math.inf
    if c1 == 0:
        return math.inf if k == 0 else 1.0 / (c2 * k)
    r = math.sqrt(c1 * c2)
    # pi/2 - atan(z) = atan(1/z), accurate for large z
    z = math.sqrt(c2 / c1) * k
    gap = math.pi / 2 if z == 0 else math.atan(1.0 / z)
    return gap / r


def eta_closed_form(c1, c2, k1, x):
    """Solution of ``eta' = c1 + c2 eta**2``, ``eta(0) = |k1|`` at ``x``.

    Raises
    ------
    BeyondBlowUp
        If any ``x`` is at or past the escape point.
    """
    c1, c2, k = float(c1), float(c2), abs(float(k1))
    xs = np.asarray(x, dtype=float)
    x1 = blowup_x1(c1, c2, k)
    if np.any(xs >= x1):
        raise BeyondBlowUp(f"eta escapes at x1 = {x1:.12g}")
    if c2 == 0:
        out = k + c1 * xs
    elif c1 == 0:
        out = k / (1.0 - c2 * k * xs)
    else:
        out = math.sqrt(c1 / c2) * np.tan(math.atan(math.sqrt(c2 / c1) * k) + math.sqrt(c1 * c2) * xs)
    return float(out) if np.ndim(out) == 0 else out


# adaptive RK4 for scalar ODEs

def _rk4_step(f, x, y, h):
    k1 = f(x, y)
    k2 = f(x + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(x + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(x + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_adaptive(f, y0, x_max, h=1e-4, tol=1e-12, h_max=1e-2, cap=ETA_CAP, h_min=1e-14):
    """Integrate a scalar ODE with step doubling (Richardson factor 16).

    A step is accepted when the full step and two half steps agree to within
    ``15 * tol * max(1, |y|)``; the step is halved on rejection and allowed to
    grow up to ``h_max`` otherwise.  Integration stops when ``|y|`` exceeds
    ``cap`` or the step collapses below ``h_min`` (both reported as blow-up).

    Returns
    -------
    xs, ys : ndarray
    blew_up : bool
    """
    x, y = 0.0, float(y0)
    xs, ys = [x], [y]
    while x < x_max:
        step = min(h, x_max - x)
        full = _rk4_step(f, x, y, step)
        half = _rk4_step(f, x, y, 0.5 * step)
        two = _rk4_step(f, x + 0.5 * step, half, 0.5 * step)
        err = abs(two - full) / 15.0
        scale = max(1.0, abs(two))
        if not math.isfinite(two) or err > tol * scale:
            h = 0.5 * step
            if h < h_min:
                return np.array(xs), np.array(ys), True
            continue
        x = x + step if step < x_max - x else x_max
        y = two + (two - full) / 15.0
        xs.append(x)
        ys.append(y)
        if abs(y) > cap:
            return np.array(xs), np.array(ys), True
        if err < tol * scale / 32.0:
            h = min(2.0 * step, h_max)
    return np.array(xs), np.array(ys), False


def eta_numeric(params, x_max=1.0, h=1e-4, tol=1e-12, h_max=1e-2):
    """Numerical Riccati profile for possibly variable ``a(x)``, ``b(x)``."""
    L1, L2 = params.Lambda1, abs(params.Lambda2)
    if params.is_constant:
        c1, c2 = params.c1, params.c2

        def rhs(x, y):
            return c1 + c2 * y * y
    else:
        a, b = params.a, params.b

        def rhs(x, y):
            return abs(float(a(x))) / L1 + abs(float(b(x))) / L2 * y * y
    xs, ys, blew = rk4_adaptive(rhs, abs(params.k1), x_max, h=h, tol=tol, h_max=h_max)
    return RiccatiProfile(xs, ys, float(xs[-1]), blew)


# our condition

def check_planar(params):
    """Riccati-based sufficient condition for a 2x2 system on [0, 1].

    Holds when eta exists on [0, 1] and ``eta(1) |k2| < 1``; the margin is
    ``1 - eta(1) |k2|``, or -1 if eta escapes before x = 1.  Constant
    coefficients use the closed form; ``details`` then lists the interior
    term ``pi/2 - sqrt(c1 c2)`` and the bounds on ``|k1|`` and ``|k2|``.

    Examples
    --------
    >>> check_planar(PlanarParams(0, 0, 1, -1, 0.9, 0.9)).holds
    True
    """
    k1, k2 = abs(params.k1), abs(params.k2)
    details = {}
    if params.is_constant:
        c1, c2 = params.c1, params.c2
        x1 = blowup_x1(c1, c2, k1)
        details["interior"] = math.pi / 2 - math.sqrt(c1 * c2)
        if c2 == 0:
            details["k1_bound"] = math.inf
        elif c1 == 0:
            details["k1_bound"] = 1.0 / c2
        else:
            details["k1_bound"] = math.sqrt(c1 / c2) * _tan_nonneg(math.pi / 2 - math.sqrt(c1 * c2))
        details["x1"] = x1
        if x1 <= 1.0:
            return ConditionReport(False, -1.0, "eta escapes before x = 1", details=details)
        eta1 = eta_closed_form(c1, c2, k1, 1.0)
    else:
        prof = eta_numeric(params, 1.0)
        if prof.blew_up:
            return ConditionReport(False, -1.0, "eta escapes before x = 1",
                                   details={"x_end": prof.x_end})
        eta1 = float(prof.eta[-1])
    details["eta1"] = eta1
    details["k2_bound"] = math.inf if eta1 == 0 else 1.0 / eta1
    margin = 1.0 - eta1 * k2
    note = BOUNDARY_NOTE if margin == 0 else None
    return ConditionReport(margin > 0, margin, "x = 1", details=details, note=note)


def _tan_nonneg(t):
    return math.tan(t) if t > 0 else 0.0


# small-gain (KK) condition

def _kk_parts(params, K, points=KK_POINTS):
    K = np.atleast_1d(np.asarray(K, dtype=float))
    if np.any(K <= 0):
        raise NonPositiveK("K must be positive")
    z = np.linspace(0.0, 1.0, points)
    az = np.abs(params.a(z))
    bz = np.abs(params.b(z))
    with np.errstate(over="ignore"):
        A = np.max(az[None, :] * np.exp(2 * K[:, None] * z[None, :]), axis=1)
        B = np.max(bz[None, :] * np.exp(-2 * K[:, None] * z[None, :]), axis=1)
        k1, k2 = abs(params.k1), abs(params.k2)
        first = (k1 + k2) * np.exp(-K)
        # e^{2K} - e^K = e^K expm1(K), 1 - e^{-K} = -expm1(-K)
        right = np.sqrt(np.exp(K) * np.expm1(K) / (abs(params.Lambda2) * K) * B) + math.sqrt(k2)
        left = np.sqrt(-np.expm1(-K) / (params.Lambda1 * K) * A) + math.sqrt(k1)
        second = right * left
    return first, second


def kk_margin(params, K, points=KK_POINTS):
    """Smallest slack ``1 - lhs`` over both KK inequalities at each K."""
    first, second = _kk_parts(params, K, points)
    out = np.minimum(1.0 - first, 1.0 - second)
    out[~np.isfinite(out)] = -np.inf
    return out if np.ndim(K) else float(out[0])


def kk_holds(params, K, points=KK_POINTS):
    """Both KK inequalities hold strictly at tuning parameter ``K``.

    Examples
    --------
    >>> kk_holds(PlanarParams(0, 0, 1, -1, 0.9, 0.9), 10.0)
    True
    """
    first, second = _kk_parts(params, K, points)
    return bool(first[0] < 1.0 and second[0] < 1.0)


def kk_exists(params, K_grid=KK_GRID, points=KK_POINTS):
    """First K on the grid where the KK condition holds, or None.

    None means "none on this grid", not a proof that no K exists.
    """
    K_grid = np.asarray(K_grid, dtype=float)
    if K_grid.size == 0:
        return None
    first, second = _kk_parts(params, K_grid, points)
    ok = np.flatnonzero((first < 1.0) & (second < 1.0))
    return float(K_grid[ok[0]]) if ok.size else None


# experiments

def sample_params(rng):
    """Random constant-coefficient instance used by the implication experiment."""
    sign = rng.choice([-1.0, 1.0], size=4)
    a, b = sign[:2] * rng.uniform(0.0, 2.0, size=2)
    L1 = rng.uniform(0.2, 2.0)
    L2 = -rng.uniform(0.2, 2.0)
    k1, k2 = sign[2:] * rng.uniform(0.0, 1.5, size=2)
    return PlanarParams(Constant(a), Constant(b), L1, L2, k1, k2)


def implication_trials(seed, trials):
    """Deterministic per-trial instances (one spawned stream per trial)."""
    children = np.random.SeedSequence(seed).spawn(trials)
    return [sample_params(np.random.default_rng(c)) for c in children]


def implication_experiment(seed, trials, K_grid=KK_GRID, return_details=False):
    """Count instances where KK holds on the grid but our condition fails.

    Examples
    --------
    >>> implication_experiment(0, 0)
    0
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    violations = 0
    kk_count = 0
    for p in implication_trials(seed, trials):
        if kk_exists(p, K_grid) is None:
            continue
        kk_count += 1
        if not check_planar(p).holds:
            violations += 1
    if return_details:
        return {"violations": violations, "kk_holds": kk_count, "trials": trials}
    return violations


def strictness_witness(a, b, Lambda1, Lambda2, k1,
                       eps_grid=(1e-1, 1e-2, 1e-3, 1e-4), K_grid=KK_GRID):
    """Instance where our condition holds but KK fails on the whole grid.

    Sets ``k2 = 1 / eta(1) - eps`` for each ``eps`` in turn, i.e. just inside
    our condition.

    Raises
    ------
    NoWitnessFound
        If no ``eps`` gives a witness (always the case for a = b = 0).
    """
    base = PlanarParams(a, b, Lambda1, Lambda2, k1, 0.0)
    if base.is_constant:
        x1 = blowup_x1(base.c1, base.c2, k1)
        if x1 <= 1.0:
            raise NoWitnessFound("eta escapes before x = 1; our condition fails for every k2")
        eta1 = eta_closed_form(base.c1, base.c2, k1, 1.0)
    else:
        prof = eta_numeric(base, 1.0)
        if prof.blew_up:
            raise NoWitnessFound("eta escapes before x = 1; our condition fails for every k2")
        eta1 = float(prof.eta[-1])
    if eta1 == 0:
        raise NoWitnessFound("eta(1) = 0: our condition holds for every k2, no boundary to approach")
    for eps in sorted(eps_grid, reverse=True):
        k2 = 1.0 / eta1 - eps
        if k2 < 0:
            continue
        cand = base.with_k2(k2)
        if check_planar(cand).holds and kk_exists(cand, K_grid) is None:
            return cand
    raise NoWitnessFound("no eps on the grid separates the two conditions")


# limit-length comparison ODE  h' = A1 + B1 h^2 + 2 K h,  h(0) = 0

def _h_branch(A1, B1, K, rel=1e-12):
    if A1 < 0 or B1 < 0:
        raise ValueError("A1 and B1 must be nonnegative")
    if not K > 0:
        raise NonPositiveK("K must be positive")
    if A1 == 0:
        return "zero"
    if B1 == 0:
        return "linear"
    d = A1 * B1 - K * K
    if abs(d) <= rel * max(A1 * B1, K * K):
        return "equal"
    return "tan" if d > 0 else "sinh"


def h_branch(A1, B1, K):
    """Name of the closed-form branch: tan, sinh, equal, linear or zero."""
    return _h_branch(float(A1), float(B1), float(K))


def x5(A1, B1, K):
    """Escape point of ``h' = A1 + B1 h**2 + 2 K h``, ``h(0) = 0``.

    Examples
    --------
    >>> x5(1.0, 0.25, 0.5)
    2.0
    """
    A1, B1, K = float(A1), float(B1), float(K)
    br = _h_branch(A1, B1, K)
    if br in ("zero", "linear"):
        return math.inf
    if br == "equal":
        return 1.0 / math.sqrt(A1 * B1)
    if br == "tan":
        w = math.sqrt(A1 * B1 - K * K)
        return math.atan2(w, K) / w
    v = math.sqrt(K * K - A1 * B1)
    return math.atanh(v / K) / v


def h_closed_form(A1, B1, K, x):
    """Closed-form solution of the comparison ODE on ``[0, x5)``."""
    A1, B1, K = float(A1), float(B1), float(K)
    xs = np.asarray(x, dtype=float)
    if np.any(xs >= x5(A1, B1, K)):
        raise BeyondBlowUp(f"h escapes at x5 = {x5(A1, B1, K):.12g}")
    br = _h_branch(A1, B1, K)
    if br == "zero":
        out = np.zeros_like(xs)
    elif br == "linear":
        out = A1 / (2 * K) * np.expm1(2 * K * xs)
    elif br == "equal":
        r = math.sqrt(A1 * B1)
        out = (math.sqrt(A1) / (1.0 - r * xs) - math.sqrt(A1)) / math.sqrt(B1)
    elif br == "tan":
        w = math.sqrt(A1 * B1 - K * K)
        out = (w * np.tan(math.atan(K / w) + w * xs) - K) / B1
    else:
        v = math.sqrt(K * K - A1 * B1)
        out = A1 * np.sinh(v * xs) / (v * np.cosh(v * xs) - K * np.sinh(v * xs))
    return float(out) if np.ndim(out) == 0 else out


def x5_numeric(A1, B1, K, x_max=10.0, step=1e-2):
    """Escape points by RK4 on ``phi = atan(h)`` (vectorized over inputs).

    ``phi' = A1 cos^2 + B1 sin^2 + 2 K sin cos`` is bounded, and h escapes
    exactly when phi reaches pi/2.  The crossing is located by cubic Hermite
    interpolation within the step.  Entries that do not escape before
    ``x_max`` are returned as inf.
    """
    A1, B1, K = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (A1, B1, K)))
    shape = A1.shape
    a, b, k = A1.ravel().copy(), B1.ravel().copy(), K.ravel().copy()
    idx = np.arange(a.size)

    def f(p):
        s, c = np.sin(p), np.cos(p)
        return a * c * c + b * s * s + 2 * k * s * c

    phi = np.zeros_like(a)
    out = np.full(a.size, np.inf)
    target = math.pi / 2
    x = 0.0
    for _ in range(int(math.ceil(x_max / step))):
        k1 = f(phi)
        k2 = f(phi + 0.5 * step * k1)
        k3 = f(phi + 0.5 * step * k2)
        k4 = f(phi + step * k3)
        new = phi + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        hit = new >= target
        if np.any(hit):
            d1 = f(new)
            out[idx[hit]] = x + step * _hermite_root(phi[hit], new[hit], k1[hit], d1[hit], step, target)
            keep = ~hit
            a, b, k, idx, new = a[keep], b[keep], k[keep], idx[keep], new[keep]
            if idx.size == 0:
                break
        phi = new
        x += step
    return out.reshape(shape) if shape else float(out[0])


def _hermite_root(p0, p1, d0, d1, h, target, iters=40):
    lo = np.zeros_like(p0)
    hi = np.ones_like(p0)
    for _ in range(iters):
        t = 0.5 * (lo + hi)
        t2, t3 = t * t, t * t * t
        val = ((2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * h * d0
               + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * d1)
        below = val < target
        lo = np.where(below, t, lo)
        hi = np.where(below, hi, t)
    return 0.5 * (lo + hi)


def in_limit_region(A1, B1, K):
    """Small-gain limit-length region ``A1 B1 ((e^K - 1) / K)^2 < 1``."""
    A1, B1, K = (np.asarray(v, dtype=float) for v in (A1, B1, K))
    return A1 * B1 * (np.expm1(K) / K) ** 2 < 1.0
