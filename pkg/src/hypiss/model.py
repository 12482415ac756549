"""System specifications for 1-D hyperbolic boundary-control problems.

A system is

    u_t + A(u, x) u_x + B(u, x) = 0,   x in [0, L],
    (u_+(t, 0), u_-(t, L)) = G(u_+(t, L), u_-(t, 0)) + d(t),

where the first ``m`` components travel right and the rest travel left.  The
linearization at zero is described by the speeds ``Lambda_i(x)`` (diagonal of
A(0, x)), the source Jacobian ``M(x) = dB/du(0, x)`` and the boundary Jacobian
``J = G'(0)``.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import (DimensionMismatch, EvaluationFailure, SpeedCollision,
                     SpeedSignViolation)
from .expr import Constant, Expr, as_coefficient

DEFAULT_CHECK_POINTS = 256


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [0, L] including both endpoints."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DimensionMismatch("a grid needs at least two points")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise DimensionMismatch("grid points must be strictly increasing")
        if pts[0] != 0.0:
            raise DimensionMismatch("grid must start at x = 0")
        h = (pts[-1] - pts[0]) / (pts.size - 1)
        if np.max(np.abs(steps - h)) > 1e-12 * max(1.0, pts[-1]) + 1e-12 * h:
            raise DimensionMismatch("grid spacing must be uniform")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, L, count):
        if count < 2:
            raise DimensionMismatch("a grid needs at least two points")
        return cls(np.linspace(0.0, float(L), int(count)))

    @property
    def count(self):
        return self.points.size

    @property
    def L(self):
        return float(self.points[-1])

    @property
    def h(self):
        return self.L / (self.count - 1)

    def refine(self, factor=2):
        """Grid with ``factor`` times as many intervals; shares all current points."""
        return SpatialGrid.uniform(self.L, (self.count - 1) * factor + 1)

    def __eq__(self, other):
        return isinstance(other, SpatialGrid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.count, self.L))


class Orientation(NamedTuple):
    """Per-component travel direction ``s`` and outgoing endpoint ``l``."""

    s: np.ndarray
    l: np.ndarray


class CoefficientTable(NamedTuple):
    lam: np.ndarray  # (n, N)
    M: np.ndarray  # (n, n, N)


@dataclass(frozen=True)
class Nonlinear:
    """Optional nonlinear closures used only by the simulator.

    ``speed(u, x)`` returns the diagonal of A(u, x) with shape (n, N), or the
    full matrix with shape (n, n, N).  ``source(u, x)`` returns B(u, x) with
    shape (n, N).  ``boundary(out)`` maps the outgoing traces
    ``(u_+(L), u_-(0))`` (an n-vector) to the incoming ones.
    """

    speed: Optional[Callable] = None
    source: Optional[Callable] = None
    boundary: Optional[Callable] = None
    exprs: Optional[dict] = field(default=None, compare=False)

    def to_json(self):
        if self.exprs is None:
            raise TypeError("nonlinear closures given as Python callables are not serializable")
        return self.exprs


def _nonlinear_from_json(obj, n):
    names = tuple(f"u{i + 1}" for i in range(n))

    def vector(key, variables):
        items = obj.get(key)
        if items is None:
            return None
        if len(items) != n:
            raise DimensionMismatch(f"nonlinear.{key} needs {n} entries")
        return [Expr(e, variables) if isinstance(e, str) else as_coefficient(e, variables)
                for e in items]

    speed = vector("speed", names + ("x",))
    source = vector("source", names + ("x",))
    bnd = vector("boundary", names)

    def stack_ux(coefs):
        def fn(u, x):
            u = np.asarray(u, dtype=float)
            x = np.broadcast_to(np.asarray(x, dtype=float), u.shape[1:])
            return np.stack([c(*u, x) for c in coefs])
        return fn

    def stack_out(coefs):
        def fn(out):
            out = np.asarray(out, dtype=float)
            return np.stack([c(*out) for c in coefs])
        return fn

    return Nonlinear(
        speed=stack_ux(speed) if speed else None,
        source=stack_ux(source) if source else None,
        boundary=stack_out(bnd) if bnd else None,
        exprs={k: obj[k] for k in ("speed", "source", "boundary") if k in obj},
    )


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Validated hyperbolic system.  Build with :func:`build_system`."""

    n: int
    m: int
    L: float
    lam: tuple
    source_jacobian: tuple
    boundary_jacobian: np.ndarray
    nonlinear: Optional[Nonlinear] = None
    check_points: int = DEFAULT_CHECK_POINTS

    @property
    def orientation(self):
        s = np.where(np.arange(self.n) < self.m, 1.0, -1.0)
        l = np.where(s > 0, self.L, 0.0)
        return Orientation(s, l)

    @property
    def J(self):
        return self.boundary_jacobian

    def with_length(self, L):
        """Same coefficients on [0, L] (coefficients are functions of absolute x)."""
        return build_system(n=self.n, m=self.m, L=L, lam=self.lam,
                            source_jacobian=self.source_jacobian,
                            boundary_jacobian=self.boundary_jacobian,
                            nonlinear=self.nonlinear, check_points=self.check_points)

    def default_grid(self):
        return SpatialGrid.uniform(self.L, self.check_points)

    def source_is_zero(self, grid=None):
        tab = sample_coefficients(self, grid or self.default_grid())
        return not np.any(tab.M)

    def to_dict(self):
        out = {
            "n": self.n,
            "m": self.m,
            "L": self.L,
            "lambda": [c.to_json() for c in self.lam],
            "source_jacobian": [[c.to_json() for c in row] for row in self.source_jacobian],
            "boundary_jacobian": self.boundary_jacobian.tolist(),
        }
        if self.nonlinear is not None:
            out["nonlinear"] = self.nonlinear.to_json()
        return out

    def __eq__(self, other):
        if not isinstance(other, SystemSpec):
            return NotImplemented
        return (self.n == other.n and self.m == other.m and self.L == other.L
                and self.lam == other.lam and self.source_jacobian == other.source_jacobian
                and np.array_equal(self.boundary_jacobian, other.boundary_jacobian)
                and self.nonlinear is other.nonlinear)

    __hash__ = object.__hash__


def _coef_matrix(raw, n):
    if raw is None:
        return tuple(tuple(Constant(0.0) for _ in range(n)) for _ in range(n))
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        if raw != 0:
            raise DimensionMismatch("a scalar source_jacobian must be 0")
        return _coef_matrix(None, n)
    if callable(raw) and not isinstance(raw, (Expr, Constant)):
        # single matrix-valued callable M(x) -> (n, n)
        fn = raw
        return tuple(tuple(as_coefficient(_entry(fn, i, j)) for j in range(n)) for i in range(n))
    if isinstance(raw, np.ndarray):
        raw = raw.tolist()
    if len(raw) != n or any(len(row) != n for row in raw):
        raise DimensionMismatch(f"source_jacobian must be {n}x{n}")
    return tuple(tuple(as_coefficient(c) for c in row) for row in raw)


def _entry(fn, i, j):
    def e(x):
        x = np.asarray(x, dtype=float)
        vals = [np.asarray(fn(xi), dtype=float)[i, j] for xi in np.atleast_1d(x)]
        return np.asarray(vals).reshape(x.shape)
    return e


def build_system(raw=None, **fields):
    """Validate raw fields (a mapping, keyword arguments or a SystemSpec).

    Accepted keys: ``n``, ``m``, ``L``, ``lambda`` (or ``lam``),
    ``source_jacobian``, ``boundary_jacobian``, ``nonlinear``,
    ``check_points``.  ``n`` defaults to ``len(lambda)`` and ``m`` to the
    number of positive speeds at x = 0.

    Examples
    --------
    >>> sys = build_system(L=1, lam=[1, -1], boundary_jacobian=[[0, .5], [.5, 0]])
    >>> sys.n, sys.m
    (2, 1)
    """
    if isinstance(raw, SystemSpec):
        if fields:
            raise TypeError("cannot combine a SystemSpec with extra fields")
        _validate(raw)
        return raw
    data = dict(raw or {})
    data.update(fields)
    if "lam" in data:
        data["lambda"] = data.pop("lam")
    unknown = set(data) - {"n", "m", "L", "lambda", "source_jacobian",
                           "boundary_jacobian", "nonlinear", "check_points"}
    if unknown:
        raise DimensionMismatch(f"unknown system fields: {sorted(unknown)}")
    if "lambda" not in data:
        raise DimensionMismatch("missing field 'lambda'")
    lam_raw = data["lambda"]
    if isinstance(lam_raw, np.ndarray):
        lam_raw = lam_raw.tolist()
    lam = tuple(as_coefficient(c) for c in lam_raw)
    n = int(data.get("n", len(lam)))
    if n < 1 or len(lam) != n:
        raise DimensionMismatch(f"lambda has {len(lam)} entries but n = {n}")
    L = float(data.get("L", 1.0))
    if not (L > 0 and np.isfinite(L)):
        raise DimensionMismatch("L must be positive and finite")
    check_points = int(data.get("check_points", DEFAULT_CHECK_POINTS))
    if "m" in data:
        m = int(data["m"])
    else:
        m = int(np.sum(np.array([c(np.array([0.0]))[0] for c in lam]) > 0))
    if not 0 <= m <= n:
        raise DimensionMismatch(f"m = {m} outside [0, {n}]")
    M = _coef_matrix(data.get("source_jacobian"), n)
    J = np.array(data.get("boundary_jacobian", np.zeros((n, n))), dtype=float)
    if J.shape != (n, n):
        raise DimensionMismatch(f"boundary_jacobian must be {n}x{n}, got {J.shape}")
    if not np.all(np.isfinite(J)):
        raise EvaluationFailure("boundary_jacobian has non-finite entries")
    J.setflags(write=False)
    nl = data.get("nonlinear")
    if isinstance(nl, dict):
        nl = _nonlinear_from_json(nl, n)
    sys = SystemSpec(n=n, m=m, L=L, lam=lam, source_jacobian=M, boundary_jacobian=J,
                     nonlinear=nl, check_points=check_points)
    _validate(sys)
    return sys


def system_from_dict(obj):
    return build_system(obj)


def _validate(sys):
    grid = sys.default_grid()
    tab = sample_coefficients(sys, grid)
    lam = tab.lam
    s = sys.orientation.s
    bad = lam * s[:, None] <= 0
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise SpeedSignViolation(
            f"Lambda_{i + 1}(x={grid.points[j]:.6g}) = {lam[i, j]:.6g} has the wrong sign for m = {sys.m}")
    for i in range(sys.n):
        for k in range(i + 1, sys.n):
            hit = np.flatnonzero(lam[i] == lam[k])
            if hit.size:
                raise SpeedCollision(
                    f"Lambda_{i + 1} = Lambda_{k + 1} at x = {grid.points[hit[0]]:.6g}")
    nl = sys.nonlinear
    if nl is None:
        return
    x = grid.points
    zero = np.zeros((sys.n, x.size))
    tol = 1e-8
    if nl.speed is not None:
        A0 = np.asarray(nl.speed(zero, x), dtype=float)
        diag = A0 if A0.ndim == 2 else np.einsum("iij->ij", A0)
        if np.max(np.abs(diag - lam)) > tol * max(1.0, np.max(np.abs(lam))):
            raise EvaluationFailure("nonlinear speed at u = 0 does not match lambda")
    if nl.source is not None:
        B0 = np.asarray(nl.source(zero, x), dtype=float)
        if not np.all(np.isfinite(B0)) or np.max(np.abs(B0)) > tol:
            raise EvaluationFailure("nonlinear source must vanish at u = 0")


def sample_coefficients(sys, grid):
    """Tabulate the speeds and source Jacobian on ``grid``.

    Returns
    -------
    CoefficientTable
        ``lam`` with shape (n, N) and ``M`` with shape (n, n, N).

    Examples
    --------
    >>> sys = build_system(L=1, lam=[1, -1], source_jacobian=[[0, "x"], [1, 0]])
    >>> sample_coefficients(sys, SpatialGrid.uniform(1, 3)).M[0, 1]
    array([0. , 0.5, 1. ])
    """
    x = grid.points
    n = sys.n
    lam = np.empty((n, x.size))
    M = np.empty((n, n, x.size))
    with np.errstate(all="ignore"):
        for i, c in enumerate(sys.lam):
            lam[i] = _evaluate(c, x, f"lambda[{i}]")
        for i in range(n):
            for j in range(n):
                M[i, j] = _evaluate(sys.source_jacobian[i][j], x, f"source_jacobian[{i}][{j}]")
    return CoefficientTable(lam, M)


def _evaluate(c, x, label):
    try:
        v = np.asarray(c(x), dtype=float)
    except Exception as exc:  # user closures may raise anything
        raise EvaluationFailure(f"{label} failed: {exc}") from exc
    v = np.broadcast_to(v, x.shape)
    if not np.all(np.isfinite(v)):
        j = int(np.flatnonzero(~np.isfinite(v))[0])
        raise EvaluationFailure(f"{label} is not finite at x = {x[j]:.6g}")
    return v
