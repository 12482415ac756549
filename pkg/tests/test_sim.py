import math
import warnings

import numpy as np
import pytest

from hypiss.certifier import FProfile, certify
from hypiss.errors import (CFLViolation, CompatibilityViolation, HorizonMismatch,
                           NonDiagonalQuasilinear)
from hypiss.model import SpatialGrid, build_system
from hypiss.sim import (DisturbanceSpec, Trajectory, c_norms, compatibility_residuals,
                        envelope_check, fit_decay, fit_envelope, lyapunov_v, lyapunov_w,
                        project_compatible, simulate)

TRANSPORT = build_system(L=1, lam=[1, -1])


def transport_error(N, d_expr, d_fn, T=4.0):
    g = SpatialGrid.uniform(1, N)
    tr = simulate(TRANSPORT, np.zeros((2, N)), DisturbanceSpec((d_expr, 0)), g, T,
                  record_every=0.05, strict=False)
    x = g.points
    err = 0.0
    for t, s in zip(tr.times, tr.snapshots):
        exact = np.where(t > x, d_fn(t - x), 0.0)
        err = max(err, float(np.max(np.abs(s[0] - exact))))
    return err, tr


def test_equilibrium_stays_zero():
    g = SpatialGrid.uniform(1, 33)
    tr = simulate(TRANSPORT, np.zeros((2, 33)), DisturbanceSpec.zero(2), g, 2.0)
    assert np.all(tr.snapshots == 0) and np.all(tr.c1_norms == 0)


def test_outflow_empties_domain():
    g = SpatialGrid.uniform(1, 513)
    x = g.points
    d = DisturbanceSpec.zero(2)
    u0 = project_compatible(TRANSPORT, np.vstack([np.sin(np.pi * x) ** 2, x ** 2 * (1 - x) ** 2]), d, g)
    tr = simulate(TRANSPORT, u0, d, g, 1.6, record_every=0.1, strict=True)
    k = np.searchsorted(tr.times, 1.5)
    assert tr.c1_norms[k] <= 1e-3 * tr.c1_norms[0]


@pytest.mark.filterwarnings("ignore:u0 violates")
def test_transport_reproduces_boundary_signal():
    err, tr = transport_error(513, "0.01*sin(t)", lambda s: 0.01 * np.sin(s))
    assert err <= 0.02 * 0.01
    assert np.max(np.abs(tr.snapshots[:, 1])) == 0


def test_transport_first_order_convergence():
    # d(0) = d'(0) = 0, so the data are compatible to first order
    d = lambda s: 0.01 * (1 - np.cos(3 * s))
    e1, _ = transport_error(129, "0.01*(1 - cos(3*t))", d, T=2.0)
    e2, _ = transport_error(257, "0.01*(1 - cos(3*t))", d, T=2.0)
    assert 1.6 < e1 / e2 < 2.4


def test_internal_source_steady_state():
    # u_t + u_x = c with u(t, 0) = 0 settles to u = c x
    sys = build_system(L=1, lam=[1.0])
    g = SpatialGrid.uniform(1, 257)
    dist = DisturbanceSpec((0,), internal=("0.5",))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr = simulate(sys, np.zeros((1, 257)), dist, g, 2.0)
    assert np.max(np.abs(tr.snapshots[-1, 0] - 0.5 * g.points)) < 1e-10
    assert np.all(tr.history["d2"] == 0.5) and np.all(tr.history["d2_prime"] == 0)


def test_energy_preserving_reflection_does_not_grow():
    sys = build_system(L=1, lam=[1, -1], boundary_jacobian=[[0, 1], [1, 0]])
    g = SpatialGrid.uniform(1, 257)
    x = g.points
    d = DisturbanceSpec.zero(2)
    u0 = project_compatible(sys, np.vstack([np.sin(np.pi * x) ** 2, 0.5 * np.sin(np.pi * x) ** 2]), d, g)
    tr = simulate(sys, u0, d, g, 5.0, record_every=0.05, strict=True)
    assert np.all(np.diff(tr.c0_norms) <= 5 * g.h * tr.c0_norms[0])
    assert tr.c0_norms[-1] > 0.5 * tr.c0_norms[0]


def test_c_norms_examples():
    g = SpatialGrid.uniform(1, 11)
    assert c_norms(np.vstack([np.full(11, 0.5), np.full(11, -0.2)]), g) == (0.5, 0.5)
    errs = []
    for N in (201, 401):
        gg = SpatialGrid.uniform(1, N)
        u = np.sin(2 * np.pi * gg.points)[None, :]
        errs.append(abs(c_norms(u, gg)[1] - (1 + 2 * np.pi)))
        noisy = u + 1e-9 * np.random.default_rng(0).uniform(-1, 1, u.shape)
        assert abs(c_norms(noisy, gg)[0] - c_norms(u, gg)[0]) <= 1e-8
    assert errs[0] < 5e-3 and errs[0] / errs[1] > 3.5


def test_compatibility_warning_and_strict():
    g = SpatialGrid.uniform(1, 33)
    u0 = np.ones((2, 33))
    d = DisturbanceSpec.zero(2)
    with pytest.warns(UserWarning, match="compatibility"):
        simulate(TRANSPORT, u0, d, g, 0.1)
    with pytest.raises(CompatibilityViolation):
        simulate(TRANSPORT, u0, d, g, 0.1, strict=True)


def test_project_compatible_zeroes_residuals():
    sys = build_system(L=1, lam=[1, -2], source_jacobian=[[0.1, 0.3], [0.2, 0]],
                       boundary_jacobian=[[0, 0.4], [0.3, 0]])
    g = SpatialGrid.uniform(1, 129)
    d = DisturbanceSpec(("0.1*sin(t) + 0.2", "cos(2*t)"), internal=("x*t", "0.3"))
    u0 = project_compatible(sys, np.vstack([np.cos(g.points), g.points ** 2]), d, g)
    r0, r1 = compatibility_residuals(sys, u0, d, g)
    assert np.max(np.abs(r0)) < 1e-12 and np.max(np.abs(r1)) < 1e-9


def test_cfl_and_horizon_errors():
    g = SpatialGrid.uniform(1, 33)
    with pytest.raises(CFLViolation):
        simulate(TRANSPORT, np.zeros((2, 33)), DisturbanceSpec.zero(2), g, 1.0, cfl=1.2)
    with pytest.raises(HorizonMismatch):
        simulate(TRANSPORT, np.zeros((2, 33)), DisturbanceSpec((0, 0), horizon=1.0), g, 2.0)


def test_non_diagonal_quasilinear_rejected():
    def speed(u, x):
        A = np.zeros((2, 2) + np.shape(x))
        A[0, 0], A[1, 1], A[0, 1] = 1.0, -1.0, 0.1
        return A
    from hypiss.model import Nonlinear
    sys = build_system(L=1, lam=[1, -1], nonlinear=Nonlinear(speed=speed))
    g = SpatialGrid.uniform(1, 17)
    with pytest.raises(NonDiagonalQuasilinear):
        simulate(sys, np.zeros((2, 17)), DisturbanceSpec.zero(2), g, 0.1, mode="quasilinear-diagonal")


def test_quasilinear_small_data_matches_linear():
    nl = {"speed": ["1 + u1", "-1 - u2"], "source": ["0.2*u2 + u1**2", "0.1*u1"],
          "boundary": ["0.5*u2", "0.5*u1"]}
    sys = build_system(L=1, lam=[1, -1], source_jacobian=[[0, 0.2], [0.1, 0]],
                       boundary_jacobian=[[0, 0.5], [0.5, 0]], nonlinear=nl)
    g = SpatialGrid.uniform(1, 129)
    x = g.points
    d = DisturbanceSpec.zero(2)
    amp = 1e-4
    u0 = project_compatible(sys, amp * np.vstack([np.sin(np.pi * x), np.cos(np.pi * x)]), d, g)
    lin = simulate(sys, u0, d, g, 1.0, mode="linear")
    semi = simulate(sys, u0, d, g, 1.0, mode="semilinear")
    quasi = simulate(sys, u0, d, g, 1.0, mode="quasilinear-diagonal")
    for other in (semi, quasi):
        n = min(len(lin.times), len(other.times))
        assert np.max(np.abs(other.snapshots[-1] - lin.snapshots[-1])) < 1e-2 * amp
        assert n > 2


def test_trajectory_invariants():
    g = SpatialGrid.uniform(1, 65)
    x = g.points
    d = DisturbanceSpec(("0.1*sin(t)", "0"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr = simulate(TRANSPORT, np.vstack([x, 1 - x]), d, g, 3.0)
    assert np.all(tr.c0_norms <= tr.c1_norms) and np.all(tr.c0_norms >= 0)
    assert len(tr.times) == len(tr.snapshots) and np.all(np.diff(tr.times) > 0)
    assert tr.history["t"].size > len(tr.times)


# Lyapunov functionals

def test_lyapunov_zero_snapshot():
    g = SpatialGrid.uniform(1, 11)
    f = FProfile.constant([1, 1], g)
    lam = np.vstack([np.ones(11), -np.ones(11)])
    assert lyapunov_w(np.zeros((2, 11)), f, 0.1, 2, TRANSPORT.orientation, lam) == (0.0, 0.0)
    assert lyapunov_v(np.zeros((2, 11)), f, 0.1, TRANSPORT.orientation, lam) == 0.0


@pytest.mark.parametrize("p", [1, 4, 16])
def test_lyapunov_w_scalar_closed_form(p):
    sys = build_system(L=2, lam=[1.5])
    g = SpatialGrid.uniform(2, 4001)
    f = FProfile.constant([1.0], g)
    c, mu = 0.7, 0.3
    w1, w2 = lyapunov_w(np.full((1, g.count), c), f, mu, p, sys.orientation, sys)
    exact = c * ((1 - math.exp(-2 * p * mu * 2)) / (2 * p * mu)) ** (1 / (2 * p))
    assert w1 == pytest.approx(exact, rel=1e-6) and w2 == 0


def test_lyapunov_v_constant_snapshot():
    g = SpatialGrid.uniform(1, 11)
    u = np.vstack([np.full(11, 0.3), np.zeros(11)])
    assert lyapunov_v(u, FProfile.constant([1, 1], g), 0.2, TRANSPORT.orientation, TRANSPORT) == pytest.approx(0.3)


def test_v_between_gain_bounds():
    sys = build_system(L=1, lam=[1.2, -0.8], source_jacobian=[[0, 0.3], [0.2, 0]],
                       boundary_jacobian=[[0, 0.5], [0.4, 0]])
    cert = certify(sys)
    g = cert.f.grid
    rng = np.random.default_rng(8)
    x = g.points
    for _ in range(100):
        coef = rng.normal(size=(2, 4))
        u = sum(coef[:, [k]] * np.sin((k + 1) * np.pi * x + k) for k in range(4))
        V = lyapunov_v(u, cert.f, cert.mu, sys.orientation, sys)
        c1 = c_norms(u, g)[1]
        assert cert.gains.C_min * c1 <= V * (1 + 1e-12)
        assert V <= cert.gains.C_max * c1 * (1 + 1e-12)


# envelopes

def _decaying_runs(seeds, T=6.0):
    sys = build_system(L=1, lam=[1, -1], boundary_jacobian=[[0, 0.5], [0.5, 0]])
    g = SpatialGrid.uniform(1, 129)
    x = g.points
    runs = []
    for s in seeds:
        rng = np.random.default_rng(s)
        w = rng.uniform(0.5, 3)
        d = DisturbanceSpec((f"{rng.uniform(0, 0.05):.6f}*sin({w:.6f}*t)", "0"))
        u0 = project_compatible(sys, rng.uniform(0.1, 0.5) * np.vstack([np.sin(np.pi * x), np.cos(np.pi * x)]), d, g)
        runs.append((simulate(sys, u0, d, g, T, record_every=0.05), d))
    return runs


def test_envelope_fit_self_consistent_and_monotone():
    (tr, d), = _decaying_runs([1])
    rep = envelope_check(tr, d)
    assert rep.holds and rep.worst_ratio <= 1 and rep.fitted[2] > 0
    C1, C2, gamma = rep.fitted
    assert envelope_check(tr, d, gains=(C1, 2 * C2, gamma)).holds


def test_envelope_constant_disturbance_transport():
    g = SpatialGrid.uniform(1, 129)
    d = DisturbanceSpec((0.02, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr = simulate(TRANSPORT, np.zeros((2, 129)), d, g, 3.0)
    # the sup-norm response equals delta; C2 = e^{gamma L} >= 1 covers it
    rep = envelope_check(tr, d, gains=(1.0, math.exp(0.1), 0.1), q=0)
    assert rep.holds


def test_envelope_vacuous_window():
    g = SpatialGrid.uniform(1, 9)
    snaps = np.zeros((3, 2, 9))
    snaps[1, 0, 4] = 1e-17
    tr = Trajectory(np.array([0.0, 0.5, 1.0]), snaps, np.array([0, 1e-17, 0]),
                    np.array([0, 1e-17, 0]), g)
    rep = envelope_check(tr, DisturbanceSpec.zero(2), gains=(1.0, 1.0, 0.1))
    assert rep.note == "vacuous window" and rep.vacuous_times == 1


def test_envelope_horizon_mismatch():
    (tr, _), = _decaying_runs([2], T=1.0)
    tr.history = {}
    with pytest.raises(HorizonMismatch):
        envelope_check(tr, DisturbanceSpec((0, 0), horizon=0.5), gains=(1, 1, 0.1))


def test_envelope_q0_uses_sup_norm():
    (tr, d), = _decaying_runs([3])
    rep = envelope_check(tr, d, q=0)
    assert rep.holds


def test_fit_envelope_joint():
    runs = _decaying_runs([4, 5, 6])
    gains = fit_envelope([r[0] for r in runs], [r[1] for r in runs])
    assert all(envelope_check(tr, d, gains=gains).holds for tr, d in runs)


def test_fit_decay_exponential():
    t = np.linspace(0, 5, 51)
    C, gamma = fit_decay(t, 2.0 * np.exp(-0.7 * t))
    # the 10% allowance on C buys ln(1.1) / 5 of extra rate over the 5-unit window
    assert gamma == pytest.approx(0.7 + math.log(1.1) / 5, abs=1e-6) and C <= 1.1 + 1e-12
    C, gamma = fit_decay(t, np.exp(0.2 * t))
    assert gamma < 0


def test_disturbance_derivatives():
    d = DisturbanceSpec(("sin(2*t)", 3.0), internal=("x*t**2", "0"))
    assert d.d_prime(0.3) == pytest.approx([2 * math.cos(0.6), 0.0])
    assert d.d2_prime(2.0, np.array([0.5]))[0, 0] == pytest.approx(2.0)
    assert DisturbanceSpec(("0.1*sin(t)",), bound=0.1).check_bound(10)
    assert not DisturbanceSpec(("0.2*sin(t)",), bound=0.1).check_bound(10)
    again = DisturbanceSpec.from_dict(d.to_dict())
    assert again.d(1.2).tolist() == d.d(1.2).tolist()
