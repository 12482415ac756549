"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line (printed in the terminal
summary) before asserting, so the full table appears even when some fail.
"""

import math
import time
import warnings

import numpy as np

from conftest import ACCEPTANCE_LINES
from hypiss.certifier import certify, max_iss_length
from hypiss.errors import CertificationFailure, NoWitnessFound
from hypiss.model import SpatialGrid, build_system
from hypiss.planar import (KK_GRID, PlanarParams, blowup_x1, check_planar, eta_closed_form,
                           eta_numeric, h_branch, implication_experiment, in_limit_region,
                           kk_exists, strictness_witness, x5, x5_numeric)
from hypiss.scaling import rho_inf, rho_two
from hypiss.sim import (DisturbanceSpec, envelope_check, fit_decay, fit_envelope, lyapunov_v,
                        lyapunov_w, project_compatible, simulate)


def record(num, name, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"[{num:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail} ({elapsed:.1f} s, limit {limit} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def corpus(seed=2024, count=1000):
    rng = np.random.default_rng(seed)
    return [rng.uniform(-1, 1, size=(n, n)) for n in rng.integers(2, 6, size=count)]


def test_01_rho_inf_matches_perron_root():
    mats = corpus()
    t0 = time.perf_counter()
    values = [rho_inf(K).value for K in mats]
    elapsed = time.perf_counter() - t0
    oracle = [float(np.max(np.abs(np.linalg.eigvals(np.abs(K))))) for K in mats]
    err = max(abs(a - b) for a, b in zip(values, oracle))
    assert record(1, "rho_inf equals Perron root of |K|", err <= 1e-6, elapsed, 5,
                  f"max error {err:.2e} over {len(mats)} matrices")


def test_02_rho_two_below_rho_inf():
    mats = corpus()
    t0 = time.perf_counter()
    gaps = [rho_two(K).value - rho_inf(K).value for K in mats]
    elapsed = time.perf_counter() - t0
    worst = max(gaps)
    assert record(2, "rho_two <= rho_inf + 1e-6", worst <= 1e-6, elapsed, 60,
                  f"max rho_two - rho_inf {worst:.2e}")


def test_03_riccati_closed_form_agreement():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        a, b = rng.uniform(0, 2, 2)
        L1, L2 = rng.uniform(0.2, 2), -rng.uniform(0.2, 2)
        k1 = rng.uniform(-1.5, 1.5)
        p = PlanarParams(a, b, L1, L2, k1, 0.0)
        x1 = blowup_x1(p.c1, p.c2, abs(k1))
        x_max = min(0.9 * x1, 5.0)
        prof = eta_numeric(p, x_max)
        closed = eta_closed_form(p.c1, p.c2, abs(k1), prof.x)
        worst = max(worst, float(np.max(np.abs(prof.eta - closed))))
    x1 = blowup_x1(1, 1, 0)
    eta1 = eta_numeric(PlanarParams(1, 1, 1, -1, 0, 0), 1.0).eta[-1]
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and abs(x1 - math.pi / 2) <= 1e-9 and abs(eta1 - math.tan(1)) <= 1e-8
    assert record(3, "eta numeric vs closed form", ok, elapsed, 10,
                  f"max diff {worst:.1e}, x1 - pi/2 = {x1 - math.pi / 2:.1e}, "
                  f"eta(1) - tan(1) = {eta1 - math.tan(1):.1e}")


def test_04_implication_experiment():
    t0 = time.perf_counter()
    res = implication_experiment(42, 1000, return_details=True)
    elapsed = time.perf_counter() - t0
    assert record(4, "KK holds implies our condition", res["violations"] == 0, elapsed, 30,
                  f"{res['violations']} violations, KK held on {res['kk_holds']} of 1000")


def test_05_strictness():
    t0 = time.perf_counter()
    witness = strictness_witness(1, 1, 1, -1, 0)
    p = PlanarParams(1, 1, 1, -1, 0, 1 / math.tan(1) - 1e-3)
    near_boundary = check_planar(p).holds and kk_exists(p, KK_GRID) is None
    try:
        strictness_witness(0, 0, 1, -1, 0.5)
        degenerate = False
    except NoWitnessFound:
        degenerate = True
    elapsed = time.perf_counter() - t0
    ok = check_planar(witness).holds and kk_exists(witness) is None and near_boundary and degenerate
    assert record(5, "strictness witness", ok, elapsed, 10,
                  f"witness k2 = {witness.k2:.6f}, k2 = cot(1) - 1e-3 separates: {near_boundary}, "
                  f"a = b = 0 gives NoWitnessFound: {degenerate}")


def test_06_limit_length_region():
    G = np.geomspace(1e-3, 10, 50)
    A, B, K = (v.ravel() for v in np.meshgrid(G, G, G, indexing="ij"))
    mask = in_limit_region(A, B, K)
    A, B, K = A[mask], B[mask], K[mask]
    t0 = time.perf_counter()
    closed = np.array([x5(a, b, k) for a, b, k in zip(A, B, K)])
    branches = {h_branch(a, b, k) for a, b, k in zip(A, B, K)}
    numeric = x5_numeric(A, B, K)
    elapsed = time.perf_counter() - t0
    violations = int(np.sum(closed <= 1))
    finite = np.isfinite(closed) & (closed < 10)
    diff = float(np.max(np.abs(numeric[finite] - closed[finite])))
    ok = violations == 0 and diff <= 1e-3 and {"tan", "sinh", "equal"} <= branches
    assert record(6, "x5 > 1 on the limit region", ok, elapsed, 60,
                  f"{mask.sum()} points, {violations} violations, branches {sorted(branches)}, "
                  f"min x5 {closed.min():.4f}, max |RK4 - closed| {diff:.1e}")


def rk4_length_oracle(lam, C, step=1e-5, x_cap=10.0, eps0_factor=1e-8):
    """Blow-up x of the 2x2 f-system with antidiagonal unit coupling, fixed-step RK4."""
    l1, l2 = lam

    def rhs(f):
        return np.array([-2.0 / l1 * f[0] ** 1.5 / math.sqrt(f[1]),
                         -2.0 / l2 * f[1] ** 1.5 / math.sqrt(f[0])])

    f = np.array([C, eps0_factor * C])
    x = 0.0
    while x < x_cap:
        k1 = rhs(f)
        k2 = rhs(f + 0.5 * step * k1)
        k3 = rhs(f + 0.5 * step * k2)
        k4 = rhs(f + step * k3)
        nxt = f + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(nxt)) or nxt.max() > 1e12 * C or nxt.min() <= 0:
            return x
        f, x = nxt, x + step
    return x_cap


def test_07_max_length():
    sys = build_system(L=1, lam=[1, -1], source_jacobian=[[0, 1], [1, 0]])
    t0 = time.perf_counter()
    Ls = [max_iss_length(sys, C) for C in (1, 10, 100, 1000)]
    elapsed = time.perf_counter() - t0
    oracle = rk4_length_oracle((1, -1), 1e3)
    L3 = Ls[-1]
    monotone = all(b >= a for a, b in zip(Ls, Ls[1:]))
    ok = abs(L3 - math.pi / 4) <= 0.02 and monotone
    assert record(7, "L(1e3) = pi/4 +- 0.02 and L(C) nondecreasing", ok, elapsed, 20,
                  f"L(1e3) = {L3:.5f} (RK4 1e-5 oracle {oracle:.5f}, pi/4 = {math.pi / 4:.5f}), "
                  f"nondecreasing: {monotone}")


def transport_errors(N, T=4.0, smooth_from=1.5):
    sys = build_system(L=1, lam=[1, -1])
    g = SpatialGrid.uniform(1, N)
    with warnings.catch_warnings():
        # u0 = 0 and d'(0) = 0.01 are not first-order compatible; the kink is part of the test
        warnings.simplefilter("ignore")
        tr = simulate(sys, np.zeros((2, N)), DisturbanceSpec(("0.01*sin(t)", 0)), g, T, record_every=0.02)
    x = g.points
    full = late = 0.0
    for t, s in zip(tr.times, tr.snapshots):
        e = float(np.max(np.abs(s[0] - np.where(t > x, 0.01 * np.sin(t - x), 0.0))))
        full = max(full, e)
        if t >= smooth_from:
            late = max(late, e)
    return full / 0.01, late / 0.01


def test_08_transport_exactness():
    t0 = time.perf_counter()
    e512, s512 = transport_errors(512)
    e1024, s1024 = transport_errors(1024)
    elapsed = time.perf_counter() - t0
    order = math.log2(s512 / s1024)
    ok = e512 <= 0.02 and e1024 <= 0.01 and 0.8 <= order <= 1.2
    assert record(8, "transport reproduces d1(t - x)", ok, elapsed, 30,
                  f"rel sup error {e512:.2%} at 512, {e1024:.2%} at 1024; "
                  f"observed order {order:.2f} once the start-up kink has left")


HOMOG = build_system(L=1, lam=[1, -1], boundary_jacobian=[[0, 0.5], [0.5, 0]])


def envelope_run(seed, grid):
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(3):
        amp, w, ph = rng.uniform(0, 0.02), rng.uniform(0.2, 3), rng.uniform(0, 2 * math.pi)
        terms.append(f"{amp:.8f}*sin({w:.8f}*t + {ph:.8f})")
    dist = DisturbanceSpec((" + ".join(terms), f"{rng.uniform(-0.02, 0.02):.8f}*cos(t)"), bound=0.08)
    x = grid.points
    c = rng.uniform(-0.3, 0.3, size=(2, 3))
    raw = sum(c[:, [k]] * np.sin((k + 1) * np.pi * x) for k in range(3))
    u0 = project_compatible(HOMOG, raw, dist, grid)
    return simulate(HOMOG, u0, dist, grid, 8.0, record_every=0.05, strict=True), dist


def test_09_envelope_validation():
    t0 = time.perf_counter()
    cert = certify(HOMOG)
    g = SpatialGrid.uniform(1, 257)
    train = [envelope_run(s, g) for s in range(10)]
    held = [envelope_run(100 + s, g) for s in range(10)]
    gains = fit_envelope([t for t, _ in train], [d for _, d in train])
    train_ok = all(envelope_check(t, d, gains=gains).holds for t, d in train)
    ratios = [envelope_check(t, d, gains=gains).worst_ratio for t, d in held]
    elapsed = time.perf_counter() - t0
    ok = abs(cert.theta - 0.5) < 1e-12 and gains[2] > 0 and train_ok and max(ratios) <= 1.2
    assert record(9, "fitted ISS envelope", ok, elapsed, 120,
                  f"C1 = {gains[0]:.3f}, C2 = {gains[1]:.3f}, gamma = {gains[2]:.4f}, "
                  f"training holds: {train_ok}, held-out worst ratio {max(ratios):.3f}")


def smooth_snapshot(rng, x):
    # near-affine profiles: |u| and |u_x| have flat maxima; W_p undershoots the
    # weighted sup by roughly (measure of the near-max set)^(1/2p)
    a = rng.uniform(0.5, 1.0, size=(2, 1))
    b = rng.uniform(0.005, 0.02, size=(2, 1)) * rng.choice([-1, 1], size=(2, 1))
    eps = rng.uniform(0, 1e-4, size=(2, 1))
    return a + b * x + eps * np.sin(3 * x)


def test_10_lyapunov_limit_and_decay():
    t0 = time.perf_counter()
    cert = certify(HOMOG)
    f, mu, o = cert.f, cert.mu, HOMOG.orientation
    x = f.grid.points
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        u = smooth_snapshot(rng, x)
        seq = [sum(lyapunov_w(u, f, mu, p, o, HOMOG)) for p in (4, 8, 16, 32, 64)]
        V = lyapunov_v(u, f, mu, o, HOMOG)
        worst = max(worst, abs(seq[-1] - V) / V)
    peaked = np.vstack([np.sin(np.pi * x) + 0.1, np.cos(np.pi * x)])
    V = lyapunov_v(peaked, f, mu, o, HOMOG)
    peaked_gap = abs(sum(lyapunov_w(peaked, f, mu, 64, o, HOMOG)) - V) / V
    g = SpatialGrid.uniform(1, 257)
    d = DisturbanceSpec.zero(2)
    u0 = project_compatible(HOMOG, np.vstack([0.2 * np.sin(np.pi * g.points), 0.1 * g.points]), d, g)
    from hypiss.certifier import FProfile
    fg = FProfile.constant(cert.delta ** 2, g)
    tr = simulate(HOMOG, u0, d, g, 8.0, record_every=0.1, strict=True,
                  lyapunov={"f": fg, "mu": mu, "p": [64]})
    W = tr.lyapunov["W"][64].sum(axis=1)
    C_W, rate = fit_decay(tr.times, W)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and rate > 0 and C_W <= 1.1
    assert record(10, "W_p -> V and W decays", ok, elapsed, 30,
                  f"max |W_64 - V| / V = {worst:.2%} (sin-type profile: {peaked_gap:.2%}), decay fit C = {C_W:.3f}, rate {rate:.3f}")


def test_11_certifier_matches_planar():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    agree = borderline = disagree = 0
    for _ in range(100):
        sign = rng.choice([-1.0, 1.0], size=4)
        a, b = sign[:2] * rng.uniform(0.05, 1.5, size=2)
        L1, L2 = rng.uniform(0.5, 2.0), -rng.uniform(0.5, 2.0)
        k1, k2 = sign[2:] * rng.uniform(0, 1.2, size=2)
        p = PlanarParams(a, b, L1, L2, k1, k2)
        ours = check_planar(p)
        try:
            cert = certify(p.to_system(1.0))
            held, margin = True, cert.boundary.margin
        except CertificationFailure as exc:
            held, margin = False, exc.boundary_margin
        if held == ours.holds:
            agree += 1
        elif abs(margin) <= 1e-3 or abs(ours.margin) <= 1e-3:
            borderline += 1
        else:
            disagree += 1
    elapsed = time.perf_counter() - t0
    assert record(11, "certify agrees with the 2x2 chain", disagree == 0, elapsed, 120,
                  f"{agree} agree, {borderline} borderline, {disagree} disagree")
