import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contactclust.contacts import (DEFAULT_PARTITION, FIVE_YEAR, AgePartition, AgeStructure, ContactMatrix,
                                   PopulationVector, aggregate_matrix, aggregate_population, sum_settings,
                                   symmetrize)
from contactclust.epi_model import (COMPARTMENTS, INFECTED, EpiParams, EpiState, aggregate_params, build_ngm,
                                    calibrate_beta, derivative, load_profile, power_iteration, rk4_step,
                                    simulate, spectral_radius, standardize_contacts)
from contactclust.errors import DegenerateInputError, InputError
from contactclust.io import DATA_DIR, read_contact_csv, read_population_csv
from oracles import age_space_ngm, charpoly_spectral_radius

CALIB_TOL = 1e-9
CONSERVATION_TOL = 1e-8
LINEARIZATION_TOL = 1e-5

TABLE2 = {
    "theta": [0.95, 0.95, 0.9, 0.85, 0.85, 0.8],
    "eta": [0.00195, 0.00195, 0.0057, 0.0057, 0.0057, 0.038],
    "zeta": [0.1766, 0.1766, 0.1766, 0.3192, 0.3192, 0.3731],
    "h": [0.0205, 0.0205, 0.0205, 0.1755, 0.1755, 0.253],
}


def structure(n):
    return AgeStructure(tuple(f"g{i}" for i in range(n)), tuple(range(n)))


def cm(values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return ContactMatrix("X", "full", structure(values.shape[0]), values)


def pv(counts):
    return PopulationVector("X", structure(len(counts)), counts)


def params(n, **kw):
    base = dict(theta=np.full(n, 0.8), eta=np.full(n, 0.05), zeta=np.full(n, 0.3), h=np.full(n, 0.1))
    base.update(kw)
    return EpiParams(**base)


@pytest.fixture(scope="module")
def kenya6():
    pop16 = read_population_csv(DATA_DIR / "population.csv", FIVE_YEAR)["KEN"]
    mats = [read_contact_csv(DATA_DIR / "contacts" / f"KEN_{s}.csv", "KEN", s, FIVE_YEAR)
            for s in ("home", "school", "work", "other")]
    full = symmetrize(sum_settings(*mats), pop16)
    mu = aggregate_matrix(full, pop16, DEFAULT_PARTITION)
    pop = aggregate_population(pop16, DEFAULT_PARTITION)
    p = load_profile().params_for(pop16, DEFAULT_PARTITION)
    return mu, pop, p


# -- parameters -------------------------------------------------------------

def test_aggregate_params_examples():
    part = AgePartition(((0, 1),))
    assert aggregate_params([0.1, 0.3], pv([100, 300]), part)[0] == pytest.approx(0.25)
    rng = np.random.default_rng(0)
    pop = pv(rng.random(16) * 1e6 + 1)
    assert np.allclose(aggregate_params(np.full(16, 0.7), pop, DEFAULT_PARTITION), 0.7, rtol=1e-14)


def test_aggregate_params_zero_population_group():
    pop = PopulationVector("X", structure(3), [0.0, 0.0, 5.0])
    with pytest.raises(DegenerateInputError):
        aggregate_params([0.1, 0.2, 0.3], pop, AgePartition(((0, 1), (2,))))


@given(arrays(np.float64, 16, elements=st.floats(0, 1)), arrays(np.float64, 16, elements=st.floats(1, 1e7)))
@settings(max_examples=100, deadline=None)
def test_aggregate_params_within_group_range(p, counts):
    out = aggregate_params(p, PopulationVector("X", FIVE_YEAR, counts), DEFAULT_PARTITION)
    for v, g in zip(out, DEFAULT_PARTITION.groups):
        assert p[list(g)].min() - 1e-12 <= v <= p[list(g)].max() + 1e-12


def test_profile_defaults_reproduce_table2(kenya6):
    _, _, p = kenya6
    for name, expected in TABLE2.items():
        assert np.allclose(getattr(p, name), expected, rtol=0, atol=1e-12), name
    prof = load_profile()
    assert prof.target_r0 == 3.68
    assert p.phi_l == 0.4 and p.phi_p == pytest.approx(1 / 3) and p.inf_a == 0.75
    assert p.delta_a == p.delta_s == 0.25 and p.delta_h == p.delta_c == 0.1 and p.delta_cr == 0.125


def test_profile_overrides(tmp_path):
    prof = load_profile(overrides={"phi_l": 0.5})
    assert prof.rates["phi_l"] == 0.5
    bad = tmp_path / "bad.profile"
    bad.write_text("rates: {phi_x: 1}\nage_dependent: {}\n")
    with pytest.raises(InputError):
        load_profile(bad)


def test_params_validation():
    with pytest.raises(InputError):
        params(2, theta=np.array([0.5, 1.5]))
    with pytest.raises(InputError):
        EpiParams(theta=[0.5], eta=[0.1], zeta=[0.1], h=[0.1], phi_l=0)
    with pytest.raises(InputError):
        EpiParams(theta=[0.5, 0.5], eta=[0.1], zeta=[0.1], h=[0.1])


# -- derivative -------------------------------------------------------------

def test_disease_free_state_is_equilibrium():
    pop = pv([100.0, 200.0, 300.0])
    d = derivative(EpiState.disease_free(pop), params(3, beta0=0.3), cm(np.ones((3, 3))), pop)
    assert np.all(d == 0)


def test_no_transmission_case():
    pop = pv([1000.0])
    rng = np.random.default_rng(1)
    x = rng.random((15, 1)) * 10
    x[0] = 1000 - x[1:].sum()
    d = derivative(EpiState(x), params(1, beta0=0.0), cm([[3.0]]), pop)
    assert d[0, 0] == 0
    assert d[1, 0] == pytest.approx(-2 * 0.4 * x[1, 0])
    assert d[3, 0] != 0


def test_single_age_hand_evaluation():
    # every compartment populated so every term of every equation is exercised
    W = 1000.0
    S, L1, L2, Ip, Ia1, Ia2, Ia3, Is1, Is2, Is3, Ih, Ic, Icr, R, D = (
        900.0, 10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 40.0, 2.0)
    th, eta, zeta, h = 0.8, 0.05, 0.3, 0.1
    pl, pp, da, ds, dh, dc, dcr, ia, b0 = 0.4, 1 / 3, 0.25, 0.25, 0.1, 0.1, 0.125, 0.75, 0.05
    foi = b0 * S / W * 1.0 * (Ip + ia * (Ia1 + Ia2 + Ia3) + Is1 + Is2 + Is3)
    expected = [
        -foi,
        foi - 2 * pl * L1,
        2 * pl * L1 - 2 * pl * L2,
        2 * pl * L2 - pp * Ip,
        th * pp * Ip - 3 * da * Ia1,
        3 * da * Ia1 - 3 * da * Ia2,
        3 * da * Ia2 - 3 * da * Ia3,
        (1 - th) * pp * Ip - 3 * ds * Is1,
        3 * ds * Is1 - 3 * ds * Is2,
        3 * ds * Is2 - 3 * ds * Is3,
        h * (1 - zeta) * 3 * ds * Is3 - dh * Ih,
        h * zeta * 3 * ds * Is3 - dc * Ic,
        (1 - eta) * dc * Ic - dcr * Icr,
        3 * da * Ia3 + (1 - h) * 3 * ds * Is3 + dh * Ih + dcr * Icr,
        eta * dc * Ic,
    ]
    x = np.array([[S, L1, L2, Ip, Ia1, Ia2, Ia3, Is1, Is2, Is3, Ih, Ic, Icr, R, D]]).T
    p = EpiParams([th], [eta], [zeta], [h], pl, pp, da, ds, dh, dc, dcr, ia, b0)
    got = derivative(EpiState(x), p, cm([[1.0]]), pv([W]))[:, 0]
    assert np.allclose(got, expected, rtol=1e-14, atol=1e-15)


def test_force_of_infection_uses_transposed_contacts():
    # infection of group 0 driven by mu[1, 0] * I_1
    mu = np.array([[0.0, 0.0], [2.0, 0.0]])
    pop = pv([100.0, 100.0])
    x = EpiState.disease_free(pop).values
    x[0, 1] -= 1
    x[COMPARTMENTS.index("Ip"), 1] = 1
    d = derivative(EpiState(x), params(2, beta0=1.0), cm(mu), pop)
    assert d[1, 0] == pytest.approx(2.0) and d[1, 1] == 0


def test_negative_state_rejected():
    pop = pv([10.0])
    x = EpiState.disease_free(pop).values
    x[1, 0] = -1
    with pytest.raises(InputError):
        derivative(EpiState(x), params(1), cm([[1.0]]), pop)


@given(st.integers(1, 5), st.data())
@settings(max_examples=100, deadline=None)
def test_closed_system_conservation(n, data):
    x = data.draw(arrays(np.float64, (15, n), elements=st.floats(0, 1e4)))
    mu = data.draw(arrays(np.float64, (n, n), elements=st.floats(0, 20)))
    W = x.sum(axis=0) + 1.0
    p = params(n, beta0=data.draw(st.floats(0, 2)))
    d = derivative(EpiState(x), p, cm(mu), pv(W))
    assert np.all(np.abs(d.sum(axis=0)) <= 1e-12 * max(1.0, np.abs(d).max()))


# -- simulation -------------------------------------------------------------

def test_simulate_zero_infected_constant(kenya6):
    mu, pop, p = kenya6
    traj = simulate(EpiState.disease_free(pop), p.with_beta(0.05), mu, pop, horizon=50, step=5)
    assert np.all(traj.states == traj.states[0])
    assert traj.t[0] == 0 and traj.t[-1] == 50


def test_simulate_conservation_and_subcritical_decay(kenya6):
    mu, pop, p = kenya6
    beta = calibrate_beta(mu, p, pop, 3.68) * 0.2
    init = EpiState.seeded(pop, "Ip", 10.0)
    traj = simulate(init, p.with_beta(beta), mu, pop, horizon=400, step=1)
    totals = traj.totals_by_age()
    assert np.all(np.abs(totals / pop.counts - 1) <= CONSERVATION_TOL)
    infected = traj.states[:, 1:13, :].sum(axis=(1, 2))
    peak = int(np.argmax(infected))
    assert np.all(np.diff(infected[peak:]) <= 1e-12)
    assert infected[-1] < 1e-6 * infected[peak]


def test_rk4_fallback_agrees_with_adaptive(kenya6):
    mu, pop, p = kenya6
    p = p.with_beta(calibrate_beta(mu, p, pop, 2.0))
    init = EpiState.seeded(pop, "Ip", 5.0)
    a = simulate(init, p, mu, pop, horizon=60, step=1.0)
    b = simulate(init, p, mu, pop, horizon=60, step=0.05, method="rk4")
    idx = np.searchsorted(b.t, a.t)
    assert np.allclose(a.states, b.states[idx], rtol=1e-5, atol=1e-4)
    assert np.all(np.abs(b.totals_by_age() / pop.counts - 1) <= CONSERVATION_TOL)


def test_simulate_preconditions(kenya6):
    mu, pop, p = kenya6
    with pytest.raises(InputError):
        simulate(EpiState.disease_free(pop), p, mu, pop, horizon=0)
    with pytest.raises(InputError):
        simulate(EpiState.disease_free(pop), p, mu, pop, horizon=10, step=-1)


def test_trajectory_long_format(kenya6):
    mu, pop, p = kenya6
    traj = simulate(EpiState.seeded(pop), p.with_beta(0.01), mu, pop, horizon=2, step=1)
    df = traj.to_frame()
    assert list(df.columns) == ["t", "age_group", "compartment", "value"]
    assert len(df) == 3 * 15 * 6
    row = df[(df.t == 1) & (df.age_group == "25-64") & (df.compartment == "Ip")]["value"].item()
    assert row == traj.states[1, COMPARTMENTS.index("Ip"), 4]


# -- NGM --------------------------------------------------------------------

def test_ngm_layout():
    p = params(6)
    ngm = build_ngm(p, cm(np.ones((6, 6))), pv(np.ones(6)))
    assert ngm.transmission.shape == (54, 54)
    nz_rows = np.flatnonzero(np.abs(ngm.transmission).sum(axis=1))
    assert set(nz_rows) <= set(range(6))            # L1 block only
    assert np.all(ngm.kernel() >= -1e-15)


def test_ngm_no_contacts():
    ngm = build_ngm(params(1), cm([[0.0]]), pv([10.0]))
    assert np.all(ngm.transmission == 0) and spectral_radius(ngm) == 0


def test_ngm_single_group_unit_rates():
    p = EpiParams([1.0], [0.0], [0.0], [0.0], 1, 1, 1, 1, 1, 1, 1, inf_a=1.0)
    ngm = build_ngm(p, cm([[1.0]]), pv([1000.0]))
    dense = -ngm.transmission @ np.linalg.inv(ngm.transition)
    # one day presymptomatic plus three asymptomatic stages of 1/3 day each
    assert spectral_radius(ngm) == pytest.approx(2.0, rel=1e-12)
    assert spectral_radius(dense) == pytest.approx(2.0, rel=1e-12)


def test_ngm_decoupled_blocks():
    mu = np.zeros((4, 4))
    mu[:2, :2] = [[1.0, 2.0], [0.5, 1.0]]
    mu[2:, 2:] = [[3.0, 0.1], [0.2, 2.0]]
    theta = np.array([0.9, 0.8, 0.7, 0.6])
    p = params(4, theta=theta)
    W = np.array([10.0, 20.0, 30.0, 40.0])
    full = spectral_radius(build_ngm(p, cm(mu), pv(W)))
    r1 = spectral_radius(build_ngm(params(2, theta=theta[:2]), cm(mu[:2, :2]), pv(W[:2])))
    r2 = spectral_radius(build_ngm(params(2, theta=theta[2:]), cm(mu[2:, 2:]), pv(W[2:])))
    assert full == pytest.approx(max(r1, r2), rel=1e-12)
    K = build_ngm(p, cm(mu), pv(W)).kernel()
    ages = np.arange(9 * 4) % 4
    assert np.all(K[np.ix_(ages < 2, ages >= 2)] == 0)


def test_ngm_matches_age_space_oracle(kenya6):
    mu, pop, p = kenya6
    rho = spectral_radius(build_ngm(p, mu, pop))
    K = age_space_ngm(mu.values, p.theta, p.phi_p, p.delta_a, p.delta_s, p.inf_a)
    assert rho == pytest.approx(power_iteration(K), rel=1e-10)


def _jacobian_fd(p, mu, pop, comps):
    """Central-difference Jacobian of the derivative over ``comps`` at the disease-free state."""
    n = pop.counts.size
    rows = [COMPARTMENTS.index(c) for c in comps]
    x0 = EpiState.disease_free(pop).values
    J = np.zeros((len(rows) * n, len(rows) * n))
    eps = 1e-3
    for a, c in enumerate(rows):
        for i in range(n):
            xp, xm = x0.copy(), x0.copy()
            xp[c, i] += eps
            xm[c, i] += 2 * eps  # keep the state nonnegative; one-sided pair around x0 + eps
            fp = derivative(EpiState(xp), p, mu, pop)[rows].ravel()
            fm = derivative(EpiState(xm), p, mu, pop)[rows].ravel()
            f0 = derivative(EpiState(x0), p, mu, pop)[rows].ravel()
            J[:, a * n + i] = (-3 * f0 + 4 * fp - fm) / (2 * eps)
    return J


def test_excluding_hospital_compartments_keeps_radius(kenya6):
    mu, pop, p = kenya6
    ext = INFECTED + ("Ih", "Ic", "Icr")
    F = _jacobian_fd(p.with_beta(1.0), mu, pop, ext) - _jacobian_fd(p.with_beta(0.0), mu, pop, ext)
    V = _jacobian_fd(p.with_beta(0.0), mu, pop, ext)
    rho_ext = spectral_radius(-F @ np.linalg.inv(V))
    assert rho_ext == pytest.approx(spectral_radius(build_ngm(p, mu, pop)), rel=1e-6)


def test_derivative_linearization_matches_ngm(kenya6):
    mu, pop, p = kenya6
    p = p.with_beta(calibrate_beta(mu, p, pop, 3.68))
    ngm = build_ngm(p, mu, pop)
    J = _jacobian_fd(p, mu, pop, INFECTED)
    assert np.max(np.abs(J - (p.beta0 * ngm.transmission + ngm.transition))) < LINEARIZATION_TOL


def test_one_step_map_linearization(kenya6):
    mu, pop, p = kenya6
    p = p.with_beta(calibrate_beta(mu, p, pop, 3.68))
    ngm = build_ngm(p, mu, pop)
    target = p.beta0 * ngm.transmission + ngm.transition
    n, rows = 6, [COMPARTMENTS.index(c) for c in INFECTED]
    dt, eps = 1e-6, 1.0
    x0 = EpiState.disease_free(pop).values
    J = np.zeros_like(target)
    for a, c in enumerate(rows):
        for i in range(n):
            xp = x0.copy()
            xp[c, i] += eps
            xp[0, i] -= eps
            step = rk4_step(xp, dt, p, mu, pop)
            J[:, a * n + i] = (step[rows] - xp[rows]).ravel() / (dt * eps)
    assert np.max(np.abs(J - target)) < LINEARIZATION_TOL


# -- spectral radius --------------------------------------------------------

def test_spectral_radius_examples():
    assert spectral_radius(np.diag([2.0, 3.0])) == pytest.approx(3.0)
    assert spectral_radius(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        A = rng.random((5, 5))
        assert spectral_radius(A) == pytest.approx(charpoly_spectral_radius(A), rel=1e-9)
        assert power_iteration(A) == pytest.approx(spectral_radius(A), rel=1e-9)


def test_power_iteration_handles_periodic_matrix():
    assert power_iteration(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0, rel=1e-12)


rates = st.floats(0.05, 2.0)


@given(st.integers(1, 4), st.data())
@settings(max_examples=100, deadline=None)
def test_ngm_kernel_nonnegative(n, data):
    theta = data.draw(arrays(np.float64, n, elements=st.floats(0, 1)))
    mu = data.draw(arrays(np.float64, (n, n), elements=st.floats(0, 20)))
    p = EpiParams(theta, np.zeros(n), np.zeros(n), np.zeros(n), *[data.draw(rates) for _ in range(7)],
                  inf_a=data.draw(st.floats(0, 1)))
    K = build_ngm(p, cm(mu), pv(np.ones(n))).kernel()
    assert np.all(K >= -1e-12 * max(1.0, np.abs(K).max()))


def test_radius_monotone_in_contacts():
    rng = np.random.default_rng(6)
    p = params(4, theta=rng.random(4))
    pop = pv(np.ones(4))
    for _ in range(50):
        mu = rng.random((4, 4)) * 5
        base = spectral_radius(build_ngm(p, cm(mu), pop))
        i, j = rng.integers(0, 4, 2)
        mu2 = mu.copy()
        mu2[i, j] += rng.random() * 3
        assert spectral_radius(build_ngm(p, cm(mu2), pop)) >= base * (1 - 1e-12)


# -- calibration ------------------------------------------------------------

def test_calibration_fixed_point_random():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = rng.integers(1, 7)
        W = rng.random(n) * 1e6 + 1
        mu = symmetrize(cm(rng.random((n, n)) * 10), pv(W))
        p = params(n, theta=rng.random(n))
        beta = calibrate_beta(mu, p, pv(W), 3.68)
        rho = spectral_radius(build_ngm(p.with_beta(beta), mu, pv(W)))
        assert beta * rho == pytest.approx(3.68, rel=CALIB_TOL)


def test_calibration_scaling_and_bounds(kenya6):
    mu, pop, p = kenya6
    b1 = calibrate_beta(mu, p, pop, 3.68)
    b2 = calibrate_beta(ContactMatrix(mu.country, mu.setting, mu.ages, 2 * mu.values), p, pop, 3.68)
    assert b2 == pytest.approx(b1 / 2, rel=1e-12)
    with pytest.raises(InputError):
        calibrate_beta(mu, p, pop, 0.0)
    with pytest.raises(DegenerateInputError):
        calibrate_beta(cm(np.zeros((6, 6))), p, pop, 3.68)


def test_calibration_kenya_self_consistent(kenya6):
    mu, pop, p = kenya6
    beta = calibrate_beta(mu, p, pop, 3.68)
    K = age_space_ngm(mu.values, p.theta, p.phi_p, p.delta_a, p.delta_s, p.inf_a)
    assert beta * power_iteration(K) == pytest.approx(3.68, rel=CALIB_TOL)


def test_standardize_contacts(kenya6):
    mu, pop, p = kenya6
    assert np.array_equal(standardize_contacts(1.0, mu).values, mu.values)
    z = standardize_contacts(0.0, mu)
    assert np.all(z.values == 0) and z.standardized and z.setting == "full"
    with pytest.raises(InputError):
        standardize_contacts(-1.0, mu)
    S = standardize_contacts(calibrate_beta(mu, p, pop, 3.68), mu)
    assert spectral_radius(build_ngm(p.with_beta(1.0), S, pop)) == pytest.approx(3.68, rel=CALIB_TOL)
