import math

import numpy as np
import pytest

import langevin_lab as ll


def test_gaussian_potential():
    u = ll.gaussian(2)
    x = np.array([1.0, -2.0])
    assert u.dim == 2
    assert u.value(x) == pytest.approx(2.5)
    np.testing.assert_allclose(u.gradient(x), x)
    np.testing.assert_allclose(u.hessian(x), np.eye(2))


@pytest.mark.parametrize("variant", ll.VARIANTS)
def test_builtin_dynamics_are_stationary(variant):
    params = {
        "underdamped": {"gamma": 4.0},
        "highorder": {"gamma": 20.0, "alpha": 15.0},
        "hfhr": {"alpha": 30.0, "beta": 1.0},
    }.get(variant, {})
    mirror = ll.quartic_mirror(1, 0.1) if variant == "mirror" else None
    dyn = ll.dynamics(variant, ll.double_well(1), params, mirror=mirror, j_seed=3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = rng.uniform(-2.0, 2.0, size=dyn.n)
        assert abs(dyn.stationarity_residual(z)) < 1e-4
        # f = -(D + Q) grad H + Gamma, with Gamma = 0 away from the mirror
        if variant != "mirror":
            f = -(dyn.D(z) + dyn.Q(z)) @ dyn.grad_H(z)
            np.testing.assert_allclose(dyn.drift(z), f, atol=1e-10)


def test_unknown_variant_is_rejected():
    with pytest.raises(ValueError):
        ll.dynamics("langevin-ish", ll.gaussian(1))


def test_ensemble_recovers_gaussian_moments():
    dyn = ll.dynamics("overdamped", ll.gaussian(1))
    s = ll.run_ensemble(dyn, eta=0.01, n_steps=50000, burn_in=5000, n_chains=4, seed=7)
    assert abs(s["theta_mean"][0]) < 0.1
    assert s["theta_covariance"][0][0] == pytest.approx(1.0, abs=0.15)
    again = ll.run_ensemble(dyn, eta=0.01, n_steps=50000, burn_in=5000, n_chains=4, seed=7, threads=1)
    assert again == s


def test_divergence_raises():
    dyn = ll.dynamics("overdamped", ll.gaussian(1))
    with pytest.raises(ll.NumericError):
        ll.run_ensemble(dyn, eta=2.5, n_steps=1000)


def test_overdamped_shift_rate_matches_closed_form():
    dyn = ll.dynamics("overdamped", ll.gaussian(1))
    r = ll.shift_rate(dyn, lo=-10.0, hi=10.0, points=801, coord=0, shift=0.5)
    assert r["antisymmetric"] == pytest.approx(0.0, abs=1e-12)
    assert r["total"] == pytest.approx(0.5**2 / 4.0, rel=1e-2)


def test_hfhr_beats_expanded_overdamped():
    rep = ll.compare_rates(
        "hfhr", ll.gaussian(1), {"alpha": 1.5, "beta": 1.5}, lo=-7.0, hi=7.0, points=61, count=3, seed=5
    )
    assert rep["status"] == "pass"
    assert all(e["margin"] >= 0.0 for e in rep["entries"])


def test_hfhr_lyapunov_bound():
    rep = ll.lyapunov_bound("hfhr", ll.gaussian(1), {"alpha": 1.0, "beta": 1.0, "a": 0.25}, -5.0, 5.0, 41)
    assert rep["bound"]["pass"]


def test_blr_map_and_sampler():
    data, w_true = ll.synthetic_blr(400, 3, seed=2)
    assert data.cols == 4 and w_true.shape == (3,)
    train, test = ll.split(data, 0.8, seed=1, standardize=False)
    w_map, _, grad_norm = ll.map_estimate(train, 10.0)
    assert grad_norm < 1e-6
    acc_map = ll.accuracy(w_map, test)
    assert acc_map > 0.8
    run = ll.blr_experiment("hfhr", train, test, n_steps=4000, eval_every=1000, seed=3, running_mean=True)
    assert not run["diverged"]
    assert run["steps"] == [1000, 2000, 3000, 4000]
    assert math.isfinite(run["accuracy"][-1])
    assert run["accuracy"][-1] >= acc_map - 0.05


def test_missing_wdbc_file():
    with pytest.raises(ll.DataError):
        ll.load_wdbc("/nonexistent/wdbc.data")
