"""Partition recursions vs enumeration, free energy, critical points."""

import math

import numpy as np
import pytest

from sparsepin import (BracketError, DisorderSpec, annealed_critical_point,
                       brute_force_partition, free_energy_estimate, free_partition,
                       grand_canonical, homogeneous_free_energy, kernel_mean,
                       log_mgf, make_kernel, pinned_recursion,
                       quenched_critical_point_estimate, relevance_classifier,
                       sample_disorder)


def random_kernel(rng):
    n_max = int(rng.integers(1, 5))
    kind = rng.choice(["power_law", "geometric", "dirac"])
    if kind == "power_law":
        return make_kernel("power_law", alpha=float(rng.uniform(0, 2)), n_max=n_max)
    if kind == "geometric":
        return make_kernel("geometric", q=float(rng.uniform(0.2, 0.8)), n_max=n_max)
    return make_kernel("dirac", step=n_max)


# ---------------------------------------------------------------------------
# recursions vs the enumeration oracle

def test_pinned_single_step():
    k = make_kernel("power_law", alpha=0.7, n_max=3)
    omega = np.array([0.4, -1.0, 0.2])
    t = pinned_recursion(omega, k, 1.3, -0.2, 3)
    assert math.exp(t.log_zc[1]) == pytest.approx(
        float(k.weights[0]) * math.exp(1.3 * 0.4 - 0.2), rel=1e-13)


def test_dirac_unit_kernel_trivial():
    k = make_kernel("dirac", step=1)
    t = free_partition(pinned_recursion(np.zeros(20), k, 0.0, 0.0, 20))
    assert np.allclose(t.log_zc, 0.0, atol=1e-13)
    assert np.allclose(t.log_z, t.log_zc, atol=1e-13)


def test_free_is_one_without_energy():
    k = make_kernel("power_law", alpha=0.9, n_max=5)
    t = free_partition(pinned_recursion(np.zeros(60), k, 0.0, 0.0, 60))
    assert np.allclose(t.log_z, 0.0, atol=1e-12)


def test_recursions_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(10):
        kern = random_kernel(rng)
        beta, h = float(rng.uniform(0, 1.5)), float(rng.uniform(-2, 2))
        omega = rng.normal(size=12)
        table = free_partition(pinned_recursion(omega, kern, beta, h, 12))
        for n in range(13):
            z_free, z_pin = brute_force_partition(omega, kern, beta, h, n)
            assert math.exp(table.log_z[n]) == pytest.approx(z_free, rel=1e-10)
            if z_pin > 0:
                assert math.exp(table.log_zc[n]) == pytest.approx(z_pin, rel=1e-10)
            else:
                assert table.log_zc[n] == -math.inf


def test_brute_force_edges():
    k = make_kernel("power_law", alpha=1.0, n_max=2)
    omega = np.array([0.3])
    z1, zc1 = brute_force_partition(omega, k, 1.0, -0.5, 1)
    assert z1 == pytest.approx(0.8 * math.exp(0.3 - 0.5) + 0.2, rel=1e-14)
    assert zc1 == pytest.approx(0.8 * math.exp(0.3 - 0.5), rel=1e-14)
    assert brute_force_partition(np.empty(0), k, 1.0, 2.0, 0) == (1.0, 1.0)
    zf, _ = brute_force_partition(np.zeros(9), k, 0.0, 0.0, 9)
    assert zf == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(ValueError):
        brute_force_partition(np.zeros(20), k, 0.0, 0.0, 15)


def test_recursion_input_validation():
    k = make_kernel("dirac", step=1)
    with pytest.raises(ValueError):
        pinned_recursion(np.zeros(3), k, 0.0, 0.0, 5)
    with pytest.raises(ValueError):
        grand_canonical(pinned_recursion(np.zeros(3), k, 0.0, 0.0, 3), 0.0)


# ---------------------------------------------------------------------------
# grand canonical series

def test_grand_canonical_large_f_keeps_origin_term():
    k = make_kernel("power_law", alpha=1.0, n_max=4)
    omega = sample_disorder(DisorderSpec("gaussian"), 200, seed=3)
    t = free_partition(pinned_recursion(omega, k, 1.0, 0.5, 200))
    rep = grand_canonical(t, 50.0)
    assert rep.partial_sum == pytest.approx(1.0, abs=1e-12)
    assert rep.verdict == "converged"


def test_grand_canonical_saturates_at_tau_mean():
    k = make_kernel("power_law", alpha=0.7, n_max=24)
    t = free_partition(pinned_recursion(np.zeros(96), k, 0.0, -1000.0, 96))
    rep = grand_canonical(t, 0.0)
    assert rep.verdict == "converged"
    assert rep.partial_sum == pytest.approx(kernel_mean(k), abs=1e-11)
    assert rep.tail_bound == pytest.approx(0.0, abs=1e-200)


def test_grand_canonical_divergence_rate_matches_free_energy():
    k = make_kernel("power_law", alpha=1.0, n_max=8)
    t = free_partition(pinned_recursion(np.zeros(1500), k, 0.0, 1.0, 1500))
    rep = grand_canonical(t, 0.0)
    assert rep.verdict == "diverging"
    target = homogeneous_free_energy(k, 1.0).free_energy
    assert rep.growth_rate == pytest.approx(target, rel=0.05)


def test_grand_canonical_monotone_in_f():
    k = make_kernel("geometric", q=0.4, n_max=10)
    omega = sample_disorder(DisorderSpec("rademacher"), 400, seed=9)
    t = free_partition(pinned_recursion(omega, k, 0.8, -0.3, 400))
    sums = [grand_canonical(t, f).partial_sum for f in (0.2, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(sums, sums[1:]))
    # term-wise: every n >= 1 term strictly shrinks when f grows
    terms_02 = t.log_z - 0.2 * np.arange(401)
    terms_05 = t.log_z - 0.5 * np.arange(401)
    assert np.all(terms_05[1:] < terms_02[1:])
    assert terms_05[0] == terms_02[0]


def test_last_renewal_identity_internal():
    k = make_kernel("power_law", alpha=0.8, n_max=8)
    omega = sample_disorder(DisorderSpec("gaussian"), 2000, seed=13)
    t = free_partition(pinned_recursion(omega, k, 0.7, -0.3, 2000))
    for n in range(2001):
        k_lo = max(0, n - k.n_max + 1)
        shift = float(np.max(t.log_zc[k_lo : n + 1]))
        terms = [math.exp(t.log_zc[j] - shift) * float(k.tail[n - j])
                 for j in range(k_lo, n + 1)]
        ref = math.log(math.fsum(terms)) + shift
        assert t.log_z[n] == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_tau_mean_factorization_at_zero_drift():
    # convergent configuration: free sum = E(tau_1) * pinned sum
    k = make_kernel("power_law", alpha=1.0, n_max=6)
    omega = sample_disorder(DisorderSpec("gaussian"), 3000, seed=5)
    t = free_partition(pinned_recursion(omega, k, 0.7, -1.5, 3000))
    s_free = grand_canonical(t, 0.0)
    s_pin = grand_canonical(t, 0.0, pinned=True)
    assert s_free.verdict == "converged" and s_pin.verdict == "converged"
    assert s_free.partial_sum / s_pin.partial_sum == pytest.approx(
        kernel_mean(k), rel=1e-8)


# ---------------------------------------------------------------------------
# free energy and critical points

def test_free_energy_zero_below_criticality():
    k = make_kernel("power_law", alpha=1.0, n_max=8)
    for h in (0.0, -0.4):
        est = free_energy_estimate(np.zeros(20000), k, 0.0, h, 20000)
        assert est.f_hat <= 1e-2
        assert est.f_hat >= 0.0


def test_free_energy_matches_homogeneous_solution():
    k = make_kernel("power_law", alpha=1.0, n_max=8)
    h = 0.4
    est = free_energy_estimate(np.zeros(20000), k, 0.0, h, 20000)
    target = homogeneous_free_energy(k, h).free_energy
    assert est.f_hat == pytest.approx(target, abs=1e-3)
    assert est.raw >= -est.window_spread


def test_free_energy_jensen_annealed_bound():
    k = make_kernel("power_law", alpha=1.0, n_max=8)
    spec = DisorderSpec("gaussian")
    beta, h = 1.0, 0.2
    omega = sample_disorder(spec, 20000, seed=31)
    est = free_energy_estimate(omega, k, beta, h, 20000)
    annealed = homogeneous_free_energy(k, h + log_mgf(spec, beta)).free_energy
    assert est.f_hat <= annealed + 1e-2


def test_free_energy_monotone_in_h():
    k = make_kernel("power_law", alpha=1.0, n_max=8)
    omega = sample_disorder(DisorderSpec("gaussian"), 8000, seed=32)
    hs = [-0.5, -0.1, 0.2, 0.6, 1.2]
    ests = [free_energy_estimate(omega, k, 0.8, h, 8000) for h in hs]
    tol = max(e.window_spread for e in ests)
    for a, b in zip(ests, ests[1:]):
        assert b.f_hat >= a.f_hat - tol


def test_homogeneous_free_energy_closed_form():
    k = make_kernel("geometric", q=0.5, n_max=64)
    sol = homogeneous_free_energy(k, math.log(2.0))
    assert sol.free_energy == pytest.approx(math.log(1.5), abs=1e-11)
    assert sol.residual <= 1e-10
    assert homogeneous_free_energy(k, 0.0).free_energy == 0.0
    assert homogeneous_free_energy(k, -3.0).free_energy == 0.0


def test_homogeneous_untruncated_geometric_formula():
    # e^{-F} = e^{-h} / ((1-q) + q e^{-h}) for the untruncated geometric law
    q, h = 0.37, 0.9
    k = make_kernel("geometric", q=q, n_max=200)
    target = -math.log(math.exp(-h) / ((1 - q) + q * math.exp(-h)))
    assert homogeneous_free_energy(k, h).free_energy == pytest.approx(target, abs=1e-10)


def test_annealed_critical_point_values():
    assert annealed_critical_point(DisorderSpec("gaussian"), 0.0) == 0.0
    assert annealed_critical_point(DisorderSpec("gaussian"), 1.0) == pytest.approx(-0.5)
    assert annealed_critical_point(DisorderSpec("rademacher"), 1.0) == pytest.approx(
        -math.log(math.cosh(1.0)))


def test_quenched_critical_point_smoke():
    k = make_kernel("power_law", alpha=1.0, n_max=20)
    est = quenched_critical_point_estimate(DisorderSpec("gaussian"), k, 0.0,
                                           6000, 2, 0.02, seed=3)
    assert abs(est.h_hat) <= 0.05
    assert est.bracket[0] <= est.h_hat <= est.bracket[1]


def test_quenched_critical_point_bracket_failure():
    # at tiny n the noise threshold is never cleared and the search range
    # is exhausted
    k = make_kernel("power_law", alpha=1.0, n_max=4)
    with pytest.raises(BracketError) as err:
        quenched_critical_point_estimate(DisorderSpec("gaussian"), k, 0.5,
                                         10, 2, 0.02, seed=3)
    assert err.value.scanned[1] > err.value.scanned[0]


def test_relevance_classifier():
    assert relevance_classifier(0.3) == "irrelevant"
    assert relevance_classifier(0.6) == "relevant"
    assert relevance_classifier(0.5) == "relevant"
    with pytest.raises(ValueError):
        relevance_classifier(-0.1)
