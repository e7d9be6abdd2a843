"""Linear unmixing against constructed mixtures and a scipy oracle."""

import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from specwb import FitError, GridError, SelectionError, Speclib, unmix


def endmember_lib(rng, m=3, bands=30):
    wl = np.linspace(400, 2400, bands)
    e = rng.uniform(0.05, 0.9, (m, bands))
    names = [f"mat{k}" for k in range(m)]
    return Speclib(e, wl, si={"name": names}), wl


class TestUnmix:
    def test_pure_pixel_recovery_full(self, rng):
        em, wl = endmember_lib(rng)
        s = Speclib(em.values[1].reshape(1, -1), wl)
        res = unmix(s, em, constraints="full")
        assert np.allclose(res.abundances[0], [0, 1, 0], atol=1e-10)
        assert res.rmse[0] <= 1e-10

    def test_constructed_mixture_sum_to_one(self, rng):
        em, wl = endmember_lib(rng, m=2)
        mix = 0.3 * em.values[0] + 0.7 * em.values[1]
        res = unmix(Speclib(mix, wl), em, constraints="sum_to_one")
        assert np.allclose(res.abundances[0], [0.3, 0.7], atol=1e-8)

    def test_three_endmember_mixture_full(self, rng):
        em, wl = endmember_lib(rng, m=3)
        weights = np.array([0.2, 0.5, 0.3])
        mix = weights @ em.values
        res = unmix(Speclib(mix, wl), em, constraints="full")
        assert np.allclose(res.abundances[0], weights, atol=1e-8)
        assert abs(res.abundances[0].sum() - 1.0) <= 1e-6

    def test_underdetermined_rejected(self, rng):
        wl = np.linspace(400, 600, 3)
        em = Speclib(rng.uniform(0, 1, (5, 3)), wl)
        s = Speclib(rng.uniform(0, 1, (1, 3)), wl)
        with pytest.raises(SelectionError, match="endmembers exceed"):
            unmix(s, em, constraints="none")

    def test_rank_deficient_rejected(self, rng):
        wl = np.linspace(400, 2400, 20)
        base = rng.uniform(0, 1, 20)
        em = Speclib(np.vstack([base, 2 * base, rng.uniform(0, 1, 20)]), wl)
        s = Speclib(rng.uniform(0, 1, (1, 20)), wl)
        with pytest.raises(FitError, match="rank deficient"):
            unmix(s, em, constraints="none")

    def test_grid_mismatch_rejected(self, rng):
        em, wl = endmember_lib(rng)
        s = Speclib(rng.uniform(0, 1, (1, 29)), np.linspace(400, 2400, 29))
        with pytest.raises(GridError):
            unmix(s, em)

    def test_unconstrained_matches_normal_equations(self, rng):
        em, wl = endmember_lib(rng, m=4, bands=40)
        s = Speclib(rng.uniform(0, 1, (6, 40)), wl)
        res = unmix(s, em, constraints="none")
        e = em.values
        oracle = np.linalg.solve(e @ e.T, e @ s.values.T).T
        assert np.allclose(res.abundances, oracle, atol=1e-10)

    def test_nonneg_matches_scipy(self, rng):
        em, wl = endmember_lib(rng, m=4, bands=40)
        s = Speclib(rng.uniform(0, 1, (10, 40)), wl)
        res = unmix(s, em, constraints="nonneg")
        for k in range(10):
            ref = scipy_nnls(em.values.T, s.values[k])[0]
            assert np.allclose(res.abundances[k], ref, atol=1e-10)
        assert res.abundances.min() >= 0.0

    def test_residual_monotone_in_constraints(self, rng):
        em, wl = endmember_lib(rng, m=3)
        s = Speclib(rng.uniform(0, 1, (8, 30)), wl)
        r_none = unmix(s, em, constraints="none").rmse
        for mode in ("sum_to_one", "nonneg", "full"):
            assert np.all(unmix(s, em, constraints=mode).rmse >= r_none - 1e-12)

    def test_permuting_endmembers_permutes_abundances(self, rng):
        em, wl = endmember_lib(rng, m=3)
        s = Speclib(rng.uniform(0, 1, (5, 30)), wl)
        perm = [2, 0, 1]
        em_p = Speclib(em.values[perm], wl, si={"name": [em.si.values("name")[k] for k in perm]})
        a = unmix(s, em, constraints="full").abundances
        b = unmix(s, em_p, constraints="full").abundances
        assert np.allclose(a[:, perm], b, atol=1e-10)

    def test_sum_to_one_abundance_sums(self, rng):
        em, wl = endmember_lib(rng, m=4)
        s = Speclib(rng.uniform(0, 1, (50, 30)), wl)
        res = unmix(s, em, constraints="sum_to_one")
        assert np.allclose(res.abundances.sum(axis=1), 1.0, atol=1e-10)

    def test_full_sums_and_nonnegativity_random(self, rng):
        em, wl = endmember_lib(rng, m=4)
        s = Speclib(rng.uniform(0.0, 1.0, (200, 30)), wl)
        res = unmix(s, em, constraints="full")
        assert np.all(np.abs(res.abundances.sum(axis=1) - 1.0) <= 1e-6)
        assert res.abundances.min() >= -1e-12

    def test_names_default_when_no_si(self, rng):
        wl = np.linspace(400, 2400, 30)
        em = Speclib(rng.uniform(0.05, 0.9, (2, 30)), wl)
        res = unmix(Speclib(rng.uniform(0, 1, (1, 30)), wl), em)
        assert res.endmember_names == ["em0", "em1"]

    def test_unknown_mode(self, rng):
        em, wl = endmember_lib(rng)
        with pytest.raises(ValueError):
            unmix(Speclib(np.ones((1, 30)), wl), em, constraints="bogus")
