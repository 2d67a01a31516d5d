"""Multi-start Newton enumeration against analytic and spectral oracles."""

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sphere_equilibria.elliptic import real_eigenvalues
from sphere_equilibria.errors import ParameterError
from sphere_equilibria.field_model import ModelParams, sample_field
from sphere_equilibria.search import (SolverOptions, find_equilibria,
                                      mc_mean_count, mc_result_to_csv,
                                      save_count_report_json,
                                      tangent_spectrum)


def field_free_instance(n=4, sigma=1.5, seed=7):
    return sample_field(ModelParams(n=n, j1=0, j2=0, sigma=sigma,
                                    field_free=True), seed)


class TestFieldFree:
    def test_exactly_two_roots_on_the_field_axis(self):
        inst = field_free_instance()
        rep = find_equilibria(inst, SolverOptions(n_starts=200, seed=1))
        assert rep.n_found == 2
        hnorm = np.linalg.norm(inst.h)
        xplus = 2.0 * inst.h / hnorm
        dists = sorted(min(np.linalg.norm(pt.x - s * xplus) for pt in rep.points)
                       for s in (1.0, -1.0))
        assert max(dists) < 1e-8
        lams = sorted(pt.lam for pt in rep.points)
        assert_allclose(lams, [-hnorm / 2.0, hnorm / 2.0], rtol=1e-10)

    def test_tangent_spectra_uniform_contraction(self):
        # +root: all tangent rates -|h|/sqrt(N); -root: all +|h|/sqrt(N)
        inst = field_free_instance()
        rep = find_equilibria(inst, SolverOptions(n_starts=200, seed=1))
        rate = np.linalg.norm(inst.h) / 2.0
        by_lam = sorted(rep.points, key=lambda pt: pt.lam)
        assert_allclose(by_lam[0].tangent_spectrum,
                        np.full(3, rate), rtol=1e-9)
        assert_allclose(by_lam[1].tangent_spectrum,
                        np.full(3, -rate), rtol=1e-9)

    def test_degenerate_sphere_rejected(self):
        inst = sample_field(ModelParams(n=4, j1=0, j2=0, sigma=0.0,
                                        field_free=True), 1)
        with pytest.raises(ParameterError):
            find_equilibria(inst)


class TestLinearFieldOracle:
    @pytest.mark.parametrize("n,alpha1,seed", [
        (4, 0.0, 0), (4, 0.5, 1), (6, -0.3, 2), (8, 0.7, 3), (6, 0.0, 4),
    ])
    def test_count_is_twice_real_spectrum(self, n, alpha1, seed):
        p = ModelParams(n=n, j1=1.0, j2=0.0, alpha1=alpha1, sigma=0.0)
        inst = sample_field(p, 100 + seed)
        rep = find_equilibria(inst, SolverOptions(n_starts=2000, seed=seed))
        assert rep.n_found == 2 * len(real_eigenvalues(inst.j1_matrix))

    def test_symmetric_coupling_gives_2n(self):
        p = ModelParams(n=6, j1=1.0, j2=0.0, alpha1=1.0, sigma=0.0)
        inst = sample_field(p, 17)
        rep = find_equilibria(inst, SolverOptions(n_starts=2000, seed=5))
        assert rep.n_found == 12

    def test_roots_are_eigenvectors(self):
        p = ModelParams(n=4, j1=1.0, j2=0.0, alpha1=0.4, sigma=0.0)
        inst = sample_field(p, 23)
        rep = find_equilibria(inst, SolverOptions(n_starts=1000, seed=3))
        evals = real_eigenvalues(inst.j1_matrix)
        for pt in rep.points:
            assert min(abs(pt.lam - evals)) < 1e-9


class TestReportInvariants:
    def make_report(self, sigma=0.5, seed=11):
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=sigma)
        inst = sample_field(p, seed)
        return inst, find_equilibria(inst, SolverOptions(seed=2))

    def test_residual_and_constraint_bounds(self):
        inst, rep = self.make_report()
        for pt in rep.points:
            assert pt.residual <= 1e-10
            assert abs(pt.x @ pt.x - 4.0) <= 1e-10

    def test_lambda_consistency(self):
        inst, rep = self.make_report()
        for pt in rep.points:
            lam = pt.x @ inst.drift(pt.x) / 4.0
            assert abs(lam - pt.lam) <= 1e-8

    def test_pairwise_separation(self):
        _, rep = self.make_report()
        for i, a in enumerate(rep.points):
            for b in rep.points[i + 1:]:
                assert np.linalg.norm(a.x - b.x) > rep.dedup_radius

    def test_points_sorted_by_lambda(self):
        _, rep = self.make_report()
        lams = [pt.lam for pt in rep.points]
        assert lams == sorted(lams)

    def test_basin_hits_account_for_converged_starts(self):
        _, rep = self.make_report()
        assert sum(pt.basin_hits for pt in rep.points) == rep.n_converged_starts

    def test_scaling_moves_lambda_not_roots(self):
        # scaling (j1, j2, sigma) by c keeps the root set, scales lambda by c
        inst, rep = self.make_report()
        scaled = inst.with_scales(j1=2.0, j2=2.0, sigma=1.0)
        rep2 = find_equilibria(scaled, SolverOptions(seed=2))
        assert rep2.n_found == rep.n_found
        for a, b in zip(rep.points, rep2.points):
            assert np.linalg.norm(a.x - b.x) < 1e-8
            assert abs(2.0 * a.lam - b.lam) < 1e-8

    def test_start_count_robustness(self):
        # doubling the start budget almost never changes the count
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=0.3)
        changed = 0
        for s in range(30):
            inst = sample_field(p, 300 + s)
            a = find_equilibria(inst, SolverOptions(n_starts=1500, seed=1))
            b = find_equilibria(inst, SolverOptions(n_starts=3000, seed=2))
            changed += a.n_found != b.n_found
        assert changed <= 1

    def test_starved_budget_not_saturated(self):
        # 12 starts on an 8-root instance: discovery curve still rising
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=0.0)
        inst = sample_field(p, 5)
        rep = find_equilibria(inst, SolverOptions(n_starts=12, seed=1))
        full = find_equilibria(inst, SolverOptions(seed=1))
        assert not rep.saturated
        assert rep.n_found < full.n_found

    def test_dimension_guard(self):
        p = ModelParams(n=12, j1=1.0)
        inst = sample_field(p, 0)
        with pytest.raises(ParameterError, match="N <= 10"):
            find_equilibria(inst)

    def test_tangent_spectrum_requires_converged_point(self):
        inst, rep = self.make_report()
        pt = rep.points[0]
        spec = tangent_spectrum(inst, pt)
        assert len(spec) == 3
        pt.residual = 1.0
        with pytest.raises(ParameterError):
            tangent_spectrum(inst, pt)

    def test_gradient_instance_real_spectrum(self):
        p = ModelParams(n=5, j1=1, j2=1, alpha1=1.0, alpha2=1.0, sigma=0.5)
        inst = sample_field(p, 3)
        rep = find_equilibria(inst, SolverOptions(n_starts=3000, seed=4))
        assert rep.n_found >= 2
        for pt in rep.points:
            assert np.max(np.abs(pt.tangent_spectrum.imag)) < 1e-8


class TestMCCount:
    def test_deterministic_and_threaded_identical(self):
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=1.5)
        a = mc_mean_count(p, 12, SolverOptions(), seed=5)
        b = mc_mean_count(p, 12, SolverOptions(), seed=5, threads=3)
        assert a.mean == b.mean and a.stderr == b.stderr
        assert np.array_equal(a.counts, b.counts)

    def test_histogram_half_line_symmetry(self):
        # prediction integrand is even: counts on [0, inf) are ~half
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=0.5)
        res = mc_mean_count(p, 60, SolverOptions(), seed=8,
                            lambda_edges=[-50.0, 0.0, 50.0])
        lo, hi = res.histogram_mean
        se = math.hypot(*res.histogram_stderr)
        assert abs(lo - hi) < 4 * se + 1e-9

    def test_deep_trivial_mean_is_two(self):
        # far past the transition the average count sits at the floor of 2
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=3.2)
        res = mc_mean_count(p, 40, SolverOptions(), seed=21)
        assert abs(res.mean - 2.0) <= 3 * res.stderr + 1e-12

    def test_linear_family_matches_elliptic_count(self):
        # j2 = 0, alpha1 = 0, sigma = 0: the coupling matrix is a scaled
        # real Ginibre draw, so mean count = 2 x mean #real eigenvalues
        from sphere_equilibria.elliptic import EllipticParams, mean_real_count
        p = ModelParams(n=4, j1=1.0, j2=0.0, alpha1=0.0, sigma=0.0)
        res = mc_mean_count(p, 60, SolverOptions(n_starts=1500), seed=14)
        ref_mean, ref_se = mean_real_count(EllipticParams(4, 0.0), 50_000, 9)
        se = math.hypot(res.stderr, 2 * ref_se)
        assert abs(res.mean - 2 * ref_mean) <= 3 * se

    def test_strict_excludes_unsaturated(self):
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=0.0)
        res = mc_mean_count(p, 8, SolverOptions(n_starts=6), seed=3,
                            strict=True)
        assert res.n_excluded == res.n_unsaturated > 0

    def test_exports(self, tmp_path):
        p = ModelParams(n=4, j1=1, j2=1, alpha1=0.3, alpha2=0.2, sigma=1.0)
        inst = sample_field(p, 2)
        rep = find_equilibria(inst, SolverOptions(seed=1))
        save_count_report_json(rep, tmp_path / "rep.json")
        with open(tmp_path / "rep.json") as fh:
            payload = json.load(fh)
        assert payload["n_found"] == rep.n_found
        assert len(payload["points"]) == rep.n_found

        res = mc_mean_count(p, 5, SolverOptions(), seed=1)
        mc_result_to_csv(res, tmp_path / "mc.csv")
        lines = (tmp_path / "mc.csv").read_text().strip().splitlines()
        assert lines[0] == "instance,n_found,saturated,seed"
        assert len(lines) == 6
