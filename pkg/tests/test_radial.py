import math

import numpy as np
import pytest
from scipy.special import jn_zeros

from tmbumps.config import Configuration, WeightField, solve_configuration
from tmbumps.errors import ConfigurationMismatch, NoZeroCrossing
from tmbumps.greenfn import DomainSpec, GreenEvaluator
from tmbumps.profile import ProfileTable
from tmbumps.radial import (
    BranchTable,
    eigenvalue_bound,
    predicted_mass_law,
    rescaled_profile_error,
    shoot_radial,
    solve_disk,
    trace_branch,
)

FOUR_PI = 4 * math.pi


@pytest.fixture(scope="module")
def unit_mass():
    ev = GreenEvaluator(DomainSpec.disk(1.0))
    cfg, _ = solve_configuration(Configuration([[0.1, 0.0]], [1.0]), WeightField.constant(1.0), ev)
    return cfg


class TestShoot:
    def test_initial_state(self):
        shot = shoot_radial(5.0)
        assert shot.value(0.0) == 5.0 and shot.derivative(0.0) == 0.0
        tab = shot.table()
        assert isinstance(tab, ProfileTable) and tab.coordinate == "radial_r"
        assert tab.value[0] == 5.0 and tab.derivative[0] == 0.0

    def test_zero_located(self):
        shot = shoot_radial(6.0)
        assert abs(shot.value(shot.r0)) <= 1e-12

    def test_monotone_profile(self):
        shot = shoot_radial(7.0)
        r = np.linspace(0, shot.r0, 2001)
        assert np.all(np.diff(shot.value(r)) < 0)
        assert np.all(shot.derivative(r[1:]) < 0)

    def test_scaling_gives_dirichlet(self):
        shot = shoot_radial(6.0)
        lam = shot.r0**2
        s2 = shoot_radial(6.0, coeff=lam)
        assert abs(s2.r0 - 1.0) <= 1e-10
        assert abs(s2.value(1.0)) <= 1e-10

    def test_ode_residual(self):
        shot = shoot_radial(4.0)
        for r in (0.3 * shot.r0, 0.9 * shot.r0):
            h = 1e-4 * r
            d2 = (shot.value(r + h) - 2 * shot.value(r) + shot.value(r - h)) / h**2
            v = shot.value(r)
            assert -(d2 + shot.derivative(r) / r) == pytest.approx(v * math.exp(v * v), rel=1e-5)

    def test_no_zero_before_r_max(self):
        shot = shoot_radial(4.0)
        with pytest.raises(NoZeroCrossing):
            shoot_radial(4.0, r_max=0.5 * shot.r0)

    @pytest.mark.parametrize("g", [0.4, 12.5])
    def test_gamma_range(self, g):
        with pytest.raises(ValueError):
            shoot_radial(g)

    def test_high_gamma_no_overflow(self):
        shot = shoot_radial(12.0)
        assert math.isfinite(shot.r0) and shot.energy / FOUR_PI == pytest.approx(1.0, abs=0.02)


class TestSolveDisk:
    def test_dirichlet_and_peak(self):
        p = solve_disk(5.0)
        assert abs(p.boundary_value()) <= 1e-10
        assert p.u(0.0) == 5.0
        assert p.lam > 0 and p.energy > 0

    def test_radius_scale_invariance(self):
        a, b = solve_disk(6.0, R=1.0), solve_disk(6.0, R=3.0)
        assert b.lam * 9 == pytest.approx(a.lam, rel=1e-12)
        assert b.energy == pytest.approx(a.energy, rel=1e-12)
        assert b.u(1.5) == pytest.approx(a.u(0.5), abs=1e-12)

    def test_constant_weight_scaling(self):
        a, b = solve_disk(6.0), solve_disk(6.0, weight=4.0)
        assert b.lam * 4 == pytest.approx(a.lam, rel=1e-12)

    def test_callable_constant_matches_scaling(self):
        a = solve_disk(5.0, bubble_err=False)
        b = solve_disk(5.0, weight=lambda r: 1.0, bubble_err=False)
        assert b.lam == pytest.approx(a.lam, rel=1e-9)
        assert b.energy == pytest.approx(a.energy, rel=1e-7)

    def test_radial_weight(self):
        p = solve_disk(5.0, weight=lambda r: 1.0 + r * r)
        assert abs(p.boundary_value()) <= 1e-9
        assert p.energy_identity_rel_err <= 1e-6

    def test_energy_identity(self, unit_branch):
        for p in unit_branch:
            assert p.energy_identity_rel_err <= 1e-6

    def test_eigenvalue_bound(self, unit_branch):
        assert eigenvalue_bound() == pytest.approx(jn_zeros(0, 1)[0] ** 2, rel=1e-15)
        assert eigenvalue_bound() == pytest.approx(2.404825557695773**2, rel=1e-14)
        for p in unit_branch:
            assert p.lam <= eigenvalue_bound()

    def test_small_gamma_approaches_linear_problem(self):
        # as gamma -> 0 the problem linearizes and lambda -> j0^2
        p = solve_disk(0.5, bubble_err=False)
        assert p.lam < eigenvalue_bound() and p.lam > 0.5 * eigenvalue_bound()


class TestBranch:
    def test_energy_near_4pi(self, unit_branch):
        e = unit_branch.column("energy_over_4pi")
        assert abs(e[-1] - 1.0) <= 0.05
        assert np.all(np.diff(np.abs(e - 1.0)) < 0)

    def test_lambda_gamma_sq_value(self, unit_branch):
        assert abs(unit_branch.points[-1].lambda_gamma_sq - 4 / math.e) <= 0.1 * 4 / math.e

    def test_table_csv(self, unit_branch, tmp_path):
        path = tmp_path / "b.csv"
        unit_branch.to_csv(path)
        lines = path.read_bytes().split(b"\r\n")
        assert lines[0] == b"gamma,lambda,lambda_gamma_sq,energy,energy_over_4pi,sup_bubble_err_times_gamma"
        assert len([ln for ln in lines if ln]) == 6

    def test_requires_increasing(self):
        with pytest.raises(ValueError):
            trace_branch([5, 4])
        with pytest.raises(ValueError):
            BranchTable([solve_disk(5.0, bubble_err=False), solve_disk(4.0, bubble_err=False)])

    def test_failures_collected(self):
        tab = trace_branch([4.0, 13.0])
        assert len(tab) == 1 and tab.failures[0][0] == 13.0

    def test_threads_match_serial(self):
        a = trace_branch([4, 6], threads=1)
        b = trace_branch([4, 6], threads=2)
        assert np.array_equal(a.column("lambda"), b.column("lambda"))


class TestBubbleComparison:
    def test_matched_peak(self, unit_branch):
        p = unit_branch.points[0]
        from tmbumps.bubble import BubbleParams, integrate_bubble

        bub = integrate_bubble(BubbleParams(p.gamma, p.lam), 5.0)
        assert p.u(0.0) - bub.value_r(0.0) == 0.0

    def test_constant_weight_identical(self, unit_branch):
        # with f = 1 the disk solution is a piece of the bubble itself
        for p in unit_branch:
            assert p.sup_bubble_err <= 1e-6

    def test_weighted_regression(self):
        tab = trace_branch([4, 6, 8], weight=lambda r: 1.0 + r * r)
        errs = tab.column("sup_bubble_err_times_gamma")
        assert np.all(errs > 1e-4)
        assert np.all(errs[1:] <= 1.5 * errs[0])

    def test_rescaled_profile(self, unit_branch):
        for p in unit_branch:
            assert rescaled_profile_error(p) <= 5.0 / p.gamma**2


class TestMassLaw:
    def test_unit_weight_deviation(self, unit_branch, unit_mass):
        recs = [predicted_mass_law(p, unit_mass, WeightField.constant(1.0)) for p in unit_branch]
        assert recs[0]["target"] == pytest.approx(2 / math.sqrt(math.e), rel=1e-8)
        devs = [r["relative_deviation"] for r in recs]
        assert devs[-1] <= 0.1
        sel = [devs[0], devs[2], devs[4]]
        assert sel[0] > sel[1] > sel[2]

    def test_constant_weight_halves(self, unit_mass):
        ev = GreenEvaluator(DomainSpec.disk(1.0))
        four = WeightField.constant(4.0)
        cfg4, _ = solve_configuration(Configuration([[0.1, 0.0]], [1.0]), four, ev)
        assert cfg4.masses[0] == pytest.approx(2 * unit_mass.masses[0], rel=1e-10)
        p1, p4 = solve_disk(8.0, bubble_err=False), solve_disk(8.0, weight=4.0, bubble_err=False)
        r1 = predicted_mass_law(p1, unit_mass, WeightField.constant(1.0))
        r4 = predicted_mass_law(p4, cfg4, four)
        assert r4["measured"] == pytest.approx(0.5 * r1["measured"], rel=1e-12)
        assert r4["deviation"] == pytest.approx(0.5 * r1["deviation"], rel=1e-8)
        assert r4["deviation_with_f0"] > 10 * r4["deviation"]

    def test_mismatches(self, unit_branch, unit_mass):
        p = unit_branch.points[0]
        one = WeightField.constant(1.0)
        with pytest.raises(ConfigurationMismatch):
            predicted_mass_law(p, Configuration([[0, 0], [0.5, 0]], [1, 1]), one)
        with pytest.raises(ConfigurationMismatch):
            predicted_mass_law(p, Configuration([[0.3, 0]], [1.0]), one)
        with pytest.raises(ConfigurationMismatch):
            predicted_mass_law(p, unit_mass, WeightField.constant(2.0))
        with pytest.raises(ConfigurationMismatch):
            predicted_mass_law(p, unit_mass, one, domain=DomainSpec.disk(2.0))
