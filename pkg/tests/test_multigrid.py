"""Cascadic multigrid driver and the grid-refinement study."""

import io
import logging

import numpy as np
import pytest

from spinbec.errors import InvalidArgument
from spinbec.guesses import make_spinor_guess
from spinbec.multigrid import MultigridPlan, cm_pcg_solve, convergence_study, restrict_to_coarse
from spinbec.optimizer import SolverConfig, pcg_solve
from spinbec.physics import PhysicsParams, TrapPotential
from spinbec.spectral import GridSpec, make_grid

from conftest import random_field

LINEAR = PhysicsParams(0.0, 0.0)
ROT = PhysicsParams(20.0, 0.5, 0.4, 0.3)


class TestPlan:
    def test_cascade_levels(self):
        plan = MultigridPlan.cascade(make_grid(2, 12, 256), 64)
        assert [lv.shape for lv in plan.levels] == [(64, 64), (128, 128), (256, 256)]
        assert all(c.tol == 1e-14 for c in plan.configs)

    def test_coarse_tolerance(self):
        plan = MultigridPlan.cascade(make_grid(2, 12, 128), 32, SolverConfig(tol=1e-13), coarse_tol=1e-8)
        assert [c.tol for c in plan.configs] == [1e-8, 1e-8, 1e-13]

    def test_single_level(self):
        g = make_grid(2, 8, 32)
        assert MultigridPlan.cascade(g, 32).levels == [g]

    @pytest.mark.parametrize("levels", [
        [],
        [make_grid(2, 8, 32), make_grid(2, 9, 64)],
        [make_grid(2, 8, 32), make_grid(2, 8, 96)],
        [make_grid(2, 8, 32), make_grid(2, 8, 32)],
    ])
    def test_invalid(self, levels):
        with pytest.raises(InvalidArgument):
            MultigridPlan(levels, [SolverConfig() for _ in levels])

    def test_unreachable_coarsest(self):
        with pytest.raises(InvalidArgument):
            MultigridPlan.cascade(make_grid(2, 8, 96), 64)

    def test_config_count(self):
        with pytest.raises(InvalidArgument):
            MultigridPlan([make_grid(2, 8, 32)], [])


class TestCascade:
    def test_single_level_is_plain_pcg(self):
        g = make_grid(2, 8, 32)
        phi0 = make_spinor_guess(("a", "a", "a"), g, ROT)
        plan = MultigridPlan([g], [SolverConfig()])
        a = cm_pcg_solve(phi0, ROT, plan)
        b = pcg_solve(phi0, ROT, SolverConfig())
        assert a.energy.total == b.energy.total
        np.testing.assert_array_equal(a.phi.data, b.phi.data)
        assert [r.iterations for r in a.records] == [b.record.iterations]

    def test_linear_matches_direct(self):
        fine = make_grid(2, 8, 64)
        plan = MultigridPlan.cascade(fine, 16)
        res = cm_pcg_solve(make_spinor_guess(("a", "a", "a"), plan.levels[0], LINEAR), LINEAR, plan)
        direct = pcg_solve(make_spinor_guess(("a", "a", "a"), fine, LINEAR), LINEAR)
        assert res.converged and len(res.records) == 3
        assert abs(res.energy.total - direct.energy.total) <= 1e-6

    def test_rotating_matches_direct(self):
        fine = make_grid(2, 8, 64)
        plan = MultigridPlan.cascade(fine, 32)
        res = cm_pcg_solve(make_spinor_guess(("a", "a", "a"), plan.levels[0], ROT), ROT, plan)
        direct = pcg_solve(make_spinor_guess(("a", "a", "a"), fine, ROT), ROT)
        assert res.converged and res.phi.grid == fine
        assert abs(res.energy.total - direct.energy.total) <= 1e-8
        assert abs(res.phi.norm() - 1) <= 1e-12

    def test_level_energies_recorded(self):
        plan = MultigridPlan.cascade(make_grid(2, 8, 64), 16)
        res = cm_pcg_solve(make_spinor_guess(("a", "a", "a"), plan.levels[0], ROT), ROT, plan)
        assert len(res.level_energies) == 3
        assert res.level_energies[-1] == res.energy.total

    def test_wrong_start_grid(self):
        plan = MultigridPlan.cascade(make_grid(2, 8, 64), 16)
        with pytest.raises(InvalidArgument):
            cm_pcg_solve(make_spinor_guess(("a", "a", "a"), make_grid(2, 8, 32), ROT), ROT, plan)

    def test_poor_coarse_start_is_logged(self, caplog):
        # a coarse level too small for the state makes the next level start far away
        fine = make_grid(2, 8, 32)
        plan = MultigridPlan([GridSpec(2, (8.0, 8.0), (4, 4)), GridSpec(2, (8.0, 8.0), (8, 8)),
                              GridSpec(2, (8.0, 8.0), (16, 16)), fine],
                             [SolverConfig(max_iters=200) for _ in range(4)])
        with caplog.at_level(logging.WARNING, logger="spinbec.multigrid"):
            cm_pcg_solve(make_spinor_guess(("a", "a", "a"), plan.levels[0], ROT), ROT, plan)
        assert any("starts" in r.message for r in caplog.records)


class TestRestrict:
    def test_injection(self):
        fine = random_field(make_grid(2, 4, 32), 1)
        coarse = restrict_to_coarse(fine, make_grid(2, 4, 8))
        np.testing.assert_array_equal(coarse.data, fine.data[:, ::4, ::4])

    @pytest.mark.parametrize("coarse", [make_grid(2, 5, 8), make_grid(2, 4, 12), make_grid(2, 4, 64)])
    def test_invalid(self, coarse):
        with pytest.raises(InvalidArgument):
            restrict_to_coarse(random_field(make_grid(2, 4, 32)), coarse)


class TestStudy:
    def test_linear_errors_vanish(self):
        g = make_grid(2, 8, 16)
        plan = MultigridPlan.cascade(make_grid(2, 8, 64), 16, SolverConfig(stop_kind="residual_inf", tol=1e-11))
        study = convergence_study(make_spinor_guess(("a", "a", "a"), g, LINEAR), LINEAR, plan)
        assert [r.points for r in study.rows] == [16, 32]
        assert study.reference.grid.shape == (64, 64)
        # h = 1 barely resolves the Gaussian; h = 1/2 is already near round-off
        assert study.rows[0].wavefn_error < 1e-2
        assert study.rows[1].wavefn_error < 1e-9
        assert all(abs(r.virial) < 1e-6 for r in study.rows[1:])

    def test_spectral_decay_with_interaction(self):
        params = PhysicsParams(10.0, 0.5, 0.2, 0.2)
        plan = MultigridPlan.cascade(make_grid(2, 8, 128), 16, SolverConfig(stop_kind="residual_inf", tol=1e-10))
        study = convergence_study(make_spinor_guess(("a", "a", "a"), plan.levels[0], params), params, plan)
        errs = [r.wavefn_error for r in study.rows]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-6
        assert all(r.energy_error >= 0 and r.mu_error >= 0 for r in study.rows)

    def test_explicit_reference(self):
        plan = MultigridPlan.cascade(make_grid(2, 8, 32), 16, SolverConfig(tol=1e-13))
        ref_run = pcg_solve(make_spinor_guess(("a", "a", "a"), make_grid(2, 8, 64), ROT), ROT)
        study = convergence_study(make_spinor_guess(("a", "a", "a"), plan.levels[0], ROT), ROT, plan, ref_run.phi)
        assert [r.points for r in study.rows] == [16, 32]
        assert study.reference_energy.total == pytest.approx(ref_run.energy.total, rel=1e-14)

    def test_virial_absent_for_quartic(self):
        params = PhysicsParams(5.0, 0.0, trap=TrapPotential.harmonic_plus_quartic())
        plan = MultigridPlan.cascade(make_grid(2, 8, 32), 16, SolverConfig(tol=1e-12))
        study = convergence_study(make_spinor_guess(("a", "a", "a"), plan.levels[0], params), params, plan)
        assert study.rows[0].virial is None
        buf = io.StringIO()
        study.write_csv(buf)
        header, line = buf.getvalue().splitlines()
        assert header == "h,points,wavefn_error,energy_error,mu_error,virial,energy,iterations"
        assert line.split(",")[5] == ""
