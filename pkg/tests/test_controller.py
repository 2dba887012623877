import numpy as np
import pytest

from bilsyn import synthesis
from bilsyn.controller import (RationalController, SingularityError, closed_loop_step,
                               controller_from_dict, controller_to_dict, evaluate, extract)
from tests.util import load_fixture


@pytest.fixture(scope="module")
def ex1_stab():
    return load_fixture("example1_stab.json")


@pytest.fixture(scope="module")
def gs_result(ex1_stab):
    return synthesis.synthesize_stability(ex1_stab, "gain_scheduled")


def paper_gs_perf_controller():
    # u(z) = -z/(1+z): K = -1, Kw = -1
    return RationalController(K=np.array([[-1.0]]), Kw=np.array([[-1.0]]),
                              mode="gain_scheduled", P=np.array([[0.9]]))


def paper_gs_stab_controller():
    # u(z) = -0.5324 z / (1 + 0.5762 z): K = -0.5324, Kw = -0.5762
    return RationalController(K=np.array([[-0.5324]]), Kw=np.array([[-0.5762]]),
                              mode="gain_scheduled")


class TestExtract:
    def test_linear_gain_consistent(self, ex1_stab):
        res = synthesis.synthesize_stability(ex1_stab, "linear")
        ctrl = extract(res, ex1_stab.region)
        # K P = L must hold regardless of which optimal gain the solver picked
        np.testing.assert_allclose(ctrl.K @ res.vars.P, res.vars.L, atol=1e-9)
        np.testing.assert_array_equal(ctrl.Kw, 0.0)
        assert ctrl.is_linear

    def test_gs_gain_relations(self, gs_result, ex1_stab):
        ctrl = extract(gs_result, ex1_stab.region)
        v = gs_result.vars
        np.testing.assert_allclose(ctrl.K @ v.P, v.L, atol=1e-9)
        np.testing.assert_allclose(
            ctrl.Kw @ np.kron(v.LambdaTilde, ex1_stab.region.Qzt), v.Lw, atol=1e-9)

    def test_scalar_kw_sign(self, ex1_stab):
        # m=1 ball region: Kw = -Lw / LambdaTilde for Qzt = -1
        res = synthesis.synthesize_stability(ex1_stab, "gain_scheduled")
        ctrl = extract(res, ex1_stab.region)
        v = res.vars
        assert ctrl.Kw[0, 0] == pytest.approx(-v.Lw[0, 0] / v.LambdaTilde[0, 0], rel=1e-9)


class TestEvaluate:
    def test_zero_state(self):
        ctrl = paper_gs_perf_controller()
        np.testing.assert_array_equal(evaluate(ctrl, [0.0]), [0.0])

    def test_paper_arithmetic(self):
        # -0.5324 * 0.5 / (1 + 0.5762 * 0.5) = -0.2066...
        ctrl = paper_gs_stab_controller()
        u = evaluate(ctrl, [0.5])
        assert u[0] == pytest.approx(-0.5324 * 0.5 / (1 + 0.5762 * 0.5), abs=1e-10)
        assert u[0] == pytest.approx(-0.2066, abs=1e-4)

    def test_pole_raises(self):
        ctrl = paper_gs_stab_controller()
        with pytest.raises(SingularityError):
            evaluate(ctrl, [-1.0 / 0.5762])

    def test_linear_mode_exact(self):
        ctrl = RationalController(K=np.array([[-0.7, 0.2]]), Kw=np.zeros((1, 2)),
                                  mode="linear")
        rng = np.random.default_rng(0)
        for _ in range(50):
            z = rng.standard_normal(2)
            np.testing.assert_array_equal(evaluate(ctrl, z), ctrl.K @ z)

    def test_fixed_point_identity(self, gs_result, ex1_stab):
        # u = K z + Kw (I_m kron z) u to 1e-10 wherever evaluate succeeds
        ctrl = extract(gs_result, ex1_stab.region)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            z = rng.uniform(-0.94, 0.94, size=1)
            u = evaluate(ctrl, z)
            rhs = ctrl.K @ z + ctrl.Kw @ np.kron(np.eye(1), z.reshape(-1, 1)) @ u
            np.testing.assert_allclose(u, rhs, atol=1e-10)

    def test_nonsingular_on_certified_region(self, gs_result, ex1_stab):
        from bilsyn.analysis import sample_in_roa
        ctrl = extract(gs_result, ex1_stab.region)
        for idx in range(1000):
            rng = np.random.default_rng((2, idx))
            z = sample_in_roa(gs_result.vars.P, rng)
            evaluate(ctrl, z)  # must not raise

    def test_mimo_fixed_point(self):
        prob = load_fixture("example3_mimo.json")
        res = synthesis.synthesize_stability(prob, "gain_scheduled")
        assert res.accepted
        ctrl = extract(res, prob.region)
        from bilsyn.analysis import sample_in_roa
        for idx in range(200):
            rng = np.random.default_rng((3, idx))
            z = sample_in_roa(res.vars.P, rng)
            u = evaluate(ctrl, z)
            rhs = ctrl.K @ z + ctrl.Kw @ np.kron(np.eye(2), z.reshape(-1, 1)) @ u
            np.testing.assert_allclose(u, rhs, atol=1e-10)


class TestClosedLoop:
    def test_ideal_gs_loop_cancels(self):
        # u = -z/(1+z) gives z+ = z + (z+1)u + wp = wp exactly
        prob = load_fixture("example1_perf.json")
        ctrl = paper_gs_perf_controller()
        rng = np.random.default_rng(2)
        for _ in range(100):
            z = rng.uniform(-0.9, 0.9, size=1)
            wp = rng.uniform(-0.3, 0.3, size=1)
            z_next, zp = closed_loop_step(prob.system, ctrl, z, wp=wp, channel=prob.channel)
            np.testing.assert_allclose(z_next, wp, atol=1e-12)
            np.testing.assert_allclose(zp, z, atol=1e-12)

    def test_linear_perf_loop(self):
        # u = -z gives z+ = -z^2 + wp
        prob = load_fixture("example1_perf.json")
        ctrl = RationalController(K=np.array([[-1.0]]), Kw=np.zeros((1, 1)), mode="linear")
        rng = np.random.default_rng(3)
        for _ in range(100):
            z = rng.uniform(-1.0, 1.0, size=1)
            wp = rng.uniform(-0.3, 0.3, size=1)
            z_next, _ = closed_loop_step(prob.system, ctrl, z, wp=wp, channel=prob.channel)
            np.testing.assert_allclose(z_next, -z**2 + wp, atol=1e-12)

    def test_origin_equilibrium(self, ex1_stab, gs_result):
        ctrl = extract(gs_result, ex1_stab.region)
        np.testing.assert_array_equal(closed_loop_step(ex1_stab.system, ctrl, [0.0]), [0.0])

    def test_disturbance_without_channel_rejected(self, ex1_stab, gs_result):
        ctrl = extract(gs_result, ex1_stab.region)
        with pytest.raises(ValueError):
            closed_loop_step(ex1_stab.system, ctrl, [0.1], wp=[0.1])


class TestExport:
    def test_round_trip(self, gs_result, ex1_stab):
        ctrl = extract(gs_result, ex1_stab.region)
        d = controller_to_dict(ctrl, ex1_stab.region)
        assert "region" in d
        again = controller_from_dict(d)
        np.testing.assert_array_equal(again.K, ctrl.K)
        np.testing.assert_array_equal(again.Kw, ctrl.Kw)
        np.testing.assert_array_equal(again.P, ctrl.P)

    def test_bad_kw_shape(self):
        with pytest.raises(ValueError):
            controller_from_dict({"K": [[1.0]], "Kw": [[1.0, 2.0]]})
