import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from shapetransport.kernels import kernel_matrix
from shapetransport.shooting import (
    BlowupError,
    GeodesicState,
    IntegratorConfig,
    energy,
    flow_shape,
    hamiltonian_rhs,
    shoot,
    step,
)

A = np.exp(-0.5)


@pytest.fixture
def two_point(kcfg):
    return GeodesicState(
        np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [1.0, 0.0]])
    )


class TestRhs:
    def test_single_point(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
        dc, da = hamiltonian_rhs(s, kcfg)
        assert_allclose(dc, [[1.0, 0.0]])
        assert_allclose(da, [[0.0, 0.0]])

    def test_rest_state(self, kcfg):
        s = GeodesicState(np.array([[0.3, 1.0], [2.0, -1.0]]), np.zeros((2, 2)))
        dc, da = hamiltonian_rhs(s, kcfg)
        assert_allclose(dc, 0.0)
        assert_allclose(da, 0.0)

    def test_two_point_analytic(self, two_point, kcfg):
        dc, da = hamiltonian_rhs(two_point, kcfg)
        assert_allclose(dc[0], [1.0 + A, 0.0], rtol=1e-15)
        assert_allclose(da[0], [-A, 0.0], rtol=1e-14)
        assert_allclose(da[1], [A, 0.0], rtol=1e-14)

    def test_momenta_rhs_matches_energy_finite_differences(self, two_point, kcfg):
        # da/dt must equal -1/2 of the energy gradient; check the energy route
        dc, da = hamiltonian_rhs(two_point, kcfg)
        eps = 1e-6
        fd = np.zeros_like(two_point.c)
        for i in range(2):
            for j in range(2):
                p = two_point.c.copy()
                p[i, j] += eps
                m = two_point.c.copy()
                m[i, j] -= eps
                ep = float(np.sum(two_point.alpha * (kernel_matrix(p, kcfg) @ two_point.alpha)))
                em = float(np.sum(two_point.alpha * (kernel_matrix(m, kcfg) @ two_point.alpha)))
                fd[i, j] = (ep - em) / (2.0 * eps)
        assert np.linalg.norm(da + 0.5 * fd) / np.linalg.norm(da) < 1e-9


class TestStep:
    def test_single_point_linear(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
        out = step(s, 0.1, 2, kcfg)
        assert_allclose(out.c, [[0.1, 0.0]], rtol=1e-15)
        assert_allclose(out.alpha, [[1.0, 0.0]])

    @pytest.mark.parametrize("order", [2, 4])
    @pytest.mark.parametrize("h", [0.01, 0.5, 1.0])
    def test_zero_momenta_fixed_point(self, kcfg, order, h):
        s = GeodesicState(np.array([[0.1, 0.2], [0.9, -0.4]]), np.zeros((2, 2)))
        out = step(s, h, order, kcfg)
        assert_allclose(out.c, s.c)
        assert_allclose(out.alpha, 0.0)

    def test_orders_agree_to_h_cubed(self, two_point, kcfg):
        s2 = step(two_point, 0.01, 2, kcfg)
        s4 = step(two_point, 0.01, 4, kcfg)
        diff = max(np.max(np.abs(s2.c - s4.c)), np.max(np.abs(s2.alpha - s4.alpha)))
        assert diff <= 1e-5

    def test_blowup_detected(self, kcfg):
        s = GeodesicState(
            np.array([[0.0, 0.0], [0.5, 0.0]]), np.array([[1e200, 0.0], [-1e200, 0.0]])
        )
        with pytest.raises(BlowupError):
            step(s, 0.25, 2, kcfg)

    def test_invalid_order(self, two_point, kcfg):
        with pytest.raises(ValueError):
            step(two_point, 0.1, 3, kcfg)


class TestShoot:
    def test_straight_line(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
        path = shoot(s, IntegratorConfig(steps=10), kcfg)
        assert_allclose(path.final.c, [[1.0, 0.0]], rtol=1e-14)
        assert_allclose(path.final.alpha, [[1.0, 0.0]])
        assert len(path.states) == 11
        assert path.step == 0.1

    @pytest.mark.parametrize("order", [2, 4])
    def test_single_point_exactly_straight_any_resolution(self, kcfg, order):
        s = GeodesicState(np.array([[0.2, -0.4]]), np.array([[0.3, 0.8]]))
        for n in (1, 7, 23):
            path = shoot(s, IntegratorConfig(steps=n, order=order), kcfg)
            for k, state in enumerate(path.states):
                assert_allclose(state.c, s.c + (k / n) * s.alpha, rtol=0, atol=1e-15)
                assert_allclose(state.alpha, s.alpha)

    def test_zero_momenta_constant_path(self, kcfg):
        s = GeodesicState(np.array([[0.5, 0.5], [1.5, 0.0]]), np.zeros((2, 2)))
        path = shoot(s, IntegratorConfig(steps=5), kcfg)
        for state in path.states:
            assert_allclose(state.c, s.c)

    def test_head_on_pair_keeps_mirror_symmetry(self, kcfg):
        s = GeodesicState(
            np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [-1.0, 0.0]])
        )
        path = shoot(s, IntegratorConfig(steps=20), kcfg)
        for state in path.states:
            # x-coordinates opposite, y-coordinates equal
            assert abs(state.c[0, 0] + state.c[1, 0]) < 1e-14
            assert abs(state.c[0, 1] - state.c[1, 1]) < 1e-14

    def test_blowup_carries_step_index(self, kcfg):
        s = GeodesicState(
            np.array([[0.0, 0.0], [0.5, 0.0]]), np.array([[1e200, 0.0], [-1e200, 0.0]])
        )
        with pytest.raises(BlowupError) as err:
            shoot(s, IntegratorConfig(steps=4), kcfg)
        assert err.value.step_index == 0

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_translation_equivariance(self, kcfg, ux, uy):
        c0 = np.array([[0.0, 0.0], [1.0, 0.0]])
        a0 = np.array([[0.0, 0.5], [0.0, -0.5]])
        u = np.array([ux, uy])
        base = shoot(GeodesicState(c0, a0), IntegratorConfig(steps=25), kcfg)
        moved = shoot(GeodesicState(c0 + u, a0), IntegratorConfig(steps=25), kcfg)
        worst = max(
            np.max(np.abs(m.c - (b.c + u)))
            for m, b in zip(moved.states, base.states)
        )
        assert worst <= 1e-12


class TestEnergy:
    def test_zero_momenta(self, kcfg):
        assert energy(GeodesicState(np.array([[1.0, 1.0]]), np.zeros((1, 2))), kcfg) == 0.0

    def test_single_point(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        assert_allclose(energy(s, kcfg), 25.0)

    def test_order2_drift_shrinks_fourfold(self, canonical, kcfg):
        s0, _ = canonical
        drift = {}
        for n in (100, 200):
            path = shoot(s0, IntegratorConfig(steps=n, order=2), kcfg)
            drift[n] = abs(energy(path.final, kcfg) - energy(path.initial, kcfg))
        assert 3.0 <= drift[100] / drift[200] <= 5.0

    def test_order4_drift_shrinks_sixteenfold(self, canonical, kcfg):
        s0, _ = canonical
        drift = {}
        for n in (100, 200):
            path = shoot(s0, IntegratorConfig(steps=n, order=4), kcfg)
            drift[n] = abs(energy(path.final, kcfg) - energy(path.initial, kcfg))
        assert 12.0 <= drift[100] / drift[200] <= 20.0

    def test_time_symmetry_within_drift(self, canonical, kcfg):
        s0, _ = canonical
        fwd = shoot(s0, IntegratorConfig(steps=100), kcfg)
        back = shoot(
            GeodesicState(fwd.final.c, -fwd.final.alpha), IntegratorConfig(steps=100), kcfg
        )
        drift = abs(energy(fwd.final, kcfg) - energy(fwd.initial, kcfg))
        return_err = max(
            np.max(np.abs(back.final.c - s0.c)), np.max(np.abs(back.final.alpha + s0.alpha))
        )
        assert return_err <= 10.0 * drift


class TestFlowShape:
    def test_shape_point_on_single_control_point_follows_it(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[0.6, -0.2]]))
        path = shoot(s, IntegratorConfig(steps=10), kcfg)
        flows = flow_shape(path, np.array([[0.0, 0.0]]))
        for k, state in enumerate(path.states):
            assert_allclose(flows[k], state.c, rtol=0, atol=1e-14)

    def test_far_shape_point_stays_put(self, kcfg):
        s = GeodesicState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
        path = shoot(s, IntegratorConfig(steps=10), kcfg)
        flows = flow_shape(path, np.array([[10.0, 0.0]]))
        # kernel decay bound: N*h*max|alpha|*exp(-dist^2/2) ~ 2e-22
        assert np.max(np.abs(flows[-1] - flows[0])) <= 1e-15

    def test_control_points_as_shape_track_the_path(self, canonical, kcfg):
        s0, _ = canonical
        path = shoot(s0, IntegratorConfig(steps=50), kcfg)
        flows = flow_shape(path, s0.c)
        worst = max(
            np.max(np.abs(flows[k] - path.states[k].c)) for k in range(len(path.states))
        )
        assert worst <= 1e-6

    @pytest.mark.parametrize("order", [2, 4])
    def test_orders_supported(self, canonical, kcfg, order):
        s0, _ = canonical
        path = shoot(s0, IntegratorConfig(steps=10, order=order), kcfg)
        flows = flow_shape(path, np.array([[0.5, 0.5]]))
        assert flows.shape == (11, 1, 2)
        assert np.isfinite(flows).all()


class TestValidation:
    def test_state_shape_mismatch(self):
        with pytest.raises(ValueError):
            GeodesicState(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_state_non_finite(self):
        with pytest.raises(ValueError):
            GeodesicState(np.array([[np.nan, 0.0]]), np.zeros((1, 2)))

    def test_integrator_config(self):
        with pytest.raises(ValueError):
            IntegratorConfig(steps=0)
        with pytest.raises(ValueError):
            IntegratorConfig(steps=10, order=3)
