import numpy as np
import pytest

from safesdre.barriers import (
    SafetySpec,
    augment,
    barrier_state_rhs,
    barrier_state_sdc,
    barrier_value,
    beta_tilde,
    chord_is_safe,
    circle_obstacle,
    get_barrier,
    inverse_barrier,
    log_barrier,
)
from safesdre.exceptions import OriginUnsafe, SegmentUnsafe, UnsafeState
from safesdre.validation import central_gradient


class TestBarrierFunctions:
    def test_inverse_blows_up_at_zero(self):
        b = inverse_barrier()
        assert b.B(1e-12) > 1e10

    def test_log_blows_up_at_zero(self):
        # The logarithmic barrier diverges only logarithmically, so the
        # check is monotone divergence rather than a huge magnitude.
        b = log_barrier()
        values = [b.B(e) for e in (1e-3, 1e-6, 1e-9, 1e-12)]
        assert all(v2 > v1 for v1, v2 in zip(values, values[1:]))
        assert values[-1] > 25.0

    @pytest.mark.parametrize("kind", ["inverse", "log"])
    def test_composition_identity(self, kind):
        # B'(B^{-1}(B(eta))) must equal B'(eta) without round-tripping.
        b = get_barrier(kind)
        for eta in np.geomspace(1e-6, 10.0, 40):
            direct = b.B_prime(eta)
            composed = b.B_prime_of_B_inverse(b.B(eta))
            assert abs(composed - direct) <= 1e-10 * abs(direct)

    def test_inverse_composition_closed_form(self):
        b = inverse_barrier()
        for w in (0.1, 1.0, 7.5):
            assert b.B_prime_of_B_inverse(w) == pytest.approx(-(w**2), rel=1e-14)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            get_barrier("exp")


class TestBarrierValue:
    def test_origin_value_is_4_over_31(self, safety2d):
        # h(0) = (0-2)^2 + (0-2)^2 - 0.25 = 31/4, so 1/h(0) = 4/31 exactly.
        beta0 = barrier_value(safety2d, inverse_barrier(), np.zeros(2))
        assert beta0[0] == 4.0 / 31.0

    def test_hand_evaluated_point(self, safety2d):
        # h(2, 0.5) = 0 + 2.25 - 0.25 = 2.
        val = barrier_value(safety2d, inverse_barrier(), np.array([2.0, 0.5]))
        assert val[0] == pytest.approx(0.5, abs=1e-15)

    def test_blowup_near_boundary(self, safety2d):
        for eps in (1e-2, 1e-5, 1e-8):
            x = np.array([2.0, 2.0 + 0.5 + eps])  # h = (0.5+eps)^2 - 0.25 ~ eps
            val = barrier_value(safety2d, inverse_barrier(), x)
            assert val[0] >= 1.0 / (2.0 * eps)

    def test_unsafe_state_raises(self, safety2d):
        with pytest.raises(UnsafeState):
            barrier_value(safety2d, inverse_barrier(), np.array([2.0, 2.0]))


class TestBetaTilde:
    def test_trivial_at_origin(self, safety2d):
        bt = beta_tilde(safety2d, inverse_barrier(), np.zeros(2))
        assert bt.shape == (1, 2)
        assert np.allclose(bt @ np.zeros(2), 0.0)

    def test_factorization_identity_single_point(self, safety2d):
        # Oracle: the direct barrier difference computed without quadrature.
        bar = inverse_barrier()
        x = np.array([1.0, 1.0])
        lhs = beta_tilde(safety2d, bar, x) @ x
        rhs = barrier_value(safety2d, bar, x) - barrier_value(safety2d, bar, np.zeros(2))
        assert np.max(np.abs(lhs - rhs)) <= 1e-8

    def test_quadrature_against_dense_oracle(self, safety2d):
        # Brute-force 4000-node midpoint rule as an independent oracle.
        bar = inverse_barrier()
        x = np.array([2.0, 0.4])
        mus = (np.arange(4000) + 0.5) / 4000.0
        states = mus[:, None] * x[None, :]
        grads = safety2d.effective_grad(states)
        hs = safety2d.effective_h(states)
        oracle = np.mean(bar.B_prime(hs)[..., None] * grads, axis=0)
        bt = beta_tilde(safety2d, bar, x)
        assert np.max(np.abs(bt - oracle)) <= 1e-6

    @pytest.mark.parametrize("kind", ["inverse", "log"])
    def test_factorization_identity_randomized(self, safety2d, rng, kind):
        bar = get_barrier(kind)
        count = 0
        while count < 100:
            x = rng.uniform([-1.0, -1.0], [5.0, 5.0])
            if safety2d.min_margin(x) <= 0 or not chord_is_safe(
                safety2d, x, min_clearance=0.05
            ):
                continue
            count += 1
            lhs = beta_tilde(safety2d, bar, x) @ x
            rhs = barrier_value(safety2d, bar, x) - barrier_value(
                safety2d, bar, np.zeros(2)
            )
            err = np.max(np.abs(lhs - rhs))
            assert err <= 1e-7 * max(1.0, np.max(np.abs(rhs)))

    def test_blocked_chord_rejected(self, safety2d):
        # The obstacle center sits on the chord's endpoint: h < 0 there.
        with pytest.raises(SegmentUnsafe):
            beta_tilde(safety2d, inverse_barrier(), np.array([2.0, 2.0]))

    def test_chord_through_disk_rejected(self, safety2d):
        # (4, 4) is safe but the straight chord passes through (2, 2).
        assert safety2d.min_margin(np.array([4.0, 4.0])) > 0
        with pytest.raises(SegmentUnsafe):
            beta_tilde(safety2d, inverse_barrier(), np.array([4.0, 4.0]))


class TestBarrierStateDynamics:
    def test_vanishes_at_equilibrium(self, aug2d):
        zdot = barrier_state_rhs(aug2d, np.zeros(3), np.zeros(1))
        assert np.allclose(zdot, 0.0, atol=1e-15)

    def test_inverse_coefficient_closed_form(self, aug2d):
        # For the inverse barrier the leading coefficient is -(z + beta0)^2.
        beta0 = aug2d.beta0[0]
        for z in (-0.05, 0.0, 0.3):
            coeff = aug2d.barrier.B_prime_of_B_inverse(z + beta0)
            assert coeff == pytest.approx(-((z + beta0) ** 2), rel=1e-14)

    def test_gamma_term_vanishes_on_tracking_manifold(self, aug2d):
        # With z = beta(x) - beta0 the correction term contributes nothing:
        # zdot reduces to the pure Lie-derivative part.
        x = np.array([0.5, -0.4])
        beta = barrier_value(aug2d.safety, aug2d.barrier, x)
        z = beta - aug2d.beta0
        x_bar = aug2d.join(x, z)
        u = np.array([0.7])
        zdot = barrier_state_rhs(aug2d, x_bar, u)
        coeff = aug2d.barrier.B_prime_of_B_inverse(z + aug2d.beta0)
        lie = aug2d.safety.effective_grad(x) @ aug2d.base.rhs(x, u)
        assert np.allclose(zdot, coeff * lie, atol=1e-14)

    def test_residual_decays_at_rate_gamma(self, aug2d):
        # Frozen plant (xdot = 0): the residual e = z + beta0 - beta(x)
        # obeys e' = -gamma e exactly; integrate and compare.
        x = np.array([1.0, -1.0])
        beta = barrier_value(aug2d.safety, aug2d.barrier, x)
        z = float(beta[0] - aug2d.beta0[0]) + 0.2  # offset residual
        dt, T = 1e-3, 2.0
        e0 = 0.2
        for _ in range(int(T / dt)):
            def f(zv):
                return barrier_state_rhs(
                    aug2d, aug2d.join(x, [zv]), np.zeros(1), xdot=np.zeros(2)
                )[0]
            k1 = f(z)
            k2 = f(z + 0.5 * dt * k1)
            k3 = f(z + 0.5 * dt * k2)
            k4 = f(z + dt * k3)
            z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        e_T = z + aug2d.beta0[0] - beta[0]
        assert e_T == pytest.approx(e0 * np.exp(-aug2d.gamma * T), abs=1e-9)

    def test_unsafe_state_raises(self, aug2d):
        with pytest.raises(UnsafeState):
            barrier_state_rhs(aug2d, np.array([2.0, 2.0, 0.0]), np.zeros(1))


class TestBarrierStateSdc:
    def test_gz_closed_form(self, aug2d, rng):
        # gz = -2 (x2 - 2) (z + 4/31)^2 for this benchmark.
        for _ in range(20):
            x = rng.uniform([-1, -1], [1.5, 1.5])
            z = rng.normal(scale=0.2)
            x_bar = aug2d.join(x, [z])
            _, gz = barrier_state_sdc(aug2d, x_bar)
            expected = -2.0 * (x[1] - 2.0) * (z + 4.0 / 31.0) ** 2
            assert gz[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_consistency_with_direct_dynamics(self, aug2d, rng):
        # Az x + gz u - gamma z must reproduce the exact zdot for any u.
        count = 0
        while count < 200:
            x = rng.uniform([-1.5, -1.5], [4.5, 4.5])
            if aug2d.safety.min_margin(x) <= 0 or not chord_is_safe(
                aug2d.safety, x, min_clearance=0.05
            ):
                continue
            count += 1
            z = rng.normal(scale=0.3, size=1)
            u = rng.normal(scale=2.0, size=1)
            x_bar = aug2d.join(x, z)
            Az, gz = barrier_state_sdc(aug2d, x_bar)
            lhs = Az @ x + gz @ u - aug2d.gamma * z
            rhs = barrier_state_rhs(aug2d, x_bar, u)
            assert np.max(np.abs(lhs - rhs)) <= 1e-7

    def test_equilibrium(self, aug2d):
        Az, gz = barrier_state_sdc(aug2d, np.zeros(3))
        assert np.allclose(Az @ np.zeros(2) + gz @ np.zeros(1), 0.0)


class TestAugment:
    def test_block_structure_2d(self, aug2d):
        assert aug2d.n_bar == 3
        x_bar = np.array([0.5, -0.5, 0.1])
        A_bar, g_bar = aug2d.matrices(x_bar)
        assert np.array_equal(A_bar[:2, :2], np.array([[1.0, -5.0], [0.0, -1.0]]))
        assert np.array_equal(A_bar[:2, 2:], np.zeros((2, 1)))
        assert A_bar[2, 2] == -aug2d.gamma
        assert g_bar.shape == (3, 1)

    def test_origin_is_equilibrium(self, aug2d):
        A_bar, _ = aug2d.matrices(np.zeros(3))
        assert np.allclose(A_bar @ np.zeros(3), 0.0)

    def test_quadrotor_barrier_state_counts(self, quadrotor):
        obstacles = [
            circle_obstacle([1.0 + i, 3.0], 0.3) for i in range(5)
        ]
        per = augment(quadrotor, SafetySpec(obstacles), get_barrier("inverse"))
        assert per.n_bar == 11
        agg = augment(
            quadrotor, SafetySpec(obstacles, mode="aggregated"), get_barrier("inverse")
        )
        assert agg.n_bar == 7

    def test_origin_inside_obstacle_rejected(self, linear2d):
        bad = SafetySpec([circle_obstacle([0.1, 0.0], 0.5)])
        with pytest.raises(OriginUnsafe):
            augment(linear2d, bad, get_barrier("inverse"))

    def test_nonpositive_gamma_rejected(self, linear2d, safety2d):
        with pytest.raises(ValueError):
            augment(linear2d, safety2d, get_barrier("inverse"), gamma=0.0)

    def test_initial_state_zero_residual(self, aug2d):
        x0 = np.array([4.0, 1.0])
        x_bar = aug2d.initial_state(x0)
        beta = barrier_value(aug2d.safety, aug2d.barrier, x0)
        assert np.allclose(x_bar[2:] + aug2d.beta0 - beta, 0.0, atol=1e-16)


class TestAggregatedMode:
    def test_aggregate_value(self, linear2d):
        cons = [circle_obstacle([2.0, 2.0], 0.5), circle_obstacle([-2.0, 1.0], 0.4)]
        spec = SafetySpec(cons, mode="aggregated")
        x = np.array([0.3, -0.2])
        h1, h2 = (c.h(x) for c in cons)
        assert spec.effective_h(x)[0] == pytest.approx(1.0 / (1.0 / h1 + 1.0 / h2))
        assert spec.q == 1

    def test_aggregate_gradient_matches_fd(self, rng):
        cons = [circle_obstacle([2.0, 2.0], 0.5), circle_obstacle([-2.0, 1.0], 0.4)]
        spec = SafetySpec(cons, mode="aggregated")
        for _ in range(20):
            x = rng.uniform([-1.0, -1.0], [1.5, 1.5])
            if spec.min_margin(x) <= 0:
                continue
            grad = spec.effective_grad(x)[0]
            num = central_gradient(lambda y: spec.effective_h(y)[0], x)
            assert np.max(np.abs(grad - num)) <= 1e-6 * max(1.0, np.max(np.abs(grad)))

    def test_aggregated_factorization_identity(self, linear2d, rng):
        cons = [circle_obstacle([2.0, 2.0], 0.5), circle_obstacle([-2.0, 1.0], 0.4)]
        spec = SafetySpec(cons, mode="aggregated")
        bar = inverse_barrier()
        count = 0
        while count < 50:
            x = rng.uniform([-1.0, -1.0], [3.0, 3.0])
            if spec.min_margin(x) <= 0 or not chord_is_safe(spec, x, min_clearance=0.05):
                continue
            count += 1
            lhs = beta_tilde(spec, bar, x) @ x
            rhs = barrier_value(spec, bar, x) - barrier_value(spec, bar, np.zeros(2))
            assert np.max(np.abs(lhs - rhs)) <= 1e-7 * max(1.0, np.max(np.abs(rhs)))


def test_constraint_gradients_match_fd(safety2d, rng):
    for _ in range(50):
        x = rng.uniform([-2.0, -2.0], [5.0, 5.0])
        if safety2d.min_margin(x) <= 0:
            continue
        for con in safety2d.constraints:
            g = con.grad_h(x)
            num = central_gradient(con.h, x)
            assert np.max(np.abs(g - num)) <= 1e-6 * max(1.0, np.max(np.abs(g)))
