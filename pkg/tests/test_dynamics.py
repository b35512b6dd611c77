import numpy as np
import pytest
from scipy.linalg import expm

from gadkit.dynamics import (
    Direction,
    GadOptions,
    GadState,
    find_saddle,
    reconstruct_hamiltonian,
    rhs_hamilton_normalized,
    rhs_original,
    rhs_simplified_v,
    rhs_simplified_w,
    step_rk4,
)
from gadkit.errors import DegenerateProjectorError, NumericalBlowupError, UnsupportedOperationError
from gadkit.vectorfield import (
    VectorFieldModel,
    linear_model,
    model_example1,
    model_from_gradient,
    eval_b,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


GRADIENT_MODEL = model_from_gradient(
    lambda x: 0.25 * np.sum((1 - x ** 2) ** 2), lambda x: -x * (1 - x ** 2), dim=2,
    name="double-well")


class TestSimplifiedV:
    def test_fixed_point_condition(self):
        # at (x_s, v_eig) with b = 0 and J v = lam v both components vanish
        m = linear_model(np.diag([2.0, -1.0]))
        dx, dv = rhs_simplified_v(m, [0.0, 0.0], [1.0, 0.0])
        assert np.allclose(dx, 0.0, atol=1e-14)
        assert np.allclose(dv, 0.0, atol=1e-14)

    def test_gradient_model_matches_w_form(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(-2, 2, 2)
            v = unit(rng.standard_normal(2))
            dxv, dvv = rhs_simplified_v(GRADIENT_MODEL, x, v)
            dxw, dww = rhs_simplified_w(GRADIENT_MODEL, x, v)
            assert np.max(np.abs(dxv - dxw)) <= 1e-12
            assert np.max(np.abs(dvv - dww)) <= 1e-12

    def test_reflection_with_coordinate_direction(self):
        m = model_example1()
        x = np.array([1.0, 1.0])
        b = eval_b(m, x)
        dx, _ = rhs_simplified_v(m, x, [1.0, 0.0])
        assert np.allclose(dx, [-b[0], b[1]], atol=1e-14)

    def test_non_unit_direction_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            rhs_simplified_v(model_example1(), [1.0, 1.0], [1.0, 1.0])


class TestSimplifiedW:
    def test_symmetric_jacobian_identical_to_v(self):
        x = np.array([0.4, -0.2])
        v = unit([3.0, 1.0])
        assert np.allclose(rhs_simplified_w(GRADIENT_MODEL, x, v)[1],
                           rhs_simplified_v(GRADIENT_MODEL, x, v)[1], atol=1e-14)

    def test_left_eigenvector_fixed_point(self):
        A = np.array([[2.0, 1.0], [0.0, -1.0]])
        m = linear_model(A)
        # left eigenvector for lam = 2: A^T w = 2 w
        w = unit([3.0, 1.0])
        assert np.allclose(A.T @ w, 2.0 * w)
        dx, dw = rhs_simplified_w(m, [0.0, 0.0], w)
        assert np.allclose(dx, 0.0, atol=1e-14)
        assert np.allclose(dw, 0.0, atol=1e-14)

    def test_unsupported_transpose_action(self):
        m = VectorFieldModel(dim=80, eval=lambda x: -x, name="big")
        with pytest.raises(UnsupportedOperationError):
            rhs_simplified_w(m, np.zeros(80), unit(np.ones(80)))


class TestOriginal:
    def test_w_equals_v_reduces_to_simplified(self):
        m = model_example1()
        x = np.array([2.0, 1.5])
        v = unit([1.0, 2.0])
        dx_orig, _, _ = rhs_original(m, x, v, v)
        dx_simple, _ = rhs_simplified_v(m, x, v)
        assert np.allclose(dx_orig, dx_simple, atol=1e-13)

    def test_eigenpair_fixed_point(self):
        A = np.array([[2.0, 1.0], [0.0, -1.0]])
        m = linear_model(A)
        v = unit([1.0, 0.0])          # right eigenvector, lam = 2
        w_raw = np.array([3.0, 1.0])  # left eigenvector, lam = 2
        w = w_raw / np.dot(w_raw, v)  # <w, v> = 1 normalization
        dx, dv, dw = rhs_original(m, [0.0, 0.0], v, w)
        for part in (dx, dv, dw):
            assert np.allclose(part, 0.0, atol=1e-13)

    def test_degenerate_projector(self):
        m = model_example1()
        with pytest.raises(DegenerateProjectorError):
            rhs_original(m, [1.0, 1.0], [1.0, 0.0], [0.0, 1.0])


class TestHamilton:
    def test_sign_flip_of_w_form(self):
        m = model_example1()
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.uniform(0, 6, 2)
            u = unit(rng.standard_normal(2))
            _, du = rhs_hamilton_normalized(m, x, u)
            _, dw = rhs_simplified_w(m, x, u, relaxation=1.0)
            assert np.max(np.abs(du + dw)) <= 1e-13

    def test_reconstructed_hamiltonian_zero(self):
        m = model_example1()
        rng = np.random.default_rng(12)
        for _ in range(50):
            x = rng.uniform(-1, 8, 2)
            u = unit(rng.standard_normal(2))
            assert abs(reconstruct_hamiltonian(m, x, u)) <= 1e-12

    def test_positive_overlap_branch(self):
        m = model_example1()
        x = np.array([1.0, 1.0])
        b = eval_b(m, x)
        u = unit(b)  # <b, u> > 0: momentum collapses to zero
        assert reconstruct_hamiltonian(m, x, u) == 0.0

    def test_fixed_point_gives_zero(self):
        m = linear_model(np.diag([1.0, -1.0]))
        assert reconstruct_hamiltonian(m, [0.0, 0.0], [1.0, 0.0]) == 0.0


class TestStepRk4:
    def test_zero_rhs_keeps_state(self):
        m = model_example1()

        def still(x, d, e, relaxation):
            return np.zeros_like(x), np.zeros_like(d), None

        state = GadState(x=np.array([1.0, 2.0]), dir=Direction(unit([1.0, 1.0])))
        out = step_rk4(still, m, state, dt=0.1)
        assert np.array_equal(out.x, state.x)
        assert np.allclose(out.dir.components, state.dir.components, atol=1e-16)

    def test_fourth_order_on_linear_system(self):
        A = np.array([[0.0, 1.0], [-2.0, -0.3]])
        m = linear_model(A)

        def lin(x, d, e, relaxation):
            return A @ x, np.zeros_like(d), None

        x0 = np.array([1.0, -0.5])
        t_final = 0.5
        exact = expm(A * t_final) @ x0

        def endpoint_error(dt):
            state = GadState(x=x0.copy(), dir=Direction(np.array([1.0, 0.0])))
            for k in range(int(round(t_final / dt))):
                state = step_rk4(lin, m, state, dt)
            return np.max(np.abs(state.x - exact))

        errs = [endpoint_error(dt) for dt in (0.05, 0.025, 0.0125)]
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 3.8, (errs, orders)

    def test_direction_norm_exactly_one(self):
        m = model_example1()
        state = GadState(x=np.array([1.0, 2.0]), dir=Direction(unit([2.0, 1.0])))
        out = step_rk4("simplified-v", m, state, dt=1e-3, opts=GadOptions())
        assert abs(np.linalg.norm(out.dir.components) - 1.0) <= 1e-12

    def test_original_dual_normalization(self):
        m = model_example1()
        d = unit([1.0, 0.3])
        state = GadState(x=np.array([1.0, 2.0]), dir=Direction(d), dir2=d.copy())
        out = step_rk4("original", m, state, dt=1e-3, opts=GadOptions())
        assert abs(np.linalg.norm(out.dir.components) - 1.0) <= 1e-12
        assert abs(np.dot(out.dir2, out.dir.components) - 1.0) <= 1e-8

    def test_blowup_raises(self):
        stiff = linear_model(np.diag([1e9, 1e9]))

        # huge dt on a huge eigenvalue overflows within a few steps
        def runaway(x, d, e, relaxation):
            return 1e160 * x + 1e160, np.zeros_like(d), None

        state = GadState(x=np.array([1.0, 1.0]), dir=Direction(unit([1.0, 0.0])))
        with pytest.raises(NumericalBlowupError):
            s = state
            for _ in range(5):
                s = step_rk4(runaway, stiff, s, dt=1e3)


class TestInvariants:
    @pytest.mark.parametrize("rhs,needs_relax", [
        (rhs_simplified_v, True),
        (rhs_simplified_w, True),
        (rhs_hamilton_normalized, False),
    ])
    def test_sphere_tangency(self, rhs, needs_relax):
        m = model_example1()
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.uniform(-1, 8, 2)
            v = unit(rng.standard_normal(2))
            out = rhs(m, x, v, 1.7) if needs_relax else rhs(m, x, v)
            assert abs(np.dot(v, out[1])) <= 1e-12

    def test_reflection_identity(self):
        m = model_example1()
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.uniform(-1, 8, 2)
            v = unit(rng.standard_normal(2))
            b = eval_b(m, x)
            dx, _ = rhs_simplified_v(m, x, v)
            assert abs(np.dot(dx, v) + np.dot(b, v)) <= 1e-12 * (1 + np.linalg.norm(b))

    def test_sign_symmetry_of_rhs(self):
        m = model_example1()
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = rng.uniform(0, 7, 2)
            v = unit(rng.standard_normal(2))
            dx1, dv1 = rhs_simplified_v(m, x, v)
            dx2, dv2 = rhs_simplified_v(m, x, -v)
            assert np.max(np.abs(dx1 - dx2)) <= 1e-13
            assert np.max(np.abs(dv1 + dv2)) <= 1e-13

    def test_find_saddle_sign_symmetric(self):
        # quick synthetic index-1 field: saddle at origin
        m = linear_model(np.array([[1.0, 0.2], [0.1, -2.0]]))
        opts = GadOptions(dt=5e-3, max_steps=20_000, residual_tol=1e-10)
        r_plus = find_saddle(m, [0.4, 0.3], [1.0, 0.0], opts)
        r_minus = find_saddle(m, [0.4, 0.3], [-1.0, 0.0], opts)
        assert r_plus.converged and r_minus.converged
        assert np.allclose(r_plus.x_star, r_minus.x_star, atol=1e-9)
        assert np.allclose(np.abs(np.dot(r_plus.dir_star.components,
                                         r_minus.dir_star.components)), 1.0, atol=1e-9)


class TestFindSaddle:
    def test_converges_on_synthetic_saddle(self):
        A = np.array([[0.7, 0.1], [0.0, -1.2]])
        m = linear_model(A)
        res = find_saddle(m, [0.5, 0.5], [1.0, 0.0],
                          GadOptions(dt=5e-3, max_steps=50_000, residual_tol=1e-10))
        assert res.converged
        assert np.max(np.abs(res.x_star)) <= 1e-9
        assert res.eigen_estimate == pytest.approx(0.7, abs=1e-6)

    def test_kick_escapes_exact_fixed_point(self):
        # starting exactly on the saddle: kicked away, then returns
        A = np.diag([1.0, -1.0])
        m = linear_model(A)
        res = find_saddle(m, [0.0, 0.0], [1.0, 0.0],
                          GadOptions(dt=5e-3, max_steps=50_000, residual_tol=1e-10))
        assert res.converged
        assert np.max(np.abs(res.x_star)) <= 1e-9

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            find_saddle(model_example1(), [1.0, 1.0], [0.0, 0.0])

    def test_non_convergence_flagged(self):
        m = linear_model(np.diag([1.0, -1.0]))
        res = find_saddle(m, [0.3, 0.4], [1.0, 0.0],
                          GadOptions(dt=1e-4, max_steps=10, residual_tol=1e-14))
        assert not res.converged
        assert res.steps == 10

    def test_trajectory_recording(self):
        m = linear_model(np.diag([1.0, -1.0]))
        res = find_saddle(m, [0.3, 0.4], [1.0, 0.0],
                          GadOptions(dt=5e-3, max_steps=5_000, residual_tol=1e-9),
                          record_every=100)
        assert res.trajectory is not None
        steps = [row[0] for row in res.trajectory]
        assert steps[0] == 0 and steps[-1] == res.steps
        # row layout: step, t, x, dir, residual_inf, rayleigh
        row = res.trajectory[0]
        assert row[2].shape == (2,) and row[3].shape == (2,)


class TestGadOptions:
    @pytest.mark.parametrize("kwargs", [
        dict(dt=0.0), dict(dt=-1.0), dict(residual_tol=0.0),
        dict(relaxation=0.0), dict(max_steps=0), dict(kick=-0.1),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            GadOptions(**kwargs)
