import numpy as np
import pytest

from gadkit.errors import UnsupportedOperationError
from gadkit.vectorfield import (
    VectorFieldModel,
    dense_jacobian,
    eval_b,
    get_model,
    jvp,
    linear_model,
    model_example1,
    model_example2_effective,
    model_from_gradient,
    vjp,
)

# analytic Jacobian of the coupled-well drift, derived independently of the
# model code: Db = -D + (sigma^2/2) * diag(-2(x_i - 5) / (1 + (x_i - 5)^2)^2)
D1 = np.array([[0.8, -0.3], [-0.2, 0.5]])


def oracle_jacobian_example1(x):
    u = x - 5.0
    gamma_prime = -2.0 * u / (1.0 + u * u) ** 2
    return -D1 + 5.0 * np.diag(gamma_prime)


def fd_dense_jacobian(model, x, h=1e-6):
    J = np.zeros((model.dim, model.dim))
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = h
        J[:, j] = (eval_b(model, x + e) - eval_b(model, x - e)) / (2.0 * h)
    return J


class TestEvalB:
    def test_fixed_points_of_example1(self):
        m = model_example1()
        for name in ("m1", "m2", "s"):
            b = eval_b(m, m.landmarks[name])
            assert np.max(np.abs(b)) < 5e-4, name

    def test_linear_field(self):
        m = linear_model([[1.0, 0.0], [0.0, -1.0]])
        assert np.allclose(eval_b(m, [2.0, 3.0]), [2.0, -3.0], atol=0, rtol=0)

    def test_dimension_mismatch(self):
        m = model_example1()
        with pytest.raises(ValueError, match="shape"):
            eval_b(m, [1.0, 2.0, 3.0])


class TestJvp:
    def test_finite_difference_exact_on_linear(self):
        A = np.array([[0.3, -1.2], [0.7, 2.0]])
        m = VectorFieldModel(dim=2, eval=lambda x: A @ x, name="lin-fd")
        for h in (1e-2, 1e-5, None):
            got = jvp(m, [0.4, -0.9], [1.0, 2.0], h=h)
            assert np.allclose(got, A @ [1.0, 2.0], atol=1e-9)

    def test_fd_matches_analytic_column_at_saddle(self):
        m = model_example1()
        s = m.landmarks["s"]
        fd_model = VectorFieldModel(dim=2, eval=m.eval, name="example1-fd")
        got = jvp(fd_model, s, [1.0, 0.0])
        expected = oracle_jacobian_example1(s)[:, 0]
        assert np.max(np.abs(got - expected)) < 1e-8

    def test_gradient_model_identity_hessian(self):
        m = model_from_gradient(lambda x: 0.5 * np.dot(x, x), lambda x: x, dim=3)
        v = np.array([0.2, -1.0, 0.5])
        assert np.allclose(jvp(m, np.ones(3), v), -v, atol=1e-9)

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            jvp(model_example1(), [1.0, 1.0], [0.0, 0.0])

    def test_fd_convergence_order(self):
        # central difference should show second-order decay under h-halving
        m = model_example1()
        fd_model = VectorFieldModel(dim=2, eval=m.eval, name="example1-fd")
        x = np.array([1.3, 2.1])
        v = np.array([0.6, -0.8])
        exact = oracle_jacobian_example1(x) @ v
        errs = [np.max(np.abs(jvp(fd_model, x, v, h=h) - exact))
                for h in (2e-2, 1e-2, 5e-3)]
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 1.8, (errs, orders)

    def test_fused_action_consistent(self):
        m = model_example1()
        x = np.array([2.0, 0.5])
        v = np.array([-0.3, 1.1])
        b, jv = m.eval_and_jvp(x, v)
        assert np.array_equal(b, eval_b(m, x))
        assert np.allclose(jv, jvp(m, x, v), atol=1e-14)


class TestVjp:
    def test_symmetric_model_equals_jvp(self):
        m = model_from_gradient(lambda x: np.sum(np.cos(x)), lambda x: -np.sin(x), dim=2)
        x = np.array([0.3, -0.7])
        w = np.array([1.0, 2.0])
        assert np.array_equal(vjp(m, x, w), jvp(m, x, w))

    def test_explicit_transpose_on_linear(self):
        m = VectorFieldModel(dim=2, eval=lambda x: np.array([[0.0, 1.0], [0.0, 0.0]]) @ x,
                             name="shear")
        assert np.allclose(vjp(m, [0.0, 0.0], [1.0, 0.0]), [0.0, 1.0], atol=1e-9)

    def test_adjoint_identity_against_fd_jacobian(self):
        m = model_example1()
        s = m.landmarks["s"]
        rng = np.random.default_rng(42)
        for _ in range(5):
            v = rng.standard_normal(2)
            w = rng.standard_normal(2)
            lhs = np.dot(w, jvp(m, s, v))
            rhs = np.dot(vjp(m, s, w), v)
            assert abs(lhs - rhs) < 1e-8
            # and both agree with an independent dense FD Jacobian
            J = fd_dense_jacobian(m, s)
            assert abs(lhs - w @ J @ v) < 1e-6

    def test_unsupported_above_dense_threshold(self):
        dim = 80
        m = VectorFieldModel(dim=dim, eval=lambda x: -x, name="big")
        with pytest.raises(UnsupportedOperationError):
            vjp(m, np.zeros(dim), np.ones(dim))


class TestDenseJacobian:
    def test_linear_reproduced_exactly(self):
        A = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0], [0.0, 0.0, 2.0]])
        m = VectorFieldModel(dim=3, eval=lambda x: A @ x, name="lin")
        assert np.allclose(dense_jacobian(m, np.ones(3)), A, atol=1e-8)

    def test_example1_saddle_has_one_positive_eigenvalue(self):
        m = model_example1()
        J = dense_jacobian(m, m.landmarks["s"])
        # 2x2 quadratic formula as the independent oracle
        tr, det = np.trace(J), np.linalg.det(J)
        disc = tr * tr - 4.0 * det
        assert disc > 0
        roots = [(tr + np.sqrt(disc)) / 2.0, (tr - np.sqrt(disc)) / 2.0]
        assert sum(r > 0 for r in roots) == 1

    def test_example2_minimum_is_stable(self):
        m = model_example2_effective()
        J = dense_jacobian(m, m.landmarks["m1"])
        tr, det = np.trace(J), np.linalg.det(J)
        disc = tr * tr - 4.0 * det
        roots = [(tr + np.sqrt(disc)) / 2.0, (tr - np.sqrt(disc)) / 2.0]
        assert all(r < 0 for r in roots)

    def test_threshold(self):
        m = VectorFieldModel(dim=100, eval=lambda x: -x, name="big")
        with pytest.raises(UnsupportedOperationError):
            dense_jacobian(m, np.zeros(100))


class TestAdjointIdentityProperty:
    @pytest.mark.parametrize("factory", [model_example1, model_example2_effective])
    def test_zoo_models(self, factory):
        m = factory()
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.uniform(-2.0, 8.0, 2)
            v = rng.standard_normal(2)
            w = rng.standard_normal(2)
            lhs = np.dot(w, jvp(m, x, v))
            rhs = np.dot(vjp(m, x, w), v)
            tol = 1e-10 * (1.0 + np.linalg.norm(v) * np.linalg.norm(w) * np.linalg.norm(x))
            assert abs(lhs - rhs) <= tol


def test_zoo_lookup():
    assert get_model("example1").name == "example1"
    assert get_model("example2-effective").dim == 2
    with pytest.raises(ValueError, match="unknown model"):
        get_model("nope")
