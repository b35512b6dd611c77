"""Dynamical-system models b(x) with matrix-free Jacobian actions.

A model bundles the drift b, optionally its analytic Jacobian action
J(x) v and adjoint action J(x)^T w, and named landmark points (fixed
points used by the command line and the test suite).  Directional
derivatives fall back to central finite differences; the adjoint action
falls back to transposing a dense finite-difference Jacobian, which is
only permitted for small systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import UnsupportedOperationError

# Largest dimension for which a dense Jacobian may be assembled.  Models
# beyond this must ship analytic actions.
DENSE_JACOBIAN_MAX_DIM = 64

_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True)
class VectorFieldModel:
    """A smooth vector field b: R^dim -> R^dim.

    ``analytic_jvp(x, v)`` must return Db(x) v and ``analytic_vjp(x, w)``
    must return Db(x)^T w when provided.  ``symmetric_jacobian`` marks
    fields whose Jacobian is symmetric everywhere (gradient flows), in
    which case the adjoint action is served by the forward action.
    Models are immutable and safe to share between threads.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    name: str = "model"
    analytic_jvp: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    analytic_vjp: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    symmetric_jacobian: bool = False
    landmarks: Mapping[str, np.ndarray] = field(default_factory=dict)
    # optional fused actions (b(x), Db(x) v) / (b(x), Db(x)^T w) for hot
    # loops that need both; semantics must match the separate calls
    eval_and_jvp: Callable | None = None
    eval_and_vjp: Callable | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")


@dataclass(frozen=True)
class Direction:
    """A unit vector tagged with its role in the dynamics.

    convention: "right" for eigenvector-like directions v, "left" for
    adjoint directions w, "momentum" for the normalized momentum u.
    """

    components: np.ndarray
    convention: str = "right"

    @classmethod
    def unit(cls, vec, convention: str = "right") -> "Direction":
        vec = np.asarray(vec, dtype=float)
        nrm = float(np.linalg.norm(vec))
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValueError("direction vector must be nonzero and finite")
        return cls(vec / nrm, convention)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


def _as_position(model: VectorFieldModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(
            f"position has shape {x.shape}, expected ({model.dim},) for model '{model.name}'"
        )
    return x


def eval_b(model: VectorFieldModel, x) -> np.ndarray:
    """Evaluate the drift b(x)."""
    x = _as_position(model, x)
    b = np.asarray(model.eval(x), dtype=float)
    if b.shape != (model.dim,):
        raise ValueError(
            f"model '{model.name}' returned drift of shape {b.shape}, expected ({model.dim},)"
        )
    return b


def default_fd_step(x: np.ndarray) -> float:
    """Central-difference step: cbrt(eps) * (1 + |x|_inf)."""
    return _CBRT_EPS * (1.0 + float(np.max(np.abs(x))))


def jvp(model: VectorFieldModel, x, v, h: float | None = None) -> np.ndarray:
    """Jacobian-vector product Db(x) v.

    Uses the model's analytic action when present, otherwise the central
    difference (b(x + h v/|v|) - b(x - h v/|v|)) / (2h) * |v|.
    """
    x = _as_position(model, x)
    v = np.asarray(v, dtype=float)
    if v.shape != (model.dim,):
        raise ValueError(f"direction has shape {v.shape}, expected ({model.dim},)")
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        raise ValueError("jvp direction must be nonzero")
    if model.analytic_jvp is not None:
        return np.asarray(model.analytic_jvp(x, v), dtype=float)
    if h is None:
        h = default_fd_step(x)
    vhat = v / vnorm
    bp = eval_b(model, x + h * vhat)
    bm = eval_b(model, x - h * vhat)
    return (bp - bm) * (vnorm / (2.0 * h))


def vjp(model: VectorFieldModel, x, w) -> np.ndarray:
    """Adjoint action Db(x)^T w.

    Served analytically when the model provides it (or has a symmetric
    Jacobian); otherwise obtained by transposing a dense finite-difference
    Jacobian, which is refused above ``DENSE_JACOBIAN_MAX_DIM``.
    """
    x = _as_position(model, x)
    w = np.asarray(w, dtype=float)
    if w.shape != (model.dim,):
        raise ValueError(f"direction has shape {w.shape}, expected ({model.dim},)")
    if model.analytic_vjp is not None:
        return np.asarray(model.analytic_vjp(x, w), dtype=float)
    if model.symmetric_jacobian:
        return jvp(model, x, w)
    if model.dim > DENSE_JACOBIAN_MAX_DIM:
        raise UnsupportedOperationError(
            f"model '{model.name}' (dim={model.dim}) has no analytic adjoint action and is "
            f"too large for a dense finite-difference transpose (limit {DENSE_JACOBIAN_MAX_DIM})"
        )
    return dense_jacobian(model, x).T @ w


def dense_jacobian(model: VectorFieldModel, x, h: float | None = None) -> np.ndarray:
    """Assemble Db(x) column by column from Jacobian-vector products."""
    x = _as_position(model, x)
    if model.dim > DENSE_JACOBIAN_MAX_DIM:
        raise UnsupportedOperationError(
            f"dense Jacobian refused for dim={model.dim} > {DENSE_JACOBIAN_MAX_DIM}"
        )
    J = np.empty((model.dim, model.dim))
    eye = np.eye(model.dim)
    for j in range(model.dim):
        J[:, j] = jvp(model, x, eye[j], h=h)
    return J


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

def _saturating_pull(x):
    """Gamma_i(x) = 1 / (1 + (x_i - 5)^2), acting componentwise."""
    u = x - 5.0
    return 1.0 / (1.0 + u * u)


def _saturating_pull_deriv(x):
    """d Gamma_i / d x_i = -2 (x_i - 5) / (1 + (x_i - 5)^2)^2."""
    u = x - 5.0
    q = 1.0 / (1.0 + u * u)
    return -2.0 * u * q * q


def _coupled_well_model(D: np.ndarray, sigma_sq: float, name: str,
                        landmarks: Mapping[str, np.ndarray]) -> VectorFieldModel:
    D = np.asarray(D, dtype=float)
    DT = np.ascontiguousarray(D.T)
    half_sig = 0.5 * sigma_sq

    def drift(x):
        return -(D @ x) + half_sig * _saturating_pull(x)

    # Db(x) = -D + (sigma^2/2) diag(Gamma'); the diagonal part acts
    # componentwise, so neither action assembles a matrix.
    def jvp_fn(x, v):
        return -(D @ v) + (half_sig * _saturating_pull_deriv(x)) * v

    def vjp_fn(x, w):
        return -(DT @ w) + (half_sig * _saturating_pull_deriv(x)) * w

    def drift_and_jvp(x, v):
        u = x - 5.0
        q = 1.0 / (1.0 + u * u)
        b = -(D @ x) + half_sig * q
        jv = -(D @ v) + (-2.0 * half_sig) * (u * q * q) * v
        return b, jv

    def drift_and_vjp(x, w):
        u = x - 5.0
        q = 1.0 / (1.0 + u * u)
        b = -(D @ x) + half_sig * q
        jtw = -(DT @ w) + (-2.0 * half_sig) * (u * q * q) * w
        return b, jtw

    return VectorFieldModel(
        dim=2,
        eval=drift,
        name=name,
        analytic_jvp=jvp_fn,
        analytic_vjp=vjp_fn,
        eval_and_jvp=drift_and_jvp,
        eval_and_vjp=drift_and_vjp,
        landmarks={k: np.asarray(p, dtype=float) for k, p in landmarks.items()},
    )


def model_example1() -> VectorFieldModel:
    """Planar non-gradient field b_i(x) = -sum_j D_ij x_j + (sigma^2/2) Gamma_i(x)
    with sigma^2 = 10, D = [[0.8, -0.3], [-0.2, 0.5]].

    Two stable fixed points (m1, m2) separated by a unique index-1 saddle s.
    """
    return _coupled_well_model(
        D=[[0.8, -0.3], [-0.2, 0.5]],
        sigma_sq=10.0,
        name="example1",
        landmarks={
            "m1": [0.5931, 0.7655],
            "m2": [5.8770, 6.2507],
            "s": [1.7954, 3.3088],
        },
    )


def model_example2_effective() -> VectorFieldModel:
    """Closed-form averaged drift of the slow-fast benchmark: same form as
    ``model_example1`` but with D = [[0.8, -0.2], [-0.2, 0.5]].

    Three stable fixed points and two saddles; serves as the deterministic
    oracle for the multiscale searches.
    """
    return _coupled_well_model(
        D=[[0.8, -0.2], [-0.2, 0.5]],
        sigma_sq=10.0,
        name="example2-effective",
        landmarks={
            "m1": [0.4643, 0.6985],
            "m2": [2.2038, 5.9804],
            "m3": [5.7109, 6.2369],
            "s1": [1.2842, 3.4484],
            "s2": [3.5689, 6.0735],
        },
    )


def model_from_gradient(potential: Callable[[np.ndarray], float],
                        grad: Callable[[np.ndarray], np.ndarray],
                        dim: int, name: str = "gradient") -> VectorFieldModel:
    """Wrap a potential as the descent field b = -grad V.

    The Jacobian -Hess V is symmetric, so the adjoint action is the forward
    action and both simplified dynamics coincide on such models.
    """
    del potential  # kept in the signature for symmetry with user code

    def drift(x):
        return -np.asarray(grad(x), dtype=float)

    return VectorFieldModel(dim=dim, eval=drift, name=name, symmetric_jacobian=True)


def linear_model(A, name: str = "linear",
                 landmarks: Mapping[str, np.ndarray] | None = None) -> VectorFieldModel:
    """b(x) = A x with exact analytic actions; fixed point at the origin."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    marks = {"origin": np.zeros(A.shape[0])}
    if landmarks:
        marks.update({k: np.asarray(p, dtype=float) for k, p in landmarks.items()})
    AT = np.ascontiguousarray(A.T)
    return VectorFieldModel(
        dim=A.shape[0],
        eval=lambda x: A @ x,
        name=name,
        analytic_jvp=lambda x, v: A @ v,
        analytic_vjp=lambda x, w: AT @ w,
        eval_and_jvp=lambda x, v: (A @ x, A @ v),
        eval_and_vjp=lambda x, w: (A @ x, AT @ w),
        landmarks=marks,
    )


MODEL_ZOO: dict[str, Callable[[], VectorFieldModel]] = {
    "example1": model_example1,
    "example2-effective": model_example2_effective,
}


def get_model(name: str) -> VectorFieldModel:
    """Look up a built-in model by name."""
    try:
        return MODEL_ZOO[name]()
    except KeyError:
        raise ValueError(
            f"unknown model '{name}'; available: {', '.join(sorted(MODEL_ZOO))}"
        ) from None
