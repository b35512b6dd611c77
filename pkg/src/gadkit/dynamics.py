"""Right-hand sides and the saddle-search driver.

Four coupled position/direction flows are provided:

* ``simplified-v`` — x follows the reflected drift (1 - 2 v v^T) b, the
  single direction v follows the projected Jacobian action.
* ``simplified-w`` — same position equation with the adjoint direction w
  driven by J^T; requires an adjoint action on the model.
* ``original`` — the three-variable flow with the oblique projector
  1 - 2 v w^T / <w, v> and both directions.
* ``hamilton`` — the momentum-normalized zero-energy Hamilton flow, which
  differs from ``simplified-w`` by the sign of the direction equation and
  admits no relaxation factor.  It has no stable steady state and serves
  as a diagnostic contrast.

Stable fixed points of the first three flows sit exactly at index-1
saddles of b, with the direction aligned to the corresponding
eigenvector.  The public ``rhs_*`` functions validate the unit-norm
precondition; the integrator evaluates the same formulas at the
slightly off-sphere Runge-Kutta stage points and renormalizes once per
step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjectorError, NumericalBlowupError
from .vectorfield import Direction, VectorFieldModel, eval_b, jvp, vjp

_UNIT_TOL = 1e-8


@dataclass
class GadOptions:
    """Integration controls.

    ``relaxation`` multiplies the direction equation (time-scale ratio
    between position and direction; ignored by the Hamilton flow).
    ``kick`` is the magnitude of the initial push used to leave a fixed
    point; None selects 1e-2 * (1 + |x0|_inf).
    """

    dt: float = 1e-3
    max_steps: int = 1_000_000
    residual_tol: float = 1e-8
    relaxation: float = 1.0
    kick: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.residual_tol <= 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.relaxation <= 0:
            raise ValueError(f"relaxation must be positive, got {self.relaxation}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.kick is not None and self.kick < 0:
            raise ValueError(f"kick must be >= 0, got {self.kick}")


@dataclass
class GadState:
    """Position plus one direction (and, for the original flow, the adjoint
    direction normalized by <dir2, dir> = 1 instead of by norm)."""

    x: np.ndarray
    dir: Direction
    dir2: np.ndarray | None = None


@dataclass
class SaddleResult:
    x_star: np.ndarray
    dir_star: Direction
    residual: float
    steps: int
    converged: bool
    eigen_estimate: float
    trajectory: list | None = None

    def __post_init__(self):
        if self.converged and not np.isfinite(self.residual):
            raise ValueError("converged result with non-finite residual")


def _check_unit(v: np.ndarray, label: str):
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > _UNIT_TOL:
        raise ValueError(f"{label} must be a unit vector (|{label}| = {nrm:.6e})")


# ---------------------------------------------------------------------------
# Model action closures: resolve the analytic-vs-finite-difference branch
# once per run instead of on every stage evaluation.
# ---------------------------------------------------------------------------

def _jvp_action(model: VectorFieldModel):
    if model.analytic_jvp is not None:
        return model.analytic_jvp
    return lambda x, v: jvp(model, x, v)


def _vjp_action(model: VectorFieldModel):
    if model.analytic_vjp is not None:
        return model.analytic_vjp
    if model.symmetric_jacobian:
        return _jvp_action(model)
    return lambda x, w: vjp(model, x, w)


# ---------------------------------------------------------------------------
# Raw right-hand sides (no unit-norm guard)
# ---------------------------------------------------------------------------

def _rhs_v_raw(model, x, v, relaxation, b_fn=None, jvp_fn=None):
    """v-form right-hand side.

    The direction equation deliberately omits a 1/|v|^2 factor: the
    unconstrained extension linearized at a fixed point then carries the
    -2 lambda eigenvalue along the radial direction instead of a
    spurious zero mode."""
    b = (b_fn or model.eval)(x)
    jv = (jvp_fn or _jvp_action(model))(x, v)
    dx = b - (2.0 * np.dot(b, v) / np.dot(v, v)) * v
    dv = relaxation * (jv - np.dot(v, jv) * v)
    return dx, dv


def _rhs_w_raw(model, x, w, relaxation, b_fn=None, vjp_fn=None):
    b = (b_fn or model.eval)(x)
    jtw = (vjp_fn or _vjp_action(model))(x, w)
    dx = b - (2.0 * np.dot(b, w) / np.dot(w, w)) * w
    dw = relaxation * (jtw - np.dot(w, jtw) * w)
    return dx, dw


def _rhs_orig_raw(model, x, v, w, relaxation, b_fn=None, jvp_fn=None, vjp_fn=None):
    wv = float(np.dot(w, v))
    if abs(wv) < 1e-12:
        raise DegenerateProjectorError(
            f"<w, v> = {wv:.3e}: the oblique projector is undefined")
    b = (b_fn or model.eval)(x)
    jv = (jvp_fn or _jvp_action(model))(x, v)
    jtw = (vjp_fn or _vjp_action(model))(x, w)
    alpha = float(np.dot(v, jv))
    beta = 2.0 * float(np.dot(w, jv)) - alpha
    dx = b - (2.0 * np.dot(b, w) / wv) * v
    dv = relaxation * (jv - alpha * v)
    dw = relaxation * (jtw - beta * w)
    return dx, dv, dw


def _rhs_ham_raw(model, x, u, b_fn=None, vjp_fn=None):
    b = (b_fn or model.eval)(x)
    jtu = (vjp_fn or _vjp_action(model))(x, u)
    dx = b - 2.0 * np.dot(b, u) * u
    du = -jtu + np.dot(u, jtu) * u
    return dx, du


# ---------------------------------------------------------------------------
# Public right-hand sides (validated)
# ---------------------------------------------------------------------------

def rhs_simplified_v(model: VectorFieldModel, x, v, relaxation: float = 1.0):
    """Reflected drift plus projected forward Jacobian action.

    dx = b - 2 <b, v> v / |v|^2,  dv = relaxation * (J v - <v, J v> v).
    """
    v = np.asarray(v, dtype=float)
    _check_unit(v, "v")
    x = np.asarray(x, dtype=float)
    eval_b(model, x)  # dimension validation
    return _rhs_v_raw(model, x, v, relaxation)


def rhs_simplified_w(model: VectorFieldModel, x, w, relaxation: float = 1.0):
    """As the v-form but with the adjoint direction: dw uses J^T w."""
    w = np.asarray(w, dtype=float)
    _check_unit(w, "w")
    x = np.asarray(x, dtype=float)
    eval_b(model, x)
    return _rhs_w_raw(model, x, w, relaxation)


def rhs_original(model: VectorFieldModel, x, v, w, relaxation: float = 1.0):
    """Three-variable flow with the oblique projector.

    dx = b - 2 (<b, w> / <w, v>) v,
    dv = relaxation * (J v - alpha v),    alpha = <v, J v>,
    dw = relaxation * (J^T w - beta w),   beta  = 2 <w, J v> - alpha,
    the multipliers holding <v, v> = <w, v> = 1 along the flow.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_unit(v, "v")
    x = np.asarray(x, dtype=float)
    eval_b(model, x)
    return _rhs_orig_raw(model, x, v, w, relaxation)


def rhs_hamilton_normalized(model: VectorFieldModel, x, u):
    """Momentum-normalized zero-energy Hamilton flow.

    dx = b - 2 <b, u> u,  du = -J^T u + <u, J^T u> u.  The direction
    equation has the opposite sign to the simplified w-form and carries
    no relaxation freedom.
    """
    u = np.asarray(u, dtype=float)
    _check_unit(u, "u")
    x = np.asarray(x, dtype=float)
    eval_b(model, x)
    return _rhs_ham_raw(model, x, u)


def reconstruct_hamiltonian(model: VectorFieldModel, x, u) -> float:
    """Hamiltonian H(x, p) = <b, p> + <p, p>/2 with the momentum rebuilt
    from the zero-energy condition: sqrt(l) = -2 <b, u>, p = sqrt(l) u.

    When <b, u> > 0 the only admissible branch is p = 0 and H = 0.  On
    the other branch the two terms cancel algebraically, so the returned
    value is a pure round-off diagnostic.
    """
    u = np.asarray(u, dtype=float)
    _check_unit(u, "u")
    b = eval_b(model, x)
    c = float(np.dot(b, u))
    if c > 0.0:
        return 0.0
    sqrt_l = -2.0 * c
    return c * sqrt_l + 0.5 * (sqrt_l * sqrt_l)


# ---------------------------------------------------------------------------
# Dynamics registry and stepping
# ---------------------------------------------------------------------------

def _pair_jvp(model: VectorFieldModel):
    """(b(x), J v) in one call, fused when the model provides it."""
    if model.eval_and_jvp is not None:
        return model.eval_and_jvp
    b_fn, jvp_fn = model.eval, _jvp_action(model)
    return lambda x, v: (b_fn(x), jvp_fn(x, v))


def _pair_vjp(model: VectorFieldModel):
    if model.eval_and_vjp is not None:
        return model.eval_and_vjp
    if model.eval_and_jvp is not None and model.symmetric_jacobian:
        return model.eval_and_jvp
    b_fn, vjp_fn = model.eval, _vjp_action(model)
    return lambda x, w: (b_fn(x), vjp_fn(x, w))


def _make_adapter(model: VectorFieldModel, dynamics):
    """Bind the per-run action closures.  Returns
    (f(x, d, d2, relaxation) -> (dx, dd, dd2 | None, b), convention,
    uses_dir2); the drift b rides along so the driver can check the
    residual without re-evaluating the model."""
    if callable(dynamics):
        def wrapped(x, d, e, relaxation):
            dx, dd, de = dynamics(x, d, e, relaxation)
            return dx, dd, de, None
        return wrapped, "right", False

    if dynamics == "simplified-v":
        pair = _pair_jvp(model)

        def f(x, d, e, relaxation):
            b, jv = pair(x, d)
            dx = b - (2.0 * np.dot(b, d) / np.dot(d, d)) * d
            dv = relaxation * (jv - np.dot(d, jv) * d)
            return dx, dv, None, b
        return f, "right", False

    if dynamics == "simplified-w":
        pair = _pair_vjp(model)

        def f(x, d, e, relaxation):
            b, jtw = pair(x, d)
            dx = b - (2.0 * np.dot(b, d) / np.dot(d, d)) * d
            dw = relaxation * (jtw - np.dot(d, jtw) * d)
            return dx, dw, None, b
        return f, "left", False

    if dynamics == "original":
        pair = _pair_jvp(model)
        vjp_fn = _vjp_action(model)

        def f(x, d, e, relaxation):
            wv = float(np.dot(e, d))
            if abs(wv) < 1e-12:
                raise DegenerateProjectorError(
                    f"<w, v> = {wv:.3e}: the oblique projector is undefined")
            b, jv = pair(x, d)
            jtw = vjp_fn(x, e)
            alpha = float(np.dot(d, jv))
            beta = 2.0 * float(np.dot(e, jv)) - alpha
            dx = b - (2.0 * np.dot(b, e) / wv) * d
            dv = relaxation * (jv - alpha * d)
            dw = relaxation * (jtw - beta * e)
            return dx, dv, dw, b
        return f, "right", True

    if dynamics == "hamilton":
        pair = _pair_vjp(model)

        def f(x, d, e, relaxation):
            b, jtu = pair(x, d)
            dx = b - 2.0 * np.dot(b, d) * d
            du = -jtu + np.dot(d, jtu) * d
            return dx, du, None, b
        return f, "momentum", False

    raise ValueError(
        f"unknown dynamics '{dynamics}'; available: {', '.join(sorted(DYNAMICS))}")


DYNAMICS = ("simplified-v", "simplified-w", "original", "hamilton")


def _rk4_core(f, x0, d0, e0, dt, relaxation, uses_dir2, k1=None):
    """One RK4 step on raw arrays, then renormalize the direction(s).
    ``k1`` may carry a precomputed first-stage evaluation."""
    k1x, k1d, k1e = (k1 or f(x0, d0, e0, relaxation))[:3]
    half = 0.5 * dt
    k2x, k2d, k2e = f(x0 + half * k1x, d0 + half * k1d,
                      None if e0 is None else e0 + half * k1e, relaxation)[:3]
    k3x, k3d, k3e = f(x0 + half * k2x, d0 + half * k2d,
                      None if e0 is None else e0 + half * k2e, relaxation)[:3]
    k4x, k4d, k4e = f(x0 + dt * k3x, d0 + dt * k3d,
                      None if e0 is None else e0 + dt * k3e, relaxation)[:3]
    sixth = dt / 6.0
    x1 = x0 + sixth * (k1x + 2.0 * (k2x + k3x) + k4x)
    d1 = d0 + sixth * (k1d + 2.0 * (k2d + k3d) + k4d)
    e1 = None
    if e0 is not None:
        e1 = e0 + sixth * (k1e + 2.0 * (k2e + k3e) + k4e)

    # a non-finite component makes the squared norms non-finite
    probe = np.dot(x1, x1) + (0.0 if e1 is None else np.dot(e1, e1))
    dnorm_sq = float(np.dot(d1, d1))
    if not np.isfinite(probe + dnorm_sq):
        raise NumericalBlowupError("non-finite state after RK4 step")

    dnorm = np.sqrt(dnorm_sq)
    if dnorm == 0.0:
        raise NumericalBlowupError("direction collapsed to zero during RK4 step")
    d1 = d1 / dnorm
    if uses_dir2 and e1 is not None:
        e_dot_d = float(np.dot(e1, d1))
        if abs(e_dot_d) < 1e-12:
            raise DegenerateProjectorError(
                "adjoint direction became orthogonal to the primary direction")
        e1 = e1 / e_dot_d
    return x1, d1, e1


def step_rk4(dynamics, model: VectorFieldModel, state: GadState, dt: float,
             opts: GadOptions | None = None, step_index: int | None = None) -> GadState:
    """One classical Runge-Kutta step of the coupled (x, dir[, dir2])
    system, followed by renormalization: |dir| = 1 and, for the original
    flow, <dir2, dir> = 1.

    ``dynamics`` is a registry name or a callable
    (x, d, d2, relaxation) -> (dx, dd, dd2 or None).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    relaxation = opts.relaxation if opts is not None else 1.0
    f, convention, uses_dir2 = _make_adapter(model, dynamics)
    x0 = np.asarray(state.x, dtype=float)
    d0 = np.asarray(state.dir.components, dtype=float)
    e0 = None if state.dir2 is None else np.asarray(state.dir2, dtype=float)
    try:
        x1, d1, e1 = _rk4_core(f, x0, d0, e0, dt, relaxation, uses_dir2)
    except NumericalBlowupError as exc:
        if step_index is not None:
            raise NumericalBlowupError(f"step {step_index}: {exc}") from None
        raise
    return GadState(x=x1, dir=Direction(d1, convention), dir2=e1)


def _integrate(model, f, convention, uses_dir2, x0, d0, opts, record_every,
               escape_radius):
    """Inner fixed-budget integration; positions leaving the escape radius
    stop the run (status "radius") instead of burning the step budget.
    The residual is read off the first RK4 stage, which is then reused."""
    x = np.array(x0, dtype=float)
    d = np.array(d0, dtype=float)
    e = d.copy() if uses_dir2 else None
    jvp_fn = _jvp_action(model)

    trajectory = [] if record_every > 0 else None

    def record(step, res):
        jd = jvp_fn(x, d)
        trajectory.append((step, step * opts.dt, x.copy(), d.copy(),
                           res, float(np.dot(d, jd))))

    steps = 0
    status = "ok"
    converged = False
    residual = float("inf")
    dt, relaxation = opts.dt, opts.relaxation
    abs_max = np.max  # bound method lookups hoisted out of the loop
    while True:
        k1 = f(x, d, e, relaxation)
        bvec = k1[3] if k1[3] is not None else model.eval(x)
        residual = float(abs_max(np.abs(bvec)))
        if trajectory is not None and steps % record_every == 0:
            record(steps, residual)
        if residual <= opts.residual_tol:
            converged = True
            break
        if steps >= opts.max_steps:
            break
        try:
            x, d, e = _rk4_core(f, x, d, e, dt, relaxation, uses_dir2, k1=k1)
        except NumericalBlowupError:
            status = "blowup"
            steps += 1
            break
        steps += 1
        if steps % 64 == 0 and float(abs_max(np.abs(x))) > escape_radius:
            status = "radius"
            break

    if trajectory is not None and trajectory[-1][0] != steps:
        record(steps, residual)

    result = SaddleResult(
        x_star=x,
        dir_star=Direction(d, convention),
        residual=residual,
        steps=steps,
        converged=converged,
        eigen_estimate=float(np.dot(d, jvp_fn(x, d))),
        trajectory=trajectory,
    )
    return result, status


def find_saddle(model: VectorFieldModel, x0, dir0, opts: GadOptions | None = None,
                dynamics: str = "simplified-v", record_every: int = 0) -> SaddleResult:
    """Integrate the chosen dynamics until |b(x)|_inf <= residual_tol.

    If x0 already satisfies the residual tolerance (it sits on a fixed
    point), the position is kicked along dir0 first; the one-dimensional
    escape has two branches and nothing local distinguishes them, so if
    the kicked run diverges (leaves a generous escape radius or goes
    non-finite) the search restarts once from the opposite kick.  This
    also keeps the outcome invariant under dir0 -> -dir0.

    Non-convergence within max_steps is reported, not raised.
    Trajectory rows (step, t, x, dir, residual_inf, rayleigh) are
    recorded every ``record_every`` steps when positive.
    """
    opts = opts or GadOptions()
    f, convention, uses_dir2 = _make_adapter(model, dynamics)

    x = np.array(x0, dtype=float)
    d = np.asarray(dir0, dtype=float)
    dnorm = float(np.linalg.norm(d))
    if dnorm == 0.0:
        raise ValueError("dir0 must be nonzero")
    d = d / dnorm
    escape_radius = 200.0 * (1.0 + float(np.max(np.abs(x))))

    kicked = False
    x_start = x
    if float(np.max(np.abs(eval_b(model, x)))) < opts.residual_tol:
        kick = opts.kick if opts.kick is not None else 1e-2 * (1.0 + float(np.max(np.abs(x))))
        if kick > 0.0:
            kicked = True
            x_start = x + kick * d

    result, status = _integrate(model, f, convention, uses_dir2,
                                x_start, d, opts, record_every, escape_radius)
    if kicked and status != "ok":
        result, status = _integrate(model, f, convention, uses_dir2,
                                    2.0 * x - x_start, d, opts, record_every,
                                    escape_radius)
    if status == "blowup":
        raise NumericalBlowupError(
            f"non-finite state at step {result.steps} of dynamics '{dynamics}'"
        )
    return result
