"""Saddle search for slow-fast stochastic systems.

The slow drift f(x, y) is averaged over the invariant measure of the fast
process by running short constrained micro chains (x frozen), giving the
macro drift estimate F^ and, from the same samples, the effective
Jacobian action

    (D_x f + C) v,   C(x, y) = (f - F) (x) (g - G)^T,

where g is the analytic score of the fast stationary density and G its
average.  Macro Euler steps then drive the reflected-drift direction
dynamics exactly as in the deterministic search; convergence is declared
on a trailing-window average of F^ because the instantaneous estimate
never vanishes.

Model callables must accept batched fast states: y of shape
(n_samples, dim_fast) maps to (n_samples, ...) outputs.  Models whose
fast process is componentwise Ornstein-Uhlenbeck with state-independent
noise can declare ``fast_rates`` to route micro chains through the
compiled kernel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _backend
from .dynamics import GadOptions, SaddleResult
from .errors import NumericalBlowupError, UnsupportedOperationError
from .vectorfield import Direction, _saturating_pull, _saturating_pull_deriv


@dataclass(frozen=True)
class SlowFastModel:
    """Slow drift f(x, y) coupled to a fast drift b_fast / sqrt-diffusion
    sigma at time-scale separation epsilon.

    ``g(x, y)`` is the analytic score of the fast stationary density
    (minus the x-gradient of its negative log); it enters the correction
    term of the effective Jacobian.  ``fast_rates(x)`` marks the diagonal
    OU specialization b_fast = -rates(x) * y with sigma = sigma(x).
    """

    dim_slow: int
    dim_fast: int
    f: Callable
    b_fast: Callable
    sigma: Callable
    epsilon: float
    name: str = "slowfast"
    dxf_action: Callable | None = None
    dxf_transpose_action: Callable | None = None
    g: Callable | None = None
    fast_rates: Callable | None = None
    landmarks: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.dim_slow < 1 or self.dim_fast < 1:
            raise ValueError("dimensions must be positive")


@dataclass
class HmmParams:
    """Micro-chain controls: step, burn-in, averaging length, replicas.

    dt_micro = None selects 0.05 * epsilon.  Models with a componentwise
    OU fast process are sampled with the exact transition, which is valid
    at any step; generic models run Euler-Maruyama chains, for which
    dt_micro must resolve the fast relaxation time (much smaller than
    epsilon times the slowest rate's inverse).
    """

    dt_micro: float | None = None
    n_burnin: int = 200
    n_average: int = 2000
    n_replicas: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.dt_micro is not None and self.dt_micro <= 0:
            raise ValueError(f"dt_micro must be positive, got {self.dt_micro}")
        for nm in ("n_burnin", "n_average", "n_replicas"):
            if getattr(self, nm) < 1:
                raise ValueError(f"{nm} must be >= 1, got {getattr(self, nm)}")

    def resolve_dt(self, model: SlowFastModel) -> float:
        return self.dt_micro if self.dt_micro is not None else 0.05 * model.epsilon


@dataclass
class DriftEstimate:
    value: np.ndarray
    stderr: np.ndarray
    n_samples: int


def _normalize_seed(rng, default_seed: int) -> np.random.SeedSequence:
    if rng is None:
        return np.random.SeedSequence(default_seed)
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(int(rng.integers(2 ** 63)))
    return np.random.SeedSequence(int(rng))


def micro_step_em(model: SlowFastModel, x, y, dt_micro: float, rng) -> np.ndarray:
    """One Euler-Maruyama step of the fast process with x frozen:
    y' = y + (dt/eps) b_fast(x, y) + sigma(x, y) sqrt(dt/eps) xi."""
    if dt_micro <= 0:
        raise ValueError(f"dt_micro must be positive, got {dt_micro}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    drift_dt = dt_micro / model.epsilon
    noise_dt = np.sqrt(drift_dt)
    xi = rng.standard_normal(y.shape)
    y_new = y + drift_dt * np.asarray(model.b_fast(x, y), dtype=float) \
        + noise_dt * np.asarray(model.sigma(x, y), dtype=float) * xi
    if not np.all(np.isfinite(y_new)):
        raise NumericalBlowupError("micro chain produced non-finite fast state")
    return y_new


def _draw_noise(ss: np.random.SeedSequence, n_total: int, m: int, d: int) -> np.ndarray:
    """Per-replica noise streams spawned from the seed, stacked to
    (n_total, m, d); replica order is fixed so reductions are deterministic."""
    children = ss.spawn(m)
    cols = [np.random.default_rng(c).standard_normal((n_total, d)) for c in children]
    return np.ascontiguousarray(np.stack(cols, axis=1))


class _MicroEnsemble:
    """Post-burn-in fast-state samples at frozen x, shared by the drift and
    Jacobian-action estimators (common samples keep them consistent)."""

    def __init__(self, model: SlowFastModel, x, params: HmmParams,
                 ss: np.random.SeedSequence, y0: np.ndarray | None = None):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        m, d = params.n_replicas, model.dim_fast
        dt = params.resolve_dt(model)
        n_total = params.n_burnin + params.n_average
        drift_dt = dt / model.epsilon
        noise_dt = float(np.sqrt(drift_dt))
        y = np.zeros((m, d)) if y0 is None else np.array(y0, dtype=float).reshape(m, d)
        xi = _draw_noise(ss, n_total, m, d)
        samples = np.empty((params.n_average, m, d))

        if model.fast_rates is not None:
            # componentwise OU fast process: use the exact Gaussian
            # transition, which is unbiased at any micro step (the
            # Euler-Maruyama chain inflates the stationary variance by
            # 1/(1 - a dt/2), far beyond tolerance where Gamma is small)
            rates = np.asarray(model.fast_rates(self.x), dtype=float).reshape(d)
            sig_raw = np.asarray(model.sigma(self.x, y), dtype=float)
            if sig_raw.ndim > 1:
                raise ValueError("fast_rates models need sigma(x, .) independent of y")
            sig = np.array(np.broadcast_to(sig_raw, (d,)), dtype=float)
            decay = np.exp(-drift_dt * rates)
            stat_std = sig / np.sqrt(2.0 * rates)
            amp = stat_std * np.sqrt(1.0 - decay * decay)
            _backend.ou_chain(y, decay, amp, xi, params.n_burnin, samples)
        else:
            for k in range(n_total):
                bf = np.asarray(model.b_fast(self.x, y), dtype=float)
                sg = np.asarray(model.sigma(self.x, y), dtype=float)
                y = y + drift_dt * bf + noise_dt * sg * xi[k]
                if k >= params.n_burnin:
                    samples[k - params.n_burnin] = y
        if not np.all(np.isfinite(samples)):
            raise NumericalBlowupError("micro chain produced non-finite samples")

        self.y_final = np.array(y)
        self.n_replicas = m
        self.n_keep = params.n_average
        self._flat = samples.reshape(-1, d)  # (n_keep * m, d), replica-major last
        self._samples = samples

    def _replica_means(self, values_flat: np.ndarray) -> np.ndarray:
        """Per-replica time means from flattened (n_keep * m, k) values."""
        v = values_flat.reshape(self.n_keep, self.n_replicas, -1)
        return v.mean(axis=0)

    def estimate_f(self) -> DriftEstimate:
        fv = np.asarray(self.model.f(self.x, self._flat), dtype=float)
        per_rep = self._replica_means(fv)
        value = per_rep.mean(axis=0)
        if self.n_replicas > 1:
            stderr = per_rep.std(axis=0, ddof=1) / np.sqrt(self.n_replicas)
        else:
            stderr = np.full_like(value, np.nan)
        return DriftEstimate(value=value, stderr=stderr,
                             n_samples=self.n_keep * self.n_replicas)

    def effective_jacobian_action(self, v: np.ndarray, transpose: bool = False):
        """Sample average of (D_x f + C) v (or its transpose applied to w).

        Returns (action, drift_estimate) computed from the same samples.
        """
        model = self.model
        if model.g is None:
            raise UnsupportedOperationError(
                f"model '{model.name}' supplies no stationary score g(x, y); "
                "the correction term cannot be estimated")
        act = model.dxf_transpose_action if transpose else model.dxf_action
        if act is None:
            which = "dxf_transpose_action" if transpose else "dxf_action"
            raise UnsupportedOperationError(
                f"model '{model.name}' supplies no {which}")
        v = np.asarray(v, dtype=float)
        fv = np.asarray(model.f(self.x, self._flat), dtype=float)
        gv = np.asarray(model.g(self.x, self._flat), dtype=float)
        est = self.estimate_f()
        g_bar = self._replica_means(gv).mean(axis=0)
        jac_v = np.asarray(act(self.x, self._flat, v), dtype=float)
        df = fv - est.value
        dg = gv - g_bar
        if transpose:
            corr = dg * (df @ v)[:, None]
        else:
            corr = df * (dg @ v)[:, None]
        action = self._replica_means(jac_v).mean(axis=0) + self._replica_means(corr).mean(axis=0)
        return action, est


def hmm_estimate_F(model: SlowFastModel, x, params: HmmParams | None = None,
                   rng=None) -> DriftEstimate:
    """Averaged slow drift F(x) = int f(x, y) mu_x(dy) estimated over
    replica micro chains started from y = 0, with a replica-spread
    standard error."""
    params = params or HmmParams()
    ss = _normalize_seed(rng, params.seed)
    return _MicroEnsemble(model, x, params, ss).estimate_f()


def hmm_estimate_effjac_action(model: SlowFastModel, x, v,
                               params: HmmParams | None = None, rng=None,
                               transpose: bool = False) -> np.ndarray:
    """Effective Jacobian action (D_x f + C) v at frozen x, estimated from
    one micro ensemble (the internal drift average uses the same samples)."""
    params = params or HmmParams()
    ss = _normalize_seed(rng, params.seed)
    action, _ = _MicroEnsemble(model, x, params, ss).effective_jacobian_action(
        v, transpose=transpose)
    return action


def default_msgad_options(**overrides) -> GadOptions:
    """Macro-step controls: coarse Euler step, stochastic residual tolerance."""
    base = dict(dt=5e-3, max_steps=20_000, residual_tol=1e-2, relaxation=1.0)
    base.update(overrides)
    return GadOptions(**base)


def _msgad_run(model, x_start, v0, opts, params, ss, transpose, window,
               record_every, escape_radius):
    """One macro integration.  Stopping is two-phase: the run must first
    leave the quiet zone (window-averaged drift above 3x tolerance) and
    then converges when the window average drops below tolerance with a
    positive Rayleigh quotient (a saddle signature; the transient dip
    near the starting minimum shows a negative one)."""
    x = np.array(x_start, dtype=float)
    v = np.array(v0, dtype=float)
    convention = "left" if transpose else "right"
    recent: deque[np.ndarray] = deque(maxlen=window)
    trajectory = [] if record_every > 0 else None
    y_warm = None
    residual_window = float("inf")
    rayleigh = float("nan")
    converged = False
    armed = False
    status = "ok"
    steps = 0

    for step in range(opts.max_steps):
        ens = _MicroEnsemble(model, x, params, ss, y0=y_warm)
        y_warm = ens.y_final
        action, est = ens.effective_jacobian_action(v, transpose=transpose)
        F = est.value
        recent.append(F)
        rayleigh = float(np.dot(v, action))

        if trajectory is not None and step % record_every == 0:
            trajectory.append((step, step * opts.dt, x.copy(), v.copy(),
                               float(np.max(np.abs(F))), rayleigh, est.stderr.copy()))

        if len(recent) == window:
            residual_window = float(np.max(np.abs(np.mean(recent, axis=0))))
            if residual_window > 3.0 * opts.residual_tol:
                armed = True
            elif armed and residual_window <= opts.residual_tol and rayleigh > 0.0:
                steps = step + 1
                converged = True
                break

        x = x + opts.dt * (F - 2.0 * float(np.dot(F, v)) * v)
        dv = action - rayleigh * v
        v = v + (opts.dt * opts.relaxation) * dv
        v = v / float(np.linalg.norm(v))
        steps = step + 1
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            status = "blowup"
            break
        if float(np.max(np.abs(x))) > escape_radius:
            status = "radius"
            break

    if trajectory is not None and recent:
        trajectory.append((steps, steps * opts.dt, x.copy(), v.copy(),
                           float(np.max(np.abs(recent[-1]))), rayleigh,
                           np.zeros_like(x)))

    result = SaddleResult(
        x_star=x, dir_star=Direction(v, convention),
        residual=residual_window, steps=steps, converged=converged,
        eigen_estimate=rayleigh, trajectory=trajectory,
    )
    return result, status


def msgad_find_saddle(model: SlowFastModel, x0, v0,
                      gad_opts: GadOptions | None = None,
                      hmm_params: HmmParams | None = None,
                      rng=None, variant: str = "v-form",
                      window: int = 50, record_every: int = 0) -> SaddleResult:
    """Macro Euler steps on (x, v) driven by the HMM estimates.

    The position is always kicked along v0 first (a stochastic residual
    cannot certify a fixed-point start), and as in the deterministic
    driver a diverging kick branch is retried once with the opposite
    sign.  Micro chains warm-start from the previous macro step's fast
    state.  Convergence: once the run has left the quiet zone, the
    infinity norm of the window-averaged drift estimate falls below
    residual_tol with a positive Rayleigh quotient.  Non-convergence is
    reported, not raised.
    """
    if variant not in ("v-form", "w-form"):
        raise ValueError(f"variant must be 'v-form' or 'w-form', got {variant!r}")
    transpose = variant == "w-form"
    opts = gad_opts or default_msgad_options()
    params = hmm_params or HmmParams()
    ss = _normalize_seed(rng, params.seed)

    x = np.array(x0, dtype=float)
    v = np.asarray(v0, dtype=float)
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        raise ValueError("v0 must be nonzero")
    v = v / vn

    kick = opts.kick if opts.kick is not None else 1e-2 * (1.0 + float(np.max(np.abs(x))))
    escape_radius = 200.0 * (1.0 + float(np.max(np.abs(x))))

    result, status = _msgad_run(model, x + kick * v, v, opts, params, ss,
                                transpose, window, record_every, escape_radius)
    if kick > 0.0 and status != "ok":
        result, status = _msgad_run(model, x - kick * v, v, opts, params, ss,
                                    transpose, window, record_every, escape_radius)
    if status == "blowup":
        raise NumericalBlowupError(
            f"multiscale macro state went non-finite at step {result.steps}")
    return result


# ---------------------------------------------------------------------------
# Built-in slow-fast model
# ---------------------------------------------------------------------------

def model_example2_slowfast(epsilon: float = 1e-3) -> SlowFastModel:
    """Planar slow variable driven by the squared fast variable:

        dx_i = (-sum_j D_ij x_j + y_i^2) dt,
        dy_i = -(1/eps) y_i / Gamma_i(x) dt + sqrt(sigma^2/eps) dW_i,

    with sigma^2 = 10, D = [[0.8, -0.2], [-0.2, 0.5]].  The fast process
    at frozen x is componentwise OU with stationary variance
    sigma^2 Gamma_i / 2, which makes the averaged drift available in
    closed form (see ``model_example2_effective``) for cross-checks.
    """
    D = np.array([[0.8, -0.2], [-0.2, 0.5]])
    sigma_sq = 10.0
    sig = float(np.sqrt(sigma_sq))

    def f(x, y):
        y = np.asarray(y, dtype=float)
        return -(D @ x) + y * y

    def b_fast(x, y):
        y = np.asarray(y, dtype=float)
        return -y / _saturating_pull(x)

    def sigma(x, y):
        return np.full(2, sig)

    def fast_rates(x):
        return 1.0 / _saturating_pull(x)

    def dxf_action(x, y, v):
        y = np.asarray(y, dtype=float)
        base = -(D @ v)
        if y.ndim == 1:
            return base
        return np.broadcast_to(base, y.shape)

    def dxf_transpose_action(x, y, w):
        y = np.asarray(y, dtype=float)
        base = -(D.T @ w)
        if y.ndim == 1:
            return base
        return np.broadcast_to(base, y.shape)

    def g(x, y):
        # score of the OU stationary density:
        # U(x, y) = sum_i [ y_i^2/(sigma^2 Gamma_i) + log(pi sigma^2 Gamma_i)/2 ],
        # g_i = -dU/dx_i = Gamma_i'(x_i) * ( y_i^2/(sigma^2 Gamma_i^2) - 1/(2 Gamma_i) )
        y = np.asarray(y, dtype=float)
        gam = _saturating_pull(x)
        dgam = _saturating_pull_deriv(x)
        return dgam * (y * y / (sigma_sq * gam * gam) - 0.5 / gam)

    return SlowFastModel(
        dim_slow=2, dim_fast=2, f=f, b_fast=b_fast, sigma=sigma,
        epsilon=epsilon, name="example2-slowfast",
        dxf_action=dxf_action, dxf_transpose_action=dxf_transpose_action,
        g=g, fast_rates=fast_rates,
        landmarks={
            "m1": np.array([0.4643, 0.6985]),
            "m2": np.array([2.2038, 5.9804]),
            "m3": np.array([5.7109, 6.2369]),
            "s1": np.array([1.2842, 3.4484]),
            "s2": np.array([3.5689, 6.0735]),
        },
    )


SLOWFAST_ZOO: dict[str, Callable[[], SlowFastModel]] = {
    "example2-slowfast": model_example2_slowfast,
}


def get_slowfast_model(name: str) -> SlowFastModel:
    try:
        return SLOWFAST_ZOO[name]()
    except KeyError:
        raise ValueError(
            f"unknown slow-fast model '{name}'; available: {', '.join(sorted(SLOWFAST_ZOO))}"
        ) from None
