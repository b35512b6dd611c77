"""Allen-Cahn order-parameter dynamics under shear on a periodic grid.

The drift is b(phi) = kappa*lap(phi) + phi - phi^3 plus an advection term
gamma*sin(2*pi*y)*dphi/dx (variant "x-shear"), optionally augmented by
gamma*sin(2*pi*x)*dphi/dy (variant "xy-shear").  Centered differences are
used throughout: the discrete d/dx is then exactly skew-adjoint on the
periodic grid, so the analytic adjoint action (advection sign flipped)
satisfies the discrete adjoint identity to round-off, not just to O(h^2).

Fields live on [0,1)^2 with values[i, j] = phi(x = j*h, y = i*h), h = 1/n.
The saddle search integrates the coupled (phi, v) flow with explicit
Euler and L2 geometry: v is renormalized in L2 after every step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend
from .dynamics import GadOptions
from .errors import NumericalBlowupError

SHEAR_VARIANTS = ("none", "x-shear", "xy-shear")

_BLOWUP_LIMIT = 1e6


@dataclass(frozen=True)
class ShearConfig:
    variant: str = "none"
    shear_rate: float = 0.0
    kappa: float = 0.01

    def __post_init__(self):
        if self.variant not in SHEAR_VARIANTS:
            raise ValueError(
                f"unknown shear variant {self.variant!r}; choose from {SHEAR_VARIANTS}"
            )
        if self.shear_rate < 0:
            raise ValueError(f"shear_rate must be >= 0, got {self.shear_rate}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


@dataclass
class Field2D:
    """Periodic n x n scalar field on the unit square."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"field must be square, got shape {self.values.shape}")
        if self.values.shape[0] < 8:
            raise ValueError(f"grid must have n >= 8, got n = {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @classmethod
    def full(cls, n: int, fill: float) -> "Field2D":
        return cls(np.full((n, n), float(fill)))

    @classmethod
    def from_function(cls, n: int, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field2D":
        """Sample fn(x, y) on the grid; fn must broadcast over arrays."""
        h = 1.0 / n
        x = np.arange(n) * h
        xx, yy = np.meshgrid(x, x)
        return cls(np.asarray(fn(xx, yy), dtype=float))

    def copy(self) -> "Field2D":
        return Field2D(self.values.copy())


def _advection_coefficients(cfg: ShearConfig, n: int):
    """(adv_x_coef, adv_y_coef): row coefficient gamma*sin(2 pi y_i) on the
    x-derivative, column coefficient gamma*sin(2 pi x_j) on the y-derivative
    (zero unless the variant includes that term)."""
    grid = np.arange(n) / n
    s = np.sin(2.0 * np.pi * grid)
    zero = np.zeros(n)
    if cfg.variant == "none" or cfg.shear_rate == 0.0:
        return zero, zero.copy()
    if cfg.variant == "x-shear":
        return cfg.shear_rate * s, zero
    return cfg.shear_rate * s, cfg.shear_rate * s.copy()


def _same_grid(a: Field2D, b: Field2D):
    if a.n != b.n:
        raise ValueError(f"grid mismatch: {a.n} vs {b.n}")


def laplacian_periodic(phi: Field2D) -> Field2D:
    """Five-point periodic Laplacian, scaled by 1/h^2."""
    out = np.empty_like(phi.values)
    _backend.laplacian(phi.values, out, float(phi.n) ** 2)
    return Field2D(out)


def ac_rhs(phi: Field2D, cfg: ShearConfig) -> Field2D:
    """Drift kappa*lap(phi) + phi - phi^3 + shear advection."""
    n = phi.n
    cx, cy = _advection_coefficients(cfg, n)
    out = np.empty_like(phi.values)
    _backend.ac_rhs(phi.values, out, cfg.kappa, float(n) ** 2, 0.5 * n, cx, cy)
    return Field2D(out)


def ac_jvp(phi: Field2D, v: Field2D, cfg: ShearConfig) -> Field2D:
    """Linearization: kappa*lap(v) + v - 3 phi^2 v + shear advection of v."""
    _same_grid(phi, v)
    n = phi.n
    cx, cy = _advection_coefficients(cfg, n)
    out = np.empty_like(phi.values)
    _backend.ac_linearized(phi.values, v.values, out, cfg.kappa, float(n) ** 2, 0.5 * n, cx, cy)
    return Field2D(out)


def ac_vjp(phi: Field2D, w: Field2D, cfg: ShearConfig) -> Field2D:
    """Adjoint of the linearization: the advection sign flips because the
    centered d/dx is skew-adjoint on the periodic grid."""
    _same_grid(phi, w)
    n = phi.n
    cx, cy = _advection_coefficients(cfg, n)
    out = np.empty_like(phi.values)
    _backend.ac_linearized(phi.values, w.values, out, cfg.kappa, float(n) ** 2, 0.5 * n, -cx, -cy)
    return Field2D(out)


def l2_inner(a: Field2D, b: Field2D) -> float:
    """h^2-weighted grid inner product (unit-domain L2)."""
    _same_grid(a, b)
    return float(np.dot(a.values.ravel(), b.values.ravel())) * a.h ** 2


def l2_norm(a: Field2D) -> float:
    return float(np.sqrt(np.dot(a.values.ravel(), a.values.ravel()))) * a.h


def energy(phi: Field2D, cfg: ShearConfig) -> float:
    """Free energy: integral of kappa/2 |grad phi|^2 + (1 - phi^2)^2 / 4,
    with centered-difference gradient and h^2 quadrature weights."""
    p = phi.values
    n = phi.n
    gx = (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)) * (0.5 * n)
    gy = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) * (0.5 * n)
    dens = 0.5 * cfg.kappa * (gx * gx + gy * gy) + 0.25 * (1.0 - p * p) ** 2
    return float(np.sum(dens)) * phi.h ** 2


# ---------------------------------------------------------------------------
# Seeds and pattern metrics
# ---------------------------------------------------------------------------

def droplet_seed(n: int, radius: float = 0.25, kappa: float = 0.01,
                 center=(0.5, 0.5)) -> Field2D:
    """tanh-profile disk of the +1 phase in a -1 background."""
    delta = np.sqrt(2.0 * kappa)
    cx, cy = center

    def fn(x, y):
        r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        return np.tanh((radius - r) / delta)

    return Field2D.from_function(n, fn)


def stripe_seed(n: int, width: float = 0.5, kappa: float = 0.01,
                axis: str = "y") -> Field2D:
    """tanh band of the +1 phase, centered on the domain.

    axis="y": the profile varies along y (x-independent lamellar band).
    axis="x": varies along x (the transverse band that the x-shear twists).
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    delta = np.sqrt(2.0 * kappa)
    lo, hi = 0.5 - 0.5 * width, 0.5 + 0.5 * width

    def fn(x, y):
        s = y if axis == "y" else x
        return np.tanh((s - lo) / delta) + np.tanh((hi - s) / delta) - 1.0

    return Field2D.from_function(n, fn)


def default_direction_seed(phi: Field2D) -> Field2D:
    """L2-normalized gradient magnitude of the seed field.

    Interface configurations are unstable against moving their interfaces,
    and |grad phi| is exactly that interface-localized bump (the breathing
    mode of a droplet, the width mode of a band), so the direction starts
    with a solid overlap on the physically unstable mode.  A mean-free
    copy of the field is the fallback for gradient-free seeds.
    """
    p = phi.values
    n = phi.n
    gx = (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)) * (0.5 * n)
    gy = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) * (0.5 * n)
    v = np.sqrt(gx * gx + gy * gy)
    nrm = float(np.linalg.norm(v)) / n
    if nrm == 0.0:
        v = p - float(np.mean(p))
        nrm = float(np.linalg.norm(v)) / n
        if nrm == 0.0:
            raise ValueError("seed field is constant; supply an explicit direction")
    return Field2D(v / nrm)


def x_variation(phi: Field2D) -> float:
    """Largest standard deviation along x over the rows; zero for
    x-independent (lamellar) profiles."""
    return float(np.max(np.std(phi.values, axis=1)))


def symmetry_residual(phi: Field2D) -> float:
    """L2 distance from the field to the nearest symmetric image of its
    transpose, i.e. min over torus translations s and the sign flip of
    |phi -/+ roll(phi^T, s)|_L2.

    Steady states come in orbits under translations and phi -> -phi, so
    the transposed state can reappear anywhere in the box and with either
    sign; the minimum over the whole family (all shifts at once via FFT
    cross-correlation) measures genuine transpose asymmetry only.
    """
    p = phi.values
    pt = np.ascontiguousarray(p.T)
    # <p, roll(pt, (a, b))> for every shift, by circular cross-correlation
    corr = np.fft.ifft2(np.fft.fft2(p) * np.conj(np.fft.fft2(pt))).real
    sq = float(np.dot(p.ravel(), p.ravel()))
    best_sq = min(2.0 * sq - 2.0 * float(np.max(corr)),
                  2.0 * sq + 2.0 * float(np.min(corr)))
    return float(np.sqrt(max(best_sq, 0.0))) * phi.h


# ---------------------------------------------------------------------------
# Saddle search and the shear-rate sweep
# ---------------------------------------------------------------------------

def default_pde_options(**overrides) -> GadOptions:
    """Euler controls for the field search: dt below the diffusive limit at
    n = 128, L2 residual tolerance 1e-6.  The budget accommodates weakly
    conditioned saddles (near-zero interface modes drag the tail)."""
    base = dict(dt=1e-3, max_steps=1_000_000, residual_tol=1e-6, relaxation=1.0)
    base.update(overrides)
    return GadOptions(**base)


@dataclass
class PdeSaddleResult:
    phi_star: Field2D
    v_star: Field2D
    residual: float
    steps: int
    converged: bool
    rayleigh: float
    energy: float
    trajectory: list | None = None


def pde_find_saddle(phi0: Field2D, v0: Field2D, cfg: ShearConfig,
                    opts: GadOptions | None = None,
                    record_every: int = 0) -> PdeSaddleResult:
    """Explicit-Euler integration of the coupled (phi, v) flow with the
    reflected drift and L2 projections; v is renormalized in L2 each step.

    Converges when |b(phi)|_L2 <= opts.residual_tol.  Blowup (a CFL
    violation or an unstable configuration) raises NumericalBlowupError.
    """
    _same_grid(phi0, v0)
    opts = opts or default_pde_options()
    n = phi0.n
    h2 = 1.0 / n ** 2
    diff_limit = 1.0 / (4.0 * cfg.kappa * n * n)
    if opts.dt > diff_limit:
        warnings.warn(
            f"dt = {opts.dt:g} exceeds the diffusive stability limit h^2/(4 kappa) = "
            f"{diff_limit:g} at n = {n}", stacklevel=2)

    cx, cy = _advection_coefficients(cfg, n)
    inv_h2 = float(n) ** 2
    inv_2h = 0.5 * n

    phi = phi0.values.copy()
    v = v0.values.copy()
    vn = float(np.linalg.norm(v)) / n
    if vn == 0.0:
        raise ValueError("v0 must be nonzero")
    v /= vn

    b = np.empty_like(phi)
    jv = np.empty_like(phi)
    _backend.ac_rhs(phi, b, cfg.kappa, inv_h2, inv_2h, cx, cy)
    residual = float(np.linalg.norm(b)) / n
    rayleigh = float("nan")
    dt = opts.dt
    tau = opts.relaxation

    trajectory = [] if record_every > 0 else None

    def record(step, res, ray):
        trajectory.append((step, step * dt, res, ray,
                           _energy_raw(phi, cfg.kappa, n)))

    if trajectory is not None:
        record(0, residual, rayleigh)

    steps = 0
    converged = residual <= opts.residual_tol
    while not converged and steps < opts.max_steps:
        _backend.ac_linearized(phi, v, jv, cfg.kappa, inv_h2, inv_2h, cx, cy)
        bv = float(np.dot(b.ravel(), v.ravel())) * h2
        rayleigh = float(np.dot(v.ravel(), jv.ravel())) * h2
        phi += dt * (b - (2.0 * bv) * v)
        v += (dt * tau) * (jv - rayleigh * v)
        vn = float(np.linalg.norm(v)) / n
        if not np.isfinite(vn) or vn == 0.0:
            raise NumericalBlowupError(f"direction field blew up at step {steps}")
        v /= vn
        _backend.ac_rhs(phi, b, cfg.kappa, inv_h2, inv_2h, cx, cy)
        residual = float(np.linalg.norm(b)) / n
        steps += 1
        if not np.isfinite(residual) or residual > _BLOWUP_LIMIT:
            raise NumericalBlowupError(
                f"residual blew up at step {steps} (check the CFL bound dt <= {diff_limit:g})"
            )
        if trajectory is not None and steps % record_every == 0:
            record(steps, residual, rayleigh)
        converged = residual <= opts.residual_tol

    phi_f = Field2D(phi)
    v_f = Field2D(v)
    if not np.isfinite(rayleigh):
        rayleigh = l2_inner(v_f, ac_jvp(phi_f, v_f, cfg))
    return PdeSaddleResult(
        phi_star=phi_f, v_star=v_f, residual=residual, steps=steps,
        converged=converged, rayleigh=rayleigh,
        energy=_energy_raw(phi, cfg.kappa, n), trajectory=trajectory,
    )


def _energy_raw(p: np.ndarray, kappa: float, n: int) -> float:
    gx = (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)) * (0.5 * n)
    gy = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) * (0.5 * n)
    dens = 0.5 * kappa * (gx * gx + gy * gy) + 0.25 * (1.0 - p * p) ** 2
    return float(np.sum(dens)) / n ** 2


@dataclass
class SweepStage:
    gamma: float
    result: PdeSaddleResult
    energy: float
    x_variation: float
    symmetry_residual: float
    reseeded: bool = False


@dataclass
class GammaSweepResult:
    stages: list[SweepStage]
    completed: bool


def continuation_in_gamma(gammas, cfg_base: ShearConfig, phi_seed: Field2D,
                          opts: GadOptions | None = None,
                          v_seed: Field2D | None = None) -> GammaSweepResult:
    """Run the saddle search over an ascending list of shear rates, seeding
    each stage with the previous converged saddle.

    Sheared branches can terminate as the rate grows (the inherited seed
    then orbits a limit cycle instead of converging); such a stage is
    retried once from the shear-invariant lamellar band, the saddle that
    survives every shear rate.  A stage that still fails stops the sweep;
    the stages so far are returned with completed=False.
    """
    gammas = [float(g) for g in gammas]
    if any(b < a for a, b in zip(gammas[:-1], gammas[1:])):
        raise ValueError("gammas must be ascending")
    phi = phi_seed
    v = v_seed if v_seed is not None else default_direction_seed(phi_seed)
    stages: list[SweepStage] = []
    for gamma in gammas:
        cfg = ShearConfig(variant=cfg_base.variant, shear_rate=gamma, kappa=cfg_base.kappa)
        res = pde_find_saddle(phi, v, cfg, opts)
        reseeded = False
        if not res.converged:
            band = stripe_seed(phi.n, kappa=cfg_base.kappa)
            res = pde_find_saddle(band, default_direction_seed(band), cfg, opts)
            reseeded = True
        stages.append(SweepStage(
            gamma=gamma, result=res, energy=res.energy,
            x_variation=x_variation(res.phi_star),
            symmetry_residual=symmetry_residual(res.phi_star),
            reseeded=reseeded,
        ))
        if not res.converged:
            return GammaSweepResult(stages=stages, completed=False)
        phi, v = res.phi_star, res.v_star
    return GammaSweepResult(stages=stages, completed=True)
