"""Fixed-point classification and spectrum checks for the extended flow.

Eigenvalues of the small dense Jacobians are taken from the
characteristic polynomial: the quadratic formula at dim 2, and root
isolation (bracketing + Newton polish) with deflation at higher
dimensions, extracting quadratic factors for complex pairs.  This keeps
the classification path independent of a general eigensolver; the
extended-system check below then only needs to *confirm* candidate
eigenvalues, which it does with an inverse-iteration residual probe.

The confirmed structure: at a fixed point x_s where Db has distinct real
eigenvalues lam_1..lam_n with right eigenvectors v_i, the linearization
of the simplified flow at (x_s, v_i) has eigenvalues

    -2 lam_i,  -lam_i,  {lam_j : j != i},  {lam_j - lam_i : j != i},

so (x_s, v_i) is linearly stable exactly when lam_i is the unique
positive eigenvalue, i.e. when x_s is an index-1 saddle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import _rhs_v_raw, _rhs_w_raw
from .errors import (
    ConvergenceError,
    NotAFixedPointError,
    SingularJacobianError,
    SpectrumHypothesisError,
)
from .vectorfield import VectorFieldModel, dense_jacobian, eval_b

CLASSIFICATION_TOL = 1e-8

STABLE = "stable"
INDEX1_SADDLE = "index-1 saddle"
INDEX_K = "index-k (k>=2)"
DEGENERATE = "degenerate"


# ---------------------------------------------------------------------------
# Characteristic-polynomial eigenvalues for small dense matrices
# ---------------------------------------------------------------------------

def charpoly_coefficients(A: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial coefficients (degree-descending)
    via the Faddeev-LeVerrier recursion.  Intended for small matrices."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    M = np.zeros_like(A)
    c = 1.0
    for k in range(1, n + 1):
        M = A @ M + c * np.eye(n)
        c = -np.trace(A @ M) / k
        coeffs[k] = c
    return coeffs


def _polyval(coeffs, x):
    r = 0.0
    for c in coeffs:
        r = r * x + c
    return r


def _polyder(coeffs):
    n = len(coeffs) - 1
    return np.array([c * (n - i) for i, c in enumerate(coeffs[:-1])])


def _deflate(coeffs, root):
    """Synthetic division by (x - root); drops the remainder."""
    out = np.empty(len(coeffs) - 1)
    acc = 0.0
    for i, c in enumerate(coeffs[:-1]):
        acc = acc * root + c
        out[i] = acc
    return out


def _newton_polish(coeffs, x0, iters=60):
    dp = _polyder(coeffs)
    x = x0
    for _ in range(iters):
        p = _polyval(coeffs, x)
        d = _polyval(dp, x)
        if d == 0.0:
            break
        step = p / d
        x -= step
        if abs(step) <= 1e-15 * (1.0 + abs(x)):
            break
    return x


def _quadratic_roots(b, c):
    """Roots of x^2 + b x + c, complex pair when the discriminant is negative."""
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        sq = np.sqrt(disc)
        # avoid cancellation: compute the larger-magnitude root first
        q = -0.5 * (b + np.copysign(sq, b)) if b != 0.0 else 0.5 * sq
        if q == 0.0:
            return [0.0, 0.0]
        return [q, c / q]
    sq = np.sqrt(-disc)
    return [complex(-0.5 * b, 0.5 * sq), complex(-0.5 * b, -0.5 * sq)]


def _bracket_real_root(coeffs, bound):
    """Scan [-bound, bound] for a sign change and bisect it down.

    Returns a polished root or None if no sign change is found (complex
    pairs or multiple roots)."""
    m = max(64, 32 * (len(coeffs) - 1))
    xs = np.linspace(-bound, bound, m + 1)
    vals = np.array([_polyval(coeffs, x) for x in xs])
    exact = np.flatnonzero(vals == 0.0)
    if exact.size:
        return float(xs[exact[0]])
    sign_change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if sign_change.size == 0:
        return None
    lo, hi = xs[sign_change[0]], xs[sign_change[0] + 1]
    flo = _polyval(coeffs, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = _polyval(coeffs, mid)
        if fmid == 0.0:
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
        if hi - lo <= 1e-15 * (1.0 + abs(lo)):
            break
    return 0.5 * (lo + hi)


def _bairstow_quadratic(coeffs, iters=500):
    """Extract a quadratic factor x^2 + u x + v by Bairstow iteration.

    Used when bracketing finds no real root (conjugate pairs)."""
    a = np.asarray(coeffs, dtype=float)
    n = len(a) - 1
    for attempt in range(8):
        rng = np.random.default_rng(1234 + attempt)
        u, v = rng.uniform(-1, 1), rng.uniform(0.1, 2.0)
        for _ in range(iters):
            b = np.zeros(n + 1)
            c = np.zeros(n + 1)
            b[0] = a[0]
            b[1] = a[1] - u * b[0]
            for i in range(2, n + 1):
                b[i] = a[i] - u * b[i - 1] - v * b[i - 2]
            c[0] = b[0]
            c[1] = b[1] - u * c[0]
            for i in range(2, n):
                c[i] = b[i] - u * c[i - 1] - v * c[i - 2]
            det = c[n - 2] ** 2 - c[n - 3] * (c[n - 1] - b[n - 1])
            if det == 0.0:
                break
            du = (b[n - 1] * c[n - 2] - b[n] * c[n - 3]) / det
            dv = (b[n] * c[n - 2] - b[n - 1] * (c[n - 1] - b[n - 1])) / det
            u += du
            v += dv
            if abs(du) + abs(dv) <= 1e-14 * (1.0 + abs(u) + abs(v)):
                quotient = b[: n - 1]
                return u, v, quotient
    raise ConvergenceError("quadratic-factor extraction did not converge")


def small_matrix_eigenvalues(A: np.ndarray) -> list:
    """All eigenvalues of a small real matrix, as floats or complex pairs."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return [float(A[0, 0])]
    if n == 2:
        tr = float(A[0, 0] + A[1, 1])
        det = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
        return _quadratic_roots(-tr, det)

    coeffs = charpoly_coefficients(A)
    # Cauchy bound on root magnitudes for the scan interval
    bound = 1.0 + float(np.max(np.abs(coeffs[1:])))
    roots: list = []
    work = coeffs.copy()
    while len(work) - 1 > 2:
        r = _bracket_real_root(work, bound)
        if r is not None:
            r = _newton_polish(coeffs, r)
            roots.append(float(r))
            work = _deflate(work, r)
        else:
            u, v, work = _bairstow_quadratic(work)
            roots.extend(_quadratic_roots(u, v))
    if len(work) - 1 == 2:
        roots.extend(_quadratic_roots(work[1] / work[0], work[2] / work[0]))
    elif len(work) - 1 == 1:
        roots.append(float(_newton_polish(coeffs, -work[1] / work[0])))
    return roots


def _real_eigenvector(A: np.ndarray, lam: float, rng=None) -> np.ndarray:
    """Unit eigenvector for a simple real eigenvalue, by inverse iteration
    on the shifted matrix."""
    n = A.shape[0]
    rng = rng or np.random.default_rng(7)
    shift = lam + 1e-10 * (1.0 + abs(lam))
    z = rng.standard_normal(n)
    z /= np.linalg.norm(z)
    for _ in range(8):
        try:
            z = np.linalg.solve(A - shift * np.eye(n), z)
        except np.linalg.LinAlgError:
            shift += 1e-9 * (1.0 + abs(lam))
            continue
        z /= np.linalg.norm(z)
    # fix an orientation for reproducibility
    k = int(np.argmax(np.abs(z)))
    if z[k] < 0:
        z = -z
    return z


# ---------------------------------------------------------------------------
# Fixed-point classification and refinement
# ---------------------------------------------------------------------------

@dataclass
class FixedPointReport:
    x: np.ndarray
    residual: float
    eigenvalues: list
    index: int
    classification: str


def classify_fixed_point(model: VectorFieldModel, x, tol: float = 1e-8,
                         classification_tol: float = CLASSIFICATION_TOL) -> FixedPointReport:
    """Classify a fixed point by the spectrum of its dense Jacobian.

    The point must already satisfy |b(x)|_inf <= tol (refine first).
    Eigenvalues with |Re| <= classification_tol make the point
    ``degenerate`` rather than being rounded either way.
    """
    x = np.asarray(x, dtype=float)
    residual = float(np.max(np.abs(eval_b(model, x))))
    if residual > tol:
        raise NotAFixedPointError(
            f"|b(x)|_inf = {residual:.3e} exceeds tol = {tol:.3e}; refine the point first"
        )
    J = dense_jacobian(model, x)
    eigs = small_matrix_eigenvalues(J)
    reals = np.array([np.real(e) for e in eigs])
    index = int(np.sum(reals > classification_tol))
    if np.any(np.abs(reals) <= classification_tol):
        classification = DEGENERATE
    elif index == 0:
        classification = STABLE
    elif index == 1:
        classification = INDEX1_SADDLE
    else:
        classification = INDEX_K
    return FixedPointReport(x=x, residual=residual, eigenvalues=eigs,
                            index=index, classification=classification)


def refine_fixed_point(model: VectorFieldModel, x0, tol: float = 1e-12,
                       max_iters: int = 50) -> np.ndarray:
    """Newton-polish a fixed point: x <- x - Db(x)^{-1} b(x)."""
    x = np.array(x0, dtype=float)
    for _ in range(max_iters):
        b = eval_b(model, x)
        if float(np.max(np.abs(b))) <= tol:
            return x
        J = dense_jacobian(model, x)
        try:
            delta = np.linalg.solve(J, b)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(
                f"singular Jacobian during refinement at x = {x}"
            ) from exc
        x = x - delta
    if float(np.max(np.abs(eval_b(model, x)))) <= tol:
        return x
    raise ConvergenceError(
        f"fixed-point refinement did not reach |b|_inf <= {tol:.1e} in {max_iters} iterations"
    )


# ---------------------------------------------------------------------------
# Extended-system Jacobian and spectrum verification
# ---------------------------------------------------------------------------

def gad_extended_jacobian(model: VectorFieldModel, x_s, v, h: float | None = None,
                          form: str = "v") -> np.ndarray:
    """Central-difference Jacobian of the simplified flow over the stacked
    (x, dir) coordinates, with no sphere constraint (the unconstrained
    linearization whose block structure the spectrum formula describes).

    ``form`` selects the v-form or w-form right-hand side; the relaxation
    factor is fixed at 1.  (x_s, v) must be a fixed point of the chosen
    flow to about 1e-10; the upper-right block then vanishes and the
    lower-left block is recorded as-is for inspection.
    """
    x_s = np.asarray(x_s, dtype=float)
    v = np.asarray(v, dtype=float)
    d = model.dim
    raw = _rhs_v_raw if form == "v" else _rhs_w_raw
    if form not in ("v", "w"):
        raise ValueError(f"form must be 'v' or 'w', got {form!r}")

    dx0, dv0 = raw(model, x_s, v, 1.0)
    fp_res = max(float(np.max(np.abs(dx0))), float(np.max(np.abs(dv0))))
    if fp_res > 1e-10:
        raise NotAFixedPointError(
            f"(x, dir) is not a fixed point of the extended flow (residual {fp_res:.3e})"
        )

    z0 = np.concatenate([x_s, v])
    if h is None:
        h = float(np.finfo(float).eps) ** (1.0 / 3.0) * (1.0 + float(np.max(np.abs(z0))))

    def stacked(z):
        dx, dv = raw(model, z[:d], z[d:], 1.0)
        return np.concatenate([dx, dv])

    m = 2 * d
    J = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        J[:, j] = (stacked(z0 + e) - stacked(z0 - e)) / (2.0 * h)
    return J


# ---------------------------------------------------------------------------
# Predicted-spectrum verification
# ---------------------------------------------------------------------------

def predicted_extended_spectrum(eigenvalues, i: int) -> list[float]:
    """Eigenvalues of the extended linearization at (x_s, v_i):
    {-2 lam_i, -lam_i} + {lam_j : j != i} + {lam_j - lam_i : j != i}."""
    lams = [float(l) for l in eigenvalues]
    li = lams[i]
    others = [l for j, l in enumerate(lams) if j != i]
    return [-2.0 * li, -li] + others + [l - li for l in others]


def _eigvalue_residual(Jext: np.ndarray, mu: float, rng) -> float:
    """Smallest-singular-direction probe: run inverse iteration on
    (Jext - mu I) and report |(Jext - mu I) z| for the resulting unit z."""
    m = Jext.shape[0]
    shifted = Jext - mu * np.eye(m)
    scale = float(np.max(np.abs(Jext))) + 1.0
    z = rng.standard_normal(m)
    z /= np.linalg.norm(z)
    jitter = 0.0
    for _ in range(12):
        try:
            z_new = np.linalg.solve(shifted + jitter * np.eye(m), z)
        except np.linalg.LinAlgError:
            jitter = (jitter + 1e-14) * 10.0 * scale
            continue
        nrm = float(np.linalg.norm(z_new))
        if not np.isfinite(nrm) or nrm == 0.0:
            jitter = (jitter + 1e-14) * 10.0 * scale
            continue
        z = z_new / nrm
    return float(np.linalg.norm(shifted @ z))


@dataclass
class EigenpairCheck:
    """Verification record for one candidate direction (x_s, v_i)."""

    lam: float
    predicted: list[float]
    residuals: list[float]
    passed: bool
    gad_stable: bool              # all predicted eigenvalues negative
    expect_stable: bool           # lam_i is the unique positive eigenvalue
    consistent: bool              # gad_stable == expect_stable


@dataclass
class SpectrumVerification:
    """Per-fixed-point verification of the predicted extended spectrum."""

    model_name: str
    x: np.ndarray
    residual: float
    eigenvalues: list[float]
    check_tol: float
    checks: list[EigenpairCheck] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed and c.consistent for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_name,
            "fixed_point": [float(v) for v in self.x],
            "residual_inf": self.residual,
            "jacobian_eigenvalues": self.eigenvalues,
            "check_tol": self.check_tol,
            "all_passed": self.all_passed,
            "checks": [
                {
                    "lambda": c.lam,
                    "predicted_eigenvalues": c.predicted,
                    "residuals": c.residuals,
                    "passed": c.passed,
                    "gad_stable": c.gad_stable,
                    "expect_stable": c.expect_stable,
                    "consistent": c.consistent,
                }
                for c in self.checks
            ],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def format_text(self) -> str:
        lines = [
            f"extended-spectrum verification: model={self.model_name}",
            f"  fixed point x = {np.array2string(self.x, precision=10)}"
            f"  (|b|_inf = {self.residual:.2e})",
            f"  Jacobian eigenvalues: {', '.join(f'{l:.10g}' for l in self.eigenvalues)}",
            f"  residual tolerance: {self.check_tol:.3e}",
        ]
        for c in self.checks:
            status = "PASS" if (c.passed and c.consistent) else "FAIL"
            lines.append(
                f"  direction for lambda = {c.lam:+.10g}: {status} "
                f"(max residual {max(c.residuals):.3e}, "
                f"gad_stable={c.gad_stable}, expect_stable={c.expect_stable})"
            )
            for mu, r in zip(c.predicted, c.residuals):
                lines.append(f"      mu = {mu:+.10g}   |(J~ - mu I) z| = {r:.3e}")
        lines.append(f"  overall: {'PASS' if self.all_passed else 'FAIL'}")
        return "\n".join(lines)


def verify_predicted_spectrum(model: VectorFieldModel, x_s,
                              check_tol_factor: float = 1e-6,
                              form: str = "v",
                              distinct_tol: float = 1e-6) -> SpectrumVerification:
    """Confirm the predicted eigenvalue multiset of the extended
    linearization at every candidate direction over a fixed point.

    Requires Db(x_s) to have distinct real eigenvalues; each predicted mu
    must leave a residual |(J~ - mu I) z| <= check_tol_factor * |J~|_inf
    under the inverse-iteration probe.  Also cross-checks the stability
    statement: the predicted set is all-negative exactly when lam_i is
    the unique positive eigenvalue.
    """
    x_s = np.asarray(x_s, dtype=float)
    residual = float(np.max(np.abs(eval_b(model, x_s))))
    if residual > 1e-10:
        raise NotAFixedPointError(
            f"|b(x_s)|_inf = {residual:.3e}; refine the fixed point before verification"
        )
    J = dense_jacobian(model, x_s)
    eigs = small_matrix_eigenvalues(J)
    if any(isinstance(e, complex) and abs(e.imag) > distinct_tol for e in eigs):
        raise SpectrumHypothesisError(
            f"Jacobian at {x_s} has complex eigenvalues: {eigs}"
        )
    lams = sorted(float(np.real(e)) for e in eigs)
    scale = max(1.0, max(abs(l) for l in lams))
    for a, b in zip(lams[:-1], lams[1:]):
        if b - a <= distinct_tol * scale:
            raise SpectrumHypothesisError(
                f"Jacobian eigenvalues are not distinct: {lams}"
            )

    rng = np.random.default_rng(20240817)
    report = SpectrumVerification(
        model_name=model.name, x=x_s, residual=residual,
        eigenvalues=lams, check_tol=float("nan"),
    )
    take_left = form == "w"
    for i, lam in enumerate(lams):
        vec = _real_eigenvector(J.T if take_left else J, lam, rng)
        Jext = gad_extended_jacobian(model, x_s, vec, form=form)
        check_tol = check_tol_factor * float(np.max(np.abs(Jext)))
        predicted = predicted_extended_spectrum(lams, i)
        residuals = [_eigvalue_residual(Jext, mu, rng) for mu in predicted]
        passed = all(r <= check_tol for r in residuals)
        gad_stable = max(predicted) < 0.0
        expect_stable = lam > 0.0 and all(l < 0.0 for j, l in enumerate(lams) if j != i)
        report.checks.append(EigenpairCheck(
            lam=lam, predicted=predicted, residuals=residuals, passed=passed,
            gad_stable=gad_stable, expect_stable=expect_stable,
            consistent=gad_stable == expect_stable,
        ))
        report.check_tol = check_tol
    return report
