"""Pure-numpy kernel backend (roll-based stencils, Python micro-chain loop).

Signature-compatible with the compiled backend in ``_fieldcore``; the
active implementation is chosen in ``_backend``.  All field arrays are
C-contiguous float64 of shape (n, n) with phi[i, j] sampled at
(x = j*h, y = i*h) and periodic wrap in both axes.

``adv_x_coef`` (indexed by row, a function of y) multiplies the centered
x-derivative; ``adv_y_coef`` (indexed by column, a function of x)
multiplies the centered y-derivative.
"""

import numpy as np


def laplacian(phi, out, inv_h2):
    np.copyto(out, np.roll(phi, 1, axis=0))
    out += np.roll(phi, -1, axis=0)
    out += np.roll(phi, 1, axis=1)
    out += np.roll(phi, -1, axis=1)
    out -= 4.0 * phi
    out *= inv_h2
    return out


def _advection(phi, adv_x_coef, adv_y_coef, inv_2h):
    adv = adv_x_coef[:, None] * ((np.roll(phi, -1, axis=1) - np.roll(phi, 1, axis=1)) * inv_2h)
    adv += adv_y_coef[None, :] * ((np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) * inv_2h)
    return adv


def ac_rhs(phi, out, kappa, inv_h2, inv_2h, adv_x_coef, adv_y_coef):
    """kappa * lap(phi) + phi - phi^3 + shear advection."""
    laplacian(phi, out, inv_h2)
    out *= kappa
    out += phi
    out -= phi * phi * phi
    out += _advection(phi, adv_x_coef, adv_y_coef, inv_2h)
    return out


def ac_linearized(phi, vec, out, kappa, inv_h2, inv_2h, adv_x_coef, adv_y_coef):
    """kappa * lap(vec) + vec - 3 phi^2 vec + shear advection of vec.

    The adjoint action is this kernel with negated advection coefficients.
    """
    laplacian(vec, out, inv_h2)
    out *= kappa
    out += vec
    out -= (3.0 * phi * phi) * vec
    out += _advection(vec, adv_x_coef, adv_y_coef, inv_2h)
    return out


def ou_chain(y, decay, amp, xi, n_burnin, out):
    """Componentwise affine Gaussian chain with frozen coefficients:

    y_{k+1} = decay * y_k + amp * xi[k]

    (the exact Ornstein-Uhlenbeck transition when decay = exp(-a dt) and
    amp is the matching stationary-variance factor).  ``y``
    (n_replicas, dim_fast) is advanced in place; post-burn-in states are
    written into ``out`` (n_keep, n_replicas, dim_fast).
    """
    n_total = xi.shape[0]
    for k in range(n_total):
        y *= decay
        y += amp * xi[k]
        if k >= n_burnin:
            out[k - n_burnin] = y
    return out
