"""File formats: field CSV, FLD2 binary, trajectory CSV.

FLD2 layout: a 16-byte header (magic ``FLD2``, little-endian u32 grid
size n, 8 reserved zero bytes) followed by n*n little-endian float64
values in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .acshear import Field2D

_MAGIC = b"FLD2"
_HEADER = struct.Struct("<4sII4x")  # magic, n, reserved, 4 pad bytes -> 16 bytes


def save_field_csv(field: Field2D, path) -> None:
    np.savetxt(path, field.values, delimiter=",", fmt="%.17g")


def load_field_csv(path) -> Field2D:
    return Field2D(np.loadtxt(path, delimiter=","))


def save_field_fld2(field: Field2D, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, field.n, 0))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_field_fld2(path) -> Field2D:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated FLD2 file")
    magic, n, _reserved = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    expect = _HEADER.size + 8 * n * n
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes for n = {n}, got {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, n)
    return Field2D(values.astype(float))


def write_trajectory_csv(path, rows, dim: int, stderr_dim: int = 0) -> None:
    """Rows: (step, t, x (dim,), dir (dim,), residual_inf, rayleigh[, stderr]).

    Column layout: step, t, x_1..x_d, dir_1..dir_d, residual_inf, rayleigh
    and, when stderr_dim > 0, F_stderr_1..F_stderr_d.
    """
    header = (["step", "t"]
              + [f"x_{i + 1}" for i in range(dim)]
              + [f"dir_{i + 1}" for i in range(dim)]
              + ["residual_inf", "rayleigh"]
              + [f"F_stderr_{i + 1}" for i in range(stderr_dim)])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            step, t, x, d, res, ray = row[:6]
            cells = [step, f"{t:.17g}"]
            cells += [f"{v:.17g}" for v in x]
            cells += [f"{v:.17g}" for v in d]
            cells += [f"{res:.17g}", f"{ray:.17g}"]
            if stderr_dim:
                se = row[6] if len(row) > 6 else np.zeros(stderr_dim)
                cells += [f"{v:.17g}" for v in se]
            out.writerow(cells)


def write_pde_trajectory_csv(path, rows) -> None:
    """Rows: (step, t, residual_l2, rayleigh, energy)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["step", "t", "residual_l2", "rayleigh", "energy"])
        for step, t, res, ray, en in rows:
            out.writerow([step, f"{t:.17g}", f"{res:.17g}", f"{ray:.17g}", f"{en:.17g}"])


def write_sweep_csv(path, stages) -> None:
    """Stage summary: gamma, energy, residual, x_variation, symmetry_residual, steps."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["gamma", "energy", "residual", "x_variation",
                      "symmetry_residual", "steps"])
        for st in stages:
            out.writerow([
                f"{st.gamma:.17g}", f"{st.energy:.17g}", f"{st.result.residual:.17g}",
                f"{st.x_variation:.17g}", f"{st.symmetry_residual:.17g}", st.result.steps,
            ])
