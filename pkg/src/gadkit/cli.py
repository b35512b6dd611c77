"""Command-line front end.

Subcommands: run-gad, run-msgad, run-ac, classify, verify-theorem1,
sweep-gamma.  Options come from defaults, then an optional line-oriented
``key = value`` config file, then command-line flags (later sources win;
the provenance of every key is tracked).  Every run writes a
``run.manifest`` in the output directory that echoes the fully resolved
configuration in the same dialect, so re-running a subcommand with
``--config run.manifest`` replays the run; produced files are referenced
in the manifest as comment lines.

Exit codes: 0 success/verification pass, 2 non-convergence or a failed
verification, 1 error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import acshear, fieldio
from .dynamics import GadOptions, find_saddle
from .errors import ConfigError, GadkitError
from .multiscale import HmmParams, get_slowfast_model, msgad_find_saddle
from .stability import classify_fixed_point, refine_fixed_point, verify_predicted_spectrum
from .vectorfield import get_model

# ---------------------------------------------------------------------------
# Config schema and parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    default: object
    help: str = ""


def _parse_str(s: str) -> str:
    return s


def _parse_choice(*choices):
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"must be one of {', '.join(choices)}")
        return s
    return parse


def _parse_float(s: str) -> float:
    return float(s)


def _parse_pos_float(s: str) -> float:
    v = float(s)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _parse_nonneg_float(s: str) -> float:
    v = float(s)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _parse_pos_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise ValueError("must be a positive integer")
    return v


def _parse_nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError("must be a non-negative integer")
    return v


def _parse_int(s: str) -> int:
    return int(s)


def _parse_auto_or_nonneg(s: str):
    if s == "auto":
        return None
    return _parse_nonneg_float(s)


def _parse_auto_or_pos(s: str):
    if s == "auto":
        return None
    return _parse_pos_float(s)


def _parse_float_list(s: str) -> tuple:
    items = [p for p in s.replace("[", "").replace("]", "").split(",") if p.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(p) for p in items)


_GAD_NUMERICS = {
    "dt": _Key(_parse_pos_float, 1e-3),
    "max_steps": _Key(_parse_pos_int, 1_000_000),
    "residual_tol": _Key(_parse_pos_float, 1e-8),
    "relaxation": _Key(_parse_pos_float, 1.0),
    "kick": _Key(_parse_auto_or_nonneg, None, "perturbation magnitude or 'auto'"),
}

_AC_NUMERICS = {
    "variant": _Key(_parse_choice(*acshear.SHEAR_VARIANTS), "x-shear"),
    "gamma_shear": _Key(_parse_nonneg_float, 0.0),
    "kappa": _Key(_parse_pos_float, 0.01),
    "grid_n": _Key(_parse_pos_int, 128),
    "dt": _Key(_parse_pos_float, 1e-3),
    "max_steps": _Key(_parse_pos_int, 1_000_000),
    "residual_tol": _Key(_parse_pos_float, 1e-6),
    "relaxation": _Key(_parse_pos_float, 1.0),
    "seed_profile": _Key(_parse_choice("droplet", "stripe", "stripe-x"), "droplet"),
    "droplet_radius": _Key(_parse_pos_float, 0.25),
    "stripe_width": _Key(_parse_pos_float, 0.5),
}

COMMAND_SCHEMAS: dict[str, dict[str, _Key]] = {
    "run-gad": {
        "model": _Key(_parse_str, "example1"),
        "dynamics": _Key(_parse_choice("simplified-v", "simplified-w", "original", "hamilton"),
                         "simplified-v"),
        "x0": _Key(_parse_str, "m1", "landmark name or comma/bracket vector"),
        "v0": _Key(_parse_str, "[1,0]"),
        **_GAD_NUMERICS,
        "record_every": _Key(_parse_nonneg_int, 100),
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
    "run-msgad": {
        "model": _Key(_parse_str, "example2-slowfast"),
        "variant": _Key(_parse_choice("v-form", "w-form"), "v-form"),
        "x0": _Key(_parse_str, "m2"),
        "v0": _Key(_parse_str, "[0,1]"),
        "dt": _Key(_parse_pos_float, 5e-3),
        "max_steps": _Key(_parse_pos_int, 20_000),
        "residual_tol": _Key(_parse_pos_float, 1e-2),
        "relaxation": _Key(_parse_pos_float, 1.0),
        "kick": _Key(_parse_auto_or_nonneg, None),
        "epsilon": _Key(_parse_pos_float, 1e-3),
        "dt_micro": _Key(_parse_auto_or_pos, None, "micro step or 'auto' (0.05*epsilon)"),
        "n_burnin": _Key(_parse_pos_int, 200),
        "n_average": _Key(_parse_pos_int, 2000),
        "n_replicas": _Key(_parse_pos_int, 4),
        "window": _Key(_parse_pos_int, 50),
        "seed": _Key(_parse_int, 0),
        "record_every": _Key(_parse_nonneg_int, 10),
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
    "run-ac": {
        **_AC_NUMERICS,
        "record_every": _Key(_parse_nonneg_int, 1000),
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
    "classify": {
        "model": _Key(_parse_str, "example1"),
        "x": _Key(_parse_str, "s"),
        "tol": _Key(_parse_pos_float, 1e-8),
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
    "verify-theorem1": {
        "model": _Key(_parse_str, "example1"),
        "points": _Key(_parse_str, "auto",
                       "comma-separated landmark names, or 'auto' for saddles"),
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
    "sweep-gamma": {
        "gammas": _Key(_parse_float_list, (0.005, 0.02, 0.035, 0.05, 0.065, 0.08)),
        **_AC_NUMERICS,
        "output_dir": _Key(_parse_str, "gadkit-out"),
    },
}

# the sweep tracks the twisted transverse branch by default
COMMAND_SCHEMAS["sweep-gamma"]["seed_profile"] = _Key(
    _parse_choice("droplet", "stripe", "stripe-x"), "stripe-x")

# gamma_shear is ignored by sweep-gamma (the sweep list drives it); drop it
COMMAND_SCHEMAS["sweep-gamma"].pop("gamma_shear")


@dataclass
class RunConfig:
    command: str
    values: dict
    provenance: dict


def _read_config_file(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def parse_config(command: str, config_file=None, flags: dict | None = None) -> RunConfig:
    """Resolve a configuration: defaults, then file entries, then flags.

    Unknown keys, unparsable values, and command mismatches raise
    ConfigError naming the offending key.
    """
    if command not in COMMAND_SCHEMAS:
        raise ConfigError(f"unknown command '{command}'")
    schema = COMMAND_SCHEMAS[command]
    values = {k: spec.default for k, spec in schema.items()}
    provenance = {k: "default" for k in schema}

    def apply(entries: dict, source: str):
        for key, raw in entries.items():
            if key == "command":
                if raw != command:
                    raise ConfigError(
                        f"config file is for command '{raw}', not '{command}'")
                continue
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' for command '{command}'")
            if raw is None:
                continue
            try:
                values[key] = schema[key].parse(raw) if isinstance(raw, str) else raw
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for key '{key}': {exc}") from None
            provenance[key] = source

    if config_file is not None:
        apply(_read_config_file(config_file), "file")
    if flags:
        apply(flags, "flag")
    return RunConfig(command=command, values=values, provenance=provenance)


def _format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(repr(float(g)) for g in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(cfg: RunConfig, outdir: Path, outputs: list[str]) -> Path:
    path = outdir / "run.manifest"
    lines = [f"command = {cfg.command}"]
    for key in sorted(cfg.values):
        lines.append(f"{key} = {_format_value(cfg.values[key])}")
    for name in outputs:
        lines.append(f"# output: {name}")
    path.write_text("\n".join(lines) + "\n")
    return path


def parse_point(spec: str, landmarks, dim: int) -> np.ndarray:
    """A point is a landmark name or a comma/bracket-separated vector."""
    if spec in landmarks:
        return np.array(landmarks[spec], dtype=float)
    try:
        vec = np.array(_parse_float_list(spec), dtype=float)
    except ValueError:
        known = ", ".join(sorted(landmarks)) or "(none)"
        raise ConfigError(
            f"point {spec!r} is neither a landmark ({known}) nor a vector") from None
    if vec.shape != (dim,):
        raise ConfigError(f"point {spec!r} has dimension {vec.shape[0]}, expected {dim}")
    return vec


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _execute_run_gad(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    model = get_model(v["model"])
    x0 = parse_point(v["x0"], model.landmarks, model.dim)
    if v["x0"] in model.landmarks:
        # a named landmark denotes the actual fixed point: refine the
        # 4-decimal catalog value so the kick logic sees a true residual
        x0 = refine_fixed_point(model, x0)
    v0 = parse_point(v["v0"], model.landmarks, model.dim)
    opts = GadOptions(dt=v["dt"], max_steps=v["max_steps"],
                      residual_tol=v["residual_tol"], relaxation=v["relaxation"],
                      kick=v["kick"])
    record = v["record_every"] if v["record_every"] > 0 else max(1, v["max_steps"] // 1000)
    result = find_saddle(model, x0, v0, opts, dynamics=v["dynamics"], record_every=record)
    fieldio.write_trajectory_csv(outdir / "trajectory.csv", result.trajectory, model.dim)
    _write_json(outdir / "result.json", {
        "model": model.name,
        "dynamics": v["dynamics"],
        "x_star": [float(c) for c in result.x_star],
        "dir_star": [float(c) for c in result.dir_star.components],
        "residual_inf": result.residual,
        "steps": result.steps,
        "converged": result.converged,
        "eigen_estimate": result.eigen_estimate,
    })
    return (0 if result.converged else 2), ["trajectory.csv", "result.json"]


def _execute_run_msgad(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    model = get_slowfast_model(v["model"])
    if v["epsilon"] != model.epsilon:
        model = dataclasses.replace(model, epsilon=v["epsilon"])
    x0 = parse_point(v["x0"], model.landmarks, model.dim_slow)
    v0 = parse_point(v["v0"], model.landmarks, model.dim_slow)
    opts = GadOptions(dt=v["dt"], max_steps=v["max_steps"],
                      residual_tol=v["residual_tol"], relaxation=v["relaxation"],
                      kick=v["kick"])
    params = HmmParams(dt_micro=v["dt_micro"], n_burnin=v["n_burnin"],
                       n_average=v["n_average"], n_replicas=v["n_replicas"],
                       seed=v["seed"])
    record = v["record_every"] if v["record_every"] > 0 else 10
    result = msgad_find_saddle(model, x0, v0, opts, params, variant=v["variant"],
                               window=v["window"], record_every=record)
    fieldio.write_trajectory_csv(outdir / "trajectory.csv", result.trajectory,
                                 model.dim_slow, stderr_dim=model.dim_slow)
    _write_json(outdir / "result.json", {
        "model": model.name,
        "variant": v["variant"],
        "seed": v["seed"],
        "x_star": [float(c) for c in result.x_star],
        "dir_star": [float(c) for c in result.dir_star.components],
        "residual_window_inf": result.residual,
        "steps": result.steps,
        "converged": result.converged,
        "eigen_estimate": result.eigen_estimate,
    })
    return (0 if result.converged else 2), ["trajectory.csv", "result.json"]


def _ac_seed_fields(v: dict):
    if v["seed_profile"] == "droplet":
        phi = acshear.droplet_seed(v["grid_n"], radius=v["droplet_radius"], kappa=v["kappa"])
    else:
        axis = "x" if v["seed_profile"] == "stripe-x" else "y"
        phi = acshear.stripe_seed(v["grid_n"], width=v["stripe_width"],
                                  kappa=v["kappa"], axis=axis)
    return phi, acshear.default_direction_seed(phi)


def _execute_run_ac(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    shear = acshear.ShearConfig(variant=v["variant"], shear_rate=v["gamma_shear"],
                                kappa=v["kappa"])
    opts = GadOptions(dt=v["dt"], max_steps=v["max_steps"],
                      residual_tol=v["residual_tol"], relaxation=v["relaxation"])
    phi0, v0 = _ac_seed_fields(v)
    record = v["record_every"] if v["record_every"] > 0 else 1000
    result = acshear.pde_find_saddle(phi0, v0, shear, opts, record_every=record)
    fieldio.save_field_csv(result.phi_star, outdir / "phi_star.csv")
    fieldio.save_field_fld2(result.phi_star, outdir / "phi_star.fld2")
    fieldio.save_field_fld2(result.v_star, outdir / "v_star.fld2")
    fieldio.write_pde_trajectory_csv(outdir / "convergence.csv", result.trajectory)
    _write_json(outdir / "result.json", {
        "variant": v["variant"],
        "gamma_shear": v["gamma_shear"],
        "grid_n": v["grid_n"],
        "residual_l2": result.residual,
        "steps": result.steps,
        "converged": result.converged,
        "rayleigh": result.rayleigh,
        "energy": result.energy,
        "x_variation": acshear.x_variation(result.phi_star),
        "symmetry_residual": acshear.symmetry_residual(result.phi_star),
    })
    outputs = ["phi_star.csv", "phi_star.fld2", "v_star.fld2",
               "convergence.csv", "result.json"]
    return (0 if result.converged else 2), outputs


def _execute_classify(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    model = get_model(v["model"])
    x0 = parse_point(v["x"], model.landmarks, model.dim)
    x = refine_fixed_point(model, x0)
    report = classify_fixed_point(model, x, tol=v["tol"])
    payload = {
        "model": model.name,
        "x": [float(c) for c in report.x],
        "residual_inf": report.residual,
        "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in report.eigenvalues],
        "index": report.index,
        "classification": report.classification,
    }
    _write_json(outdir / "classification.json", payload)
    print(f"{model.name} @ {np.array2string(report.x, precision=8)}: "
          f"{report.classification} (index {report.index})")
    return 0, ["classification.json"]


def _execute_verify(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    model = get_model(v["model"])
    if v["points"] == "auto":
        names = sorted(k for k in model.landmarks if k.startswith("s"))
        if not names:
            names = sorted(model.landmarks)
    else:
        names = [p.strip() for p in v["points"].split(",") if p.strip()]
    reports = []
    texts = []
    for name in names:
        x = refine_fixed_point(model, parse_point(name, model.landmarks, model.dim))
        rep = verify_predicted_spectrum(model, x)
        reports.append(rep)
        texts.append(rep.format_text())
    all_passed = all(r.all_passed for r in reports)
    _write_json(outdir / "verification.json", {
        "model": model.name,
        "all_passed": all_passed,
        "reports": [r.to_json_dict() for r in reports],
    })
    (outdir / "verification.txt").write_text("\n\n".join(texts) + "\n")
    print("\n\n".join(texts))
    return (0 if all_passed else 2), ["verification.json", "verification.txt"]


def _execute_sweep(cfg: RunConfig, outdir: Path) -> tuple[int, list[str]]:
    v = cfg.values
    base = acshear.ShearConfig(variant=v["variant"], shear_rate=0.0, kappa=v["kappa"])
    opts = GadOptions(dt=v["dt"], max_steps=v["max_steps"],
                      residual_tol=v["residual_tol"], relaxation=v["relaxation"])
    phi0, v0 = _ac_seed_fields(v)
    sweep = acshear.continuation_in_gamma(v["gammas"], base, phi0, opts, v_seed=v0)
    outputs = []
    for stage in sweep.stages:
        tag = f"{stage.gamma:g}".replace(".", "p")
        for ext, writer in (("csv", fieldio.save_field_csv), ("fld2", fieldio.save_field_fld2)):
            name = f"saddle_gamma_{tag}.{ext}"
            writer(stage.result.phi_star, outdir / name)
            outputs.append(name)
    fieldio.write_sweep_csv(outdir / "sweep_summary.csv", sweep.stages)
    outputs.append("sweep_summary.csv")
    _write_json(outdir / "result.json", {
        "variant": v["variant"],
        "completed": sweep.completed,
        "stages": [
            {
                "gamma": st.gamma,
                "energy": st.energy,
                "residual": st.result.residual,
                "x_variation": st.x_variation,
                "symmetry_residual": st.symmetry_residual,
                "steps": st.result.steps,
                "converged": st.result.converged,
                "rayleigh": st.result.rayleigh,
            }
            for st in sweep.stages
        ],
    })
    outputs.append("result.json")
    return (0 if sweep.completed else 2), outputs


_EXECUTORS = {
    "run-gad": _execute_run_gad,
    "run-msgad": _execute_run_msgad,
    "run-ac": _execute_run_ac,
    "classify": _execute_classify,
    "verify-theorem1": _execute_verify,
    "sweep-gamma": _execute_sweep,
}


def execute(cfg: RunConfig) -> int:
    """Dispatch a resolved configuration; returns the process exit code."""
    outdir = Path(cfg.values["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    status, outputs = _EXECUTORS[cfg.command](cfg, outdir)
    write_manifest(cfg, outdir, outputs)
    return status


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gadkit",
        description="Saddle-point searches for non-gradient dynamical systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in COMMAND_SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key = value config file")
        for key, spec in schema.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           metavar="V", help=spec.help or f"default: {_format_value(spec.default)}")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    flags = {k: val for k, val in vars(args).items()
             if k not in ("command", "config") and val is not None}
    try:
        cfg = parse_config(args.command, args.config, flags)
        return execute(cfg)
    except GadkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
