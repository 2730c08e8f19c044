"""Config files, binary checkpoints, NDJSON report streams, and the CLI.

The config format is INI with a fixed schema (see _SCHEMA): unknown sections
or keys are errors, every key has a typed default, and `dump-config` echoes
the fully validated file in canonical order.  Checkpoints are a fixed-layout
binary snapshot of the physical state; reloading one and continuing must
reproduce the uninterrupted run bit for bit, so loading does not re-project
the velocity unless its divergence defect is above 1e-10.

Report lines are newline-delimited JSON, one object per recorded step, all
floats printed with 17 significant digits.  Every value is a pure function
of the instantaneous state, which is what makes resumed streams splice
exactly onto the original ones.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import struct
import sys
from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    CoveringSet,
    build_covering,
    energy_identity_residual,
    ls_ratio,
)
from .experiments import (
    NumericsError,
    run_coupled_family,
    run_ensemble,
    run_path,
)
from .grid import (
    DirectorField,
    SpectralGrid,
    VelocityField,
    random_band_limited,
    sobolev_norm,
)
from .noise import NoiseModel
from .operators import (
    GLParams,
    bilaplacian_identity_residual,
    convect_director,
    convect_velocity,
    director_cross_h,
    ericksen_stress,
    gl_penalty,
    leray_project,
    leray_project_spec,
)
from .stepper import CflError, SimState, StepperConfig, gl_reaction_phys, rotate_phys

__all__ = [
    "ConfigError",
    "SimConfig",
    "SimBundle",
    "load_config",
    "dump_config",
    "build_components",
    "parse_eps_family",
    "save_checkpoint",
    "load_checkpoint",
    "REPORT_KEYS",
    "format_report",
    "CheckResult",
    "run_identity_checks",
    "main",
]


class ConfigError(ValueError):
    """Malformed or out-of-range configuration input."""


# section -> key -> (type tag, default).  Key order here is the canonical
# order used by dump_config.
_SCHEMA = {
    "grid": {
        "n_modes": ("int", 64),
    },
    "stepper": {
        "dt": ("float", 1e-3),
        "t_end": ("float", 0.25),
        "scheme": ("str", "strang"),
        "cfl_safety": ("float", 0.5),
        "max_halvings": ("int", 8),
    },
    "gl": {
        "epsilon": ("float", 0.1),
    },
    "noise": {
        "gamma": ("float", 3.0),
        "mode_cutoff": ("int", 0),
        "seed": ("int", 0),
        "path_id": ("int", 0),
        "velocity_on": ("bool", True),
        "director_on": ("bool", True),
    },
    "h_field": {
        "profile": ("str", "constant"),
        "magnitude": ("float", 1.0),
    },
    "initial": {
        "u0": ("str", "zero"),
        "n0": ("str", "constant_e3"),
        "u0_amplitude": ("float", 0.5),
        "n0_amplitude": ("float", 0.3),
        "normalize_n0": ("bool", True),
        "seed": ("int", 7),
    },
    "stops": {
        "delta": ("str", "auto"),
        "radius": ("float", 0.7853981633974483),
    },
    "output": {
        "ndjson_path": ("str", "-"),
        "report_every": ("int", 1),
        "checkpoint_path": ("str", ""),
        "checkpoint_every": ("int", 0),
    },
    "convergence": {
        "eps_family": ("str", "0.4, 0.2, 0.1, 0.05"),
        "alpha": ("float", 1.0),
        "n_paths": ("int", 8),
        "output_dir": ("str", ""),
    },
    "ensemble": {
        "n_paths": ("int", 64),
    },
}

_BOOL_WORDS = {
    "1": True, "true": True, "yes": True, "on": True,
    "0": False, "false": False, "no": False, "off": False,
}


def _convert(section: str, key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _BOOL_WORDS[raw.lower()]
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind}") from None


@dataclass
class SimConfig:
    """Typed configuration values, every schema key present."""

    values: dict

    def get(self, section: str, key: str):
        return self.values[section][key]

    def section(self, name: str) -> dict:
        return self.values[name]


def load_config(path: str) -> SimConfig:
    """Parse and type-check an INI file against the schema.

    Unknown sections or keys, and values that fail to parse, raise
    ConfigError; syntax errors keep configparser's line numbers.
    """
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {sec: {key: default for key, (_, default) in keys.items()}
              for sec, keys in _SCHEMA.items()}
    for sec in parser.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown config key {sec}.{key}")
            values[sec][key] = _convert(sec, key, _SCHEMA[sec][key][0], raw)
    return SimConfig(values=values)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: SimConfig) -> str:
    """Canonical INI echo: schema order, defaults filled in."""
    lines = []
    for sec, keys in _SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            lines.append(f"{key} = {_format_value(cfg.values[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def parse_eps_family(text: str) -> tuple[float, ...]:
    try:
        eps = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"convergence.eps_family: cannot parse {text!r}") from None
    if not eps:
        raise ConfigError("convergence.eps_family: needs at least one value")
    if any(e <= 0.0 for e in eps):
        raise ConfigError("convergence.eps_family: entries must be > 0")
    if len(set(eps)) != len(eps):
        raise ConfigError("convergence.eps_family: entries must be distinct")
    return eps


# -- initial data and axis-field presets ----------------------------------------

def _load_field_file(path: str, shape: tuple) -> np.ndarray:
    try:
        arr = np.asarray(np.load(path), dtype=np.float64)
    except OSError as exc:
        raise ConfigError(f"cannot read field file {path!r}: {exc}") from None
    if arr.shape != shape:
        raise ConfigError(f"field file {path!r} has shape {arr.shape}, expected {shape}")
    return arr


def _initial_velocity(grid: SpectralGrid, cfg: SimConfig) -> np.ndarray:
    """Physical u0 from its preset, projected and dealiased."""
    name = cfg.get("initial", "u0")
    amp = cfg.get("initial", "u0_amplitude")
    x1, x2 = grid.meshgrid()
    if name == "zero":
        phys = np.zeros((2, grid.n_modes, grid.n_modes))
    elif name == "shear":
        phys = np.stack([amp * np.sin(x2), np.zeros_like(x2)])
    elif name == "taylor_green":
        phys = amp * np.stack([np.cos(x1) * np.sin(x2), -np.sin(x1) * np.cos(x2)])
    elif name == "random_band":
        rng = np.random.default_rng([cfg.get("initial", "seed"), 0])
        phys = random_band_limited(grid, 2, max(2, grid.n_modes // 8), rng, amp)
    elif name.startswith("file:"):
        phys = _load_field_file(name[5:], (2, grid.n_modes, grid.n_modes))
    else:
        raise ConfigError(f"initial.u0: unknown preset {name!r}")
    spec = leray_project_spec(grid, grid.dealias(grid.to_spec(phys)))
    return grid.to_phys(spec)


def _initial_director(grid: SpectralGrid, cfg: SimConfig) -> np.ndarray:
    name = cfg.get("initial", "n0")
    amp = cfg.get("initial", "n0_amplitude")
    x1, _ = grid.meshgrid()
    if name == "constant_e3":
        phys = np.zeros((3, grid.n_modes, grid.n_modes))
        phys[2] = 1.0
    elif name == "circle_x1":
        phys = np.stack([np.cos(x1), np.sin(x1), np.zeros_like(x1)])
    elif name == "random_unit":
        rng = np.random.default_rng([cfg.get("initial", "seed"), 1])
        phys = random_band_limited(grid, 3, max(2, grid.n_modes // 8), rng, amp)
        phys = phys + np.array([0.0, 0.0, 1.0])[:, None, None]
    elif name == "random_band":
        rng = np.random.default_rng([cfg.get("initial", "seed"), 1])
        phys = random_band_limited(grid, 3, max(2, grid.n_modes // 8), rng, amp)
    elif name.startswith("file:"):
        phys = _load_field_file(name[5:], (3, grid.n_modes, grid.n_modes))
    else:
        raise ConfigError(f"initial.n0: unknown preset {name!r}")
    if cfg.get("initial", "normalize_n0") or name == "random_unit":
        mag = np.sqrt(np.sum(phys * phys, axis=0))
        low = float(np.min(mag))
        if low < 1e-8:
            raise ConfigError(
                f"initial.n0: cannot normalize, |n0| reaches {low:.3g}")
        phys = phys / mag
    return phys


def _axis_field(grid: SpectralGrid, cfg: SimConfig) -> DirectorField:
    profile = cfg.get("h_field", "profile")
    mag = cfg.get("h_field", "magnitude")
    if profile == "constant":
        scalar = np.full((grid.n_modes, grid.n_modes), mag)
    elif profile == "single_mode":
        x1, _ = grid.meshgrid()
        scalar = mag * np.cos(x1)
    else:
        raise ConfigError(f"h_field.profile: unknown profile {profile!r}")
    return DirectorField.from_scalar_axis(grid, scalar)


@dataclass
class SimBundle:
    """Everything a run needs, built from one validated config."""

    cfg: SimConfig
    grid: SpectralGrid
    gl: GLParams
    stepper: StepperConfig
    noise: NoiseModel
    covering: CoveringSet
    stop_delta: object
    state0: SimState


def build_components(cfg: SimConfig) -> SimBundle:
    """Semantic validation plus construction of all runtime objects."""
    try:
        grid = SpectralGrid(cfg.get("grid", "n_modes"))
    except ValueError as exc:
        raise ConfigError(f"grid.n_modes: {exc}") from None
    try:
        stepcfg = StepperConfig(
            dt=cfg.get("stepper", "dt"),
            t_end=cfg.get("stepper", "t_end"),
            scheme=cfg.get("stepper", "scheme"),
            cfl_safety=cfg.get("stepper", "cfl_safety"),
            max_halvings=cfg.get("stepper", "max_halvings"),
        )
        gl = GLParams(epsilon=cfg.get("gl", "epsilon"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.get("stepper", "max_halvings") < 0:
        raise ConfigError("stepper.max_halvings must be >= 0")
    for key in ("seed", "path_id"):
        if cfg.get("noise", key) < 0:
            raise ConfigError(f"noise.{key} must be >= 0")
    if cfg.get("initial", "seed") < 0:
        raise ConfigError("initial.seed must be >= 0")
    h = _axis_field(grid, cfg)
    try:
        noise = NoiseModel(
            grid=grid,
            gamma=cfg.get("noise", "gamma"),
            mode_cutoff=cfg.get("noise", "mode_cutoff"),
            seed=cfg.get("noise", "seed"),
            path_id=cfg.get("noise", "path_id"),
            velocity_on=cfg.get("noise", "velocity_on"),
            director_on=cfg.get("noise", "director_on"),
            h=h,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        covering = build_covering(grid, cfg.get("stops", "radius"))
    except ValueError as exc:
        raise ConfigError(f"stops.radius: {exc}") from None
    delta_raw = cfg.get("stops", "delta")
    if delta_raw == "auto":
        stop_delta = "auto"
    else:
        stop_delta = _convert("stops", "delta", "float", delta_raw)
        if stop_delta <= 0.0:
            raise ConfigError(f"stops.delta must be > 0 or 'auto', got {stop_delta}")
    if cfg.get("output", "report_every") < 1:
        raise ConfigError("output.report_every must be >= 1")
    if cfg.get("output", "checkpoint_every") < 0:
        raise ConfigError("output.checkpoint_every must be >= 0")
    parse_eps_family(cfg.get("convergence", "eps_family"))
    alpha = cfg.get("convergence", "alpha")
    if not (1.0 <= alpha < 2.0):
        raise ConfigError(f"convergence.alpha must be in [1, 2), got {alpha}")
    for sec in ("convergence", "ensemble"):
        if cfg.get(sec, "n_paths") < 1:
            raise ConfigError(f"{sec}.n_paths must be >= 1")
    state0 = SimState.from_arrays(grid, _initial_velocity(grid, cfg),
                                  _initial_director(grid, cfg))
    return SimBundle(cfg=cfg, grid=grid, gl=gl, stepper=stepcfg, noise=noise,
                     covering=covering, stop_delta=stop_delta, state0=state0)


# -- checkpoints -----------------------------------------------------------------

_CKPT_MAGIC = b"NSGL"
_CKPT_VERSION = 1
# magic, version, n_modes, step, seed, path_id, epsilon, t
_CKPT_HEADER = struct.Struct("<4sIIQQQdd")


def save_checkpoint(path: str, state: SimState, gl: GLParams, noise: NoiseModel):
    """Fixed-layout binary snapshot.

    Header (little endian): magic "NSGL", u32 version, u32 n_modes, u64 step,
    u64 seed, u64 path_id, f64 epsilon, f64 t.  Payload: u as 2*N*N float64
    then n as 3*N*N float64, C order, little endian.
    """
    n = state.grid.n_modes
    header = _CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION, n, state.step,
                               noise.seed, noise.path_id, gl.epsilon, state.t)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.u.phys, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.n.phys, dtype="<f8").tobytes())


def load_checkpoint(path: str, grid: SpectralGrid | None = None):
    """Read a checkpoint back into (SimState, meta dict).

    The velocity is re-projected only when its divergence defect exceeds
    1e-10, so saving and loading a healthy state is byte-exact.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path!r}: {exc}") from None
    if len(blob) < _CKPT_HEADER.size:
        raise ConfigError(f"{path}: too short to be a checkpoint")
    magic, version, n, step_idx, seed, path_id, eps, t = _CKPT_HEADER.unpack_from(blob)
    if magic != _CKPT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
    if version != _CKPT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    expected = _CKPT_HEADER.size + 5 * n * n * 8
    if len(blob) != expected:
        raise ConfigError(f"{path}: truncated checkpoint ({len(blob)} of {expected} bytes)")
    if grid is None:
        grid = SpectralGrid(n)
    elif grid.n_modes != n:
        raise ConfigError(f"{path}: grid mismatch (checkpoint N={n}, config N={grid.n_modes})")
    off = _CKPT_HEADER.size
    u_phys = np.frombuffer(blob, dtype="<f8", count=2 * n * n, offset=off)
    u_phys = u_phys.reshape(2, n, n).astype(np.float64)
    off += 2 * n * n * 8
    n_phys = np.frombuffer(blob, dtype="<f8", count=3 * n * n, offset=off)
    n_phys = n_phys.reshape(3, n, n).astype(np.float64)
    u_field = VelocityField(grid, phys=u_phys)
    defect = u_field.divergence_defect()
    reprojected = defect > 1e-10
    if reprojected:
        u_field = leray_project(u_field)
    state = SimState(t=t, step=step_idx, u=u_field,
                     n=DirectorField(grid, phys=n_phys))
    meta = {"n_modes": n, "step": step_idx, "t": t, "epsilon": eps, "seed": seed,
            "path_id": path_id, "div_defect": defect, "reprojected": reprojected}
    return state, meta


# -- NDJSON report stream ----------------------------------------------------------

REPORT_KEYS = (
    "step", "t", "energy_E", "enstrophy_D", "gl_mass", "lambda1", "lambda2",
    "eps_defect", "eps_grad_defect", "min_abs_n", "max_abs_n", "grad_n_L4",
    "u_sq", "grad_n_sq", "max_abs_u", "div_defect",
    "local_energy_max", "local_grad_max",
)


def format_report(report) -> str:
    """One NDJSON object, fixed key order, floats at 17 significant digits."""
    parts = [f'"step": {report.step}']
    for key in REPORT_KEYS[1:]:
        v = getattr(report, key)
        parts.append(f'"{key}": ' + (f"{v:.17g}" if math.isfinite(v) else "null"))
    return "{" + ", ".join(parts) + "}"


# -- operator identity self-tests ---------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def _rk4_logistic(y0: np.ndarray, a: np.ndarray, n_sub: int) -> np.ndarray:
    """Reference integration of y' = a y (1 - y) over unit time."""
    y = np.array(y0, dtype=np.float64)
    hs = 1.0 / n_sub

    def f(v):
        return a * v * (1.0 - v)

    for _ in range(n_sub):
        k1 = f(y)
        k2 = f(y + 0.5 * hs * k1)
        k3 = f(y + 0.5 * hs * k2)
        k4 = f(y + hs * k3)
        y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _gl_map_residual() -> float:
    """Closed-form reaction map against the RK4 oracle on a (y0, rate) sweep."""
    y0 = np.linspace(0.0, 1.5, 31)
    rates = np.linspace(0.0, 5.0, 21)  # dt / eps^2
    y_grid = np.tile(y0[:, None], (1, len(rates)))
    a_grid = np.tile(2.0 * rates[None, :], (len(y0), 1))
    y_ref = _rk4_logistic(y_grid, a_grid, 16384)
    worst = 0.0
    for j, r in enumerate(rates):
        n_in = np.zeros((3, len(y0), 1))
        n_in[0, :, 0] = np.sqrt(y0)
        n_out = gl_reaction_phys(n_in, float(r), 1.0)
        y_map = np.sum(n_out * n_out, axis=0)[:, 0]
        worst = max(worst, float(np.max(np.abs(y_map - y_ref[:, j]))))
    return worst


def run_identity_checks(n_modes: int = 64, samples: int = 32, seed: int = 99,
                        tol: float = 1e-8) -> list[CheckResult]:
    """Randomized operator identities on band-limited fields.

    The band is kept at N // 10 so cubic products still integrate exactly on
    the grid; every residual below is then pure floating-point noise.
    """
    grid = SpectralGrid(n_modes)
    k_max = max(2, n_modes // 10)
    rng = np.random.default_rng(seed)
    names = ["leray_idempotent", "leray_self_adjoint", "leray_kills_gradients",
             "advect_u_skew", "advect_n_skew", "stress_transport_cancel",
             "penalty_orthogonal", "bilaplacian_identity", "rotation_isometry"]
    worst = dict.fromkeys(names, 0.0)
    tiny = 1e-300
    for _ in range(samples):
        w = VelocityField(grid, phys=random_band_limited(grid, 2, k_max, rng))
        v = VelocityField(grid, phys=random_band_limited(grid, 2, k_max, rng))
        u = leray_project(w)
        nf = DirectorField(grid, phys=random_band_limited(grid, 3, k_max, rng))
        hf = DirectorField(grid, phys=random_band_limited(grid, 3, k_max, rng))
        phi_spec = grid.to_spec(random_band_limited(grid, 1, k_max, rng)[0])

        pw = leray_project_spec(grid, w.spec)
        ppw = leray_project_spec(grid, pw)
        worst["leray_idempotent"] = max(
            worst["leray_idempotent"],
            grid.l2_norm_spec(ppw - pw) / (grid.l2_norm_spec(pw) + tiny))

        pv = leray_project_spec(grid, v.spec)
        lhs = grid.l2_inner_spec(pw, v.spec)
        rhs = grid.l2_inner_spec(w.spec, pv)
        scale = grid.l2_norm_spec(w.spec) * grid.l2_norm_spec(v.spec) + tiny
        worst["leray_self_adjoint"] = max(worst["leray_self_adjoint"],
                                          abs(lhs - rhs) / scale)

        gspec = np.stack([grid.deriv(phi_spec, 1), grid.deriv(phi_spec, 2)])
        worst["leray_kills_gradients"] = max(
            worst["leray_kills_gradients"],
            grid.l2_norm_spec(leray_project_spec(grid, gspec))
            / (grid.l2_norm_spec(gspec) + tiny))

        cu = convect_velocity(u)
        pair = grid.l2_inner_spec(cu.spec, u.spec)
        scale = grid.l2_norm_spec(cu.spec) * grid.l2_norm_spec(u.spec) + tiny
        worst["advect_u_skew"] = max(worst["advect_u_skew"], abs(pair) / scale)

        cn = convect_director(u, nf)
        pair = grid.l2_inner_spec(cn.spec, nf.spec)
        scale = grid.l2_norm_spec(cn.spec) * grid.l2_norm_spec(nf.spec) + tiny
        worst["advect_n_skew"] = max(worst["advect_n_skew"], abs(pair) / scale)

        a = grid.l2_inner_spec(ericksen_stress(nf).spec, u.spec)
        b = grid.l2_inner_spec(cn.spec, grid.laplacian(nf.spec))
        worst["stress_transport_cancel"] = max(
            worst["stress_transport_cancel"], abs(a - b) / (abs(a) + abs(b) + tiny))

        fpen = gl_penalty(nf, GLParams(epsilon=1.0))
        nxh = director_cross_h(nf, hf)
        pair = grid.l2_inner_spec(fpen.spec, nxh.spec)
        scale = grid.l2_norm_spec(fpen.spec) * grid.l2_norm_spec(nxh.spec) + tiny
        worst["penalty_orthogonal"] = max(worst["penalty_orthogonal"],
                                          abs(pair) / scale)

        res = bilaplacian_identity_residual(nf)
        scale = 1.0 + sobolev_norm(nf, 4.0, homogeneous=False) ** 2
        worst["bilaplacian_identity"] = max(worst["bilaplacian_identity"],
                                            res / scale)

        mag = hf.norm_phys()
        unit = hf.phys / np.where(mag > 0.0, mag, 1.0)
        d_eta = float(rng.uniform(-2.0, 2.0))
        rotated = rotate_phys(nf.phys, unit, mag, d_eta)
        before = np.sqrt(np.sum(nf.phys ** 2, axis=0))
        after = np.sqrt(np.sum(rotated ** 2, axis=0))
        worst["rotation_isometry"] = max(
            worst["rotation_isometry"],
            float(np.max(np.abs(after - before))) / (float(np.max(before)) + tiny))

    results = [CheckResult(name, worst[name],
                           1e-12 if name == "rotation_isometry" else tol)
               for name in names]
    results.append(CheckResult("gl_map_vs_ode", _gl_map_residual(), 1e-10))
    return results


# -- command line ------------------------------------------------------------------

class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the CLI contract is 1
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="nsgl",
        description="Spectral simulator for a penalized liquid-crystal flow "
                    "on the 2D torus, with transport and rotation noise.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_run = sub.add_parser("run", help="advance one path and stream NDJSON reports")
    p_run.add_argument("-c", "--config", required=True, help="INI config file")
    p_run.add_argument("--resume", metavar="CHECKPOINT", default=None,
                       help="continue from a checkpoint instead of the configured t=0 state")

    p_conv = sub.add_parser("converge",
                            help="coupled small-epsilon family, rate fits on stdout")
    p_conv.add_argument("-c", "--config", required=True)

    p_ens = sub.add_parser("ensemble", help="independent paths, moment summary on stdout")
    p_ens.add_argument("-c", "--config", required=True)

    p_chk = sub.add_parser("check", help="operator identity self-tests")
    p_chk.add_argument("--n-modes", type=int, default=64)
    p_chk.add_argument("--samples", type=int, default=32)
    p_chk.add_argument("--seed", type=int, default=99)
    p_chk.add_argument("--tol", type=float, default=1e-8)

    p_dump = sub.add_parser("dump-config", help="echo the validated config in canonical form")
    p_dump.add_argument("-c", "--config", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    bundle = build_components(cfg)
    state0 = bundle.state0
    if args.resume is not None:
        state0, meta = load_checkpoint(args.resume, grid=bundle.grid)
        if meta["epsilon"] != bundle.gl.epsilon:
            raise ConfigError(
                f"checkpoint epsilon {meta['epsilon']} != config gl.epsilon {bundle.gl.epsilon}")
        if meta["seed"] != bundle.noise.seed or meta["path_id"] != bundle.noise.path_id:
            raise ConfigError("checkpoint noise identity (seed, path_id) does not match config")
        if meta["reprojected"]:
            print(f"note: velocity re-projected on load (divergence defect "
                  f"{meta['div_defect']:.3g})", file=sys.stderr)
    out_path = cfg.get("output", "ndjson_path")
    every = cfg.get("output", "report_every")
    ck_path = cfg.get("output", "checkpoint_path")
    ck_every = cfg.get("output", "checkpoint_every")
    n_total = bundle.stepper.n_steps
    last_state = [state0]
    sink = sys.stdout if out_path == "-" else open(out_path, "w", encoding="utf-8")

    def on_report(state, report):
        last_state[0] = state
        if report.step % every == 0 or report.step == n_total:
            sink.write(format_report(report) + "\n")
        if ck_path and ck_every > 0 and report.step > 0 and report.step % ck_every == 0:
            save_checkpoint(ck_path, state, bundle.gl, bundle.noise)

    try:
        trace = run_path(state0, bundle.stepper, bundle.gl, bundle.noise,
                         covering=bundle.covering, stop_delta=bundle.stop_delta,
                         on_report=on_report)
    finally:
        if sink is not sys.stdout:
            sink.close()
    if ck_path:
        save_checkpoint(ck_path, last_state[0], bundle.gl, bundle.noise)
    res = energy_identity_residual(trace)
    lhs, rhs, ratio = ls_ratio(trace, bundle.covering.radius)
    stop = trace.stop
    e = trace.field_array("energy_E")
    lines = [
        f"steps = {trace.reports[-1].step}  t = {trace.reports[-1].t:.17g}",
        f"energy = {e[0]:.17g} -> {e[-1]:.17g}",
        f"energy balance residual = {res[-1]:.6g}",
        f"sigma1 = {stop.t_sigma1:.6g}  sigma2 = {stop.t_sigma2:.6g}  "
        f"sigma = {stop.sigma:.6g}  (delta = {stop.delta:.6g})",
        f"local smallness ratio = {ratio:.6g}  (lhs = {lhs:.6g}, rhs = {rhs:.6g})",
        f"max |n| = {trace.max_abs_n():.17g}",
    ]
    print("\n".join(lines), file=sys.stderr)
    return 0


def _cmd_converge(args) -> int:
    cfg = load_config(args.config)
    bundle = build_components(cfg)
    sec = cfg.section("convergence")
    eps_family = parse_eps_family(sec["eps_family"])
    out_dir = sec["output_dir"]
    sinks = {}
    on_member = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

        def on_member(p, eps, report):
            key = (p, eps)
            if key not in sinks:
                name = f"path{p:03d}_eps{eps:.17g}.ndjson"
                sinks[key] = open(os.path.join(out_dir, name), "w", encoding="utf-8")
            sinks[key].write(format_report(report) + "\n")

    try:
        report = run_coupled_family(
            bundle.state0, bundle.stepper, eps_family, bundle.noise,
            n_paths=sec["n_paths"], alpha=sec["alpha"], covering=bundle.covering,
            stop_delta=bundle.stop_delta, on_member_report=on_member)
    finally:
        for fh in sinks.values():
            fh.close()
    sys.stdout.write(report.to_text())
    return 0


def _cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    bundle = build_components(cfg)
    report = run_ensemble(bundle.state0, bundle.stepper, bundle.gl, bundle.noise,
                          n_paths=cfg.get("ensemble", "n_paths"),
                          covering=bundle.covering, stop_delta=bundle.stop_delta)
    sys.stdout.write(report.to_text())
    return 0


def _cmd_check(args) -> int:
    results = run_identity_checks(n_modes=args.n_modes, samples=args.samples,
                                  seed=args.seed, tol=args.tol)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max_residual = {r.residual:.3e}  "
              f"tol = {r.tol:.1e}")
    n_bad = sum(not r.passed for r in results)
    print(f"{len(results) - n_bad} of {len(results)} identity checks passed")
    return 0 if n_bad == 0 else 2


def _cmd_dump_config(args) -> int:
    cfg = load_config(args.config)
    build_components(cfg)
    sys.stdout.write(dump_config(cfg))
    return 0


_DISPATCH = {
    "run": _cmd_run,
    "converge": _cmd_converge,
    "ensemble": _cmd_ensemble,
    "check": _cmd_check,
    "dump-config": _cmd_dump_config,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _DISPATCH[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericsError, CflError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
