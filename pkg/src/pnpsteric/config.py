"""Experiment configuration files and the preset registry.

Configuration files are a TOML subset: dotted sections, scalar keys and
bracketed arrays.  A top-level ``preset = "name"`` starts from a registered
preset and lets the remaining keys override it.  The full key schema is
documented in ``docs/config.md``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .grid import BoundarySpec, Grid, SideBC, build_grid
from .model import ModelParams, NewtonSettings
from .scheme import RunConfig

SCHEMA = {
    "model": {"sigma", "z", "a"},
    "grid": {"dim", "nx", "ny", "lx", "ly"},
    "boundary": {"left", "left_value", "right", "right_value",
                 "bottom", "bottom_value", "top", "top_value"},
    "initial": {"kind", "values", "centers", "width", "amplitude", "offset", "path"},
    "run": {"dt", "n_steps", "epsilon", "mobility", "solver", "output_every",
            "snapshot_steps", "tol", "max_iter", "dt_halving", "max_sweeps"},
    "output": {"dir"},
}
TOP_LEVEL = {"preset", "name"}


@dataclass(frozen=True)
class InitialSpec:
    """Initial concentrations: ``constants``, ``gaussian`` bumps or a snapshot ``file``.

    Gaussian species ``i`` is ``amplitude * exp(-width * |x - c_i|^2) + offset``.
    """

    kind: str = "constants"
    values: tuple = ()
    centers: tuple = ()
    width: float = 100.0
    amplitude: float = 1.0
    offset: float = 0.5
    path: Optional[str] = None

    def evaluate(self, grid: Grid, n_species: int) -> np.ndarray:
        x, y = grid.centers()
        if self.kind == "constants":
            return np.tile(np.asarray(self.values, dtype=float), (grid.n_cells, 1))
        if self.kind == "gaussian":
            cols = []
            for c in self.centers:
                c = np.atleast_1d(np.asarray(c, dtype=float))
                r2 = (x - c[0]) ** 2 + ((y - c[1]) ** 2 if grid.dim == 2 else 0.0)
                cols.append(self.amplitude * np.exp(-self.width * r2) + self.offset)
            return np.stack(cols, axis=1)
        from .io import read_snapshot

        snap = read_snapshot(self.path)
        if snap["u"].shape != (grid.n_cells, n_species):
            raise ConfigError("initial.path", f"snapshot shape {snap['u'].shape} does not match the grid")
        return snap["u"]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    params: ModelParams
    dim: int
    nx: int
    ny: int
    lx: float
    ly: float
    boundary: BoundarySpec
    initial: InitialSpec
    run: RunConfig
    out_dir: str = "out"
    preset: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def build_grid(self, refine: int = 0) -> Grid:
        f = 2 ** refine
        return build_grid(self.dim, self.nx * f, self.ny * f if self.dim == 2 else 1,
                          self.lx, self.ly, self.boundary)

    def initial_data(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.build_grid()
        return self.initial.evaluate(grid, self.params.n_species)


PRESETS = {
    "paper-sec5": {
        "name": "paper-sec5",
        "model": {"sigma": 1.0, "z": [-5.0, 5.0, -5.0],
                  "a": [[2.5, 1.0, 1.0], [1.0, 1.0, 0.5], [1.0, 0.5, 0.5]]},
        # mesh size 0.05 read as a 20 x 20 uniform grid
        "grid": {"dim": 2, "nx": 20, "ny": 20, "lx": 1.0, "ly": 1.0},
        "boundary": {"left": "dirichlet", "left_value": 0.1,
                     "right": "dirichlet", "right_value": 0.1,
                     "bottom": "neumann", "top": "neumann"},
        "initial": {"kind": "gaussian",
                    "centers": [[0.25, 0.75], [0.5, 0.5], [0.75, 0.25]],
                    "width": 100.0, "amplitude": 1.0, "offset": 0.5},
        "run": {"dt": 4e-5, "n_steps": 380, "snapshot_steps": [0, 30, 380]},
        "output": {"dir": "out/paper-sec5"},
    },
    "decay-1d": {
        "name": "decay-1d",
        "model": {"sigma": 1.0, "z": [1.0, -1.0], "a": [[1.0, 0.0], [0.0, 1.0]]},
        "grid": {"dim": 1, "nx": 64, "lx": 1.0},
        "boundary": {"left": "neumann", "right": "neumann"},
        "initial": {"kind": "gaussian", "centers": [[0.3], [0.7]],
                    "width": 100.0, "amplitude": 0.5, "offset": 1.0},
        "run": {"dt": 1e-3, "n_steps": 150, "snapshot_steps": [0, 150]},
        "output": {"dir": "out/decay-1d"},
    },
    "wsu-1d": {
        "name": "wsu-1d",
        "model": {"sigma": 1.0, "z": [1.0, -1.0], "a": [[1.0, 0.5], [0.5, 1.0]]},
        "grid": {"dim": 1, "nx": 16, "lx": 1.0},
        "boundary": {"left": "dirichlet", "left_value": 0.0,
                     "right": "dirichlet", "right_value": 0.1},
        "initial": {"kind": "gaussian", "centers": [[0.3], [0.6]],
                    "width": 30.0, "amplitude": 0.5, "offset": 1.0},
        "run": {"dt": 4e-3, "n_steps": 10},
        "output": {"dir": "out/wsu-1d"},
    },
}


def preset_names():
    return sorted(PRESETS)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(raw):
    for key, val in raw.items():
        if key in TOP_LEVEL:
            continue
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if not isinstance(val, dict):
            raise ConfigError(key, "expected a section")
        for sub in val:
            if sub not in SCHEMA[key]:
                raise ConfigError(f"{key}.{sub}", "unknown key")


def _get(raw, section, key, default=None, required=False):
    sec = raw.get(section, {})
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key}", "missing required key")
        return default
    return sec[key]


def _num(raw, section, key, default=None, required=False, kind=float):
    val = _get(raw, section, key, default, required)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{section}.{key}", f"expected a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {val!r}")
    return kind(val)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping (already preset-expanded) into an ExperimentConfig."""
    if "preset" in raw:
        name = raw["preset"]
        if name not in PRESETS:
            raise ConfigError("preset", f"unknown preset {name!r}; known: {', '.join(preset_names())}")
        raw = _merge(PRESETS[name], {k: v for k, v in raw.items() if k != "preset"})
        raw["preset"] = name
    _check_keys(raw)

    sigma = _num(raw, "model", "sigma", required=True)
    z = _get(raw, "model", "z", required=True)
    a = _get(raw, "model", "a", required=True)
    try:
        z_arr = np.asarray(z, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("model.z", "expected an array of numbers") from None
    try:
        a_arr = np.asarray(a, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("model.a", "expected a square array of numbers") from None
    try:
        params = ModelParams(sigma, z_arr, a_arr)
    except ValueError as exc:
        field_name = str(exc).split(":")[0].strip()
        raise ConfigError(f"model.{field_name}", str(exc).split(":", 1)[-1].strip()) from None

    dim = _num(raw, "grid", "dim", 1, kind=int)
    if dim not in (1, 2):
        raise ConfigError("grid.dim", "must be 1 or 2")
    nx = _num(raw, "grid", "nx", required=True, kind=int)
    ny = _num(raw, "grid", "ny", 1, kind=int) if dim == 2 else 1
    lx = _num(raw, "grid", "lx", 1.0)
    ly = _num(raw, "grid", "ly", 1.0) if dim == 2 else 1.0
    for key, val in (("nx", nx), ("ny", ny)):
        if val < 1:
            raise ConfigError(f"grid.{key}", "must be at least 1")
    for key, val in (("lx", lx), ("ly", ly)):
        if not val > 0:
            raise ConfigError(f"grid.{key}", "must be positive")

    sides = {}
    valid_sides = ("left", "right") if dim == 1 else ("left", "right", "bottom", "top")
    for side in ("left", "right", "bottom", "top"):
        kind = _get(raw, "boundary", side, "neumann")
        if side not in valid_sides and side in raw.get("boundary", {}):
            raise ConfigError(f"boundary.{side}", "not a side of a 1D domain")
        if kind not in ("dirichlet", "neumann"):
            raise ConfigError(f"boundary.{side}", f"expected 'dirichlet' or 'neumann', got {kind!r}")
        value = _num(raw, "boundary", f"{side}_value", 0.0)
        sides[side] = SideBC(kind, value)
    boundary = BoundarySpec(**sides)

    n = params.n_species
    kind = _get(raw, "initial", "kind", "constants")
    if kind not in ("constants", "gaussian", "file"):
        raise ConfigError("initial.kind", f"unknown kind {kind!r}")
    values = tuple(_get(raw, "initial", "values", ()) or ())
    centers = tuple(tuple(np.atleast_1d(c).tolist()) for c in (_get(raw, "initial", "centers", ()) or ()))
    initial = InitialSpec(
        kind=kind, values=values, centers=centers,
        width=_num(raw, "initial", "width", 100.0),
        amplitude=_num(raw, "initial", "amplitude", 1.0),
        offset=_num(raw, "initial", "offset", 0.5),
        path=_get(raw, "initial", "path"),
    )
    if kind == "constants":
        if len(values) != n:
            raise ConfigError("initial.values", f"expected {n} values, got {len(values)}")
        if not all(isinstance(v, (int, float)) and v > 0 for v in values):
            raise ConfigError("initial.values", "values must be positive numbers")
    elif kind == "gaussian":
        if len(centers) != n:
            raise ConfigError("initial.centers", f"expected {n} centers, got {len(centers)}")
        if any(len(c) != dim for c in centers):
            raise ConfigError("initial.centers", f"each center needs {dim} coordinate(s)")
        if initial.offset <= 0 or initial.amplitude < 0 or initial.width < 0:
            raise ConfigError("initial.offset", "gaussian data must be positive (offset > 0, amplitude >= 0)")
    elif not initial.path:
        raise ConfigError("initial.path", "required for kind = 'file'")

    settings_kw = {}
    for key, kw, typ in (("tol", "tol", float), ("max_iter", "max_iter", int),
                         ("dt_halving", "dt_halving", int)):
        val = _num(raw, "run", key, None, kind=typ)
        if val is not None:
            settings_kw[kw] = val
    try:
        newton = NewtonSettings(**settings_kw)
    except ValueError as exc:
        raise ConfigError("run.tol", str(exc)) from None
    dt = _num(raw, "run", "dt", required=True)
    if not dt > 0:
        raise ConfigError("run.dt", f"must be positive, got {dt}")
    n_steps = _num(raw, "run", "n_steps", required=True, kind=int)
    run_kw = dict(
        dt=dt, n_steps=n_steps,
        epsilon=_num(raw, "run", "epsilon", 0.0),
        mobility=_get(raw, "run", "mobility", "arithmetic"),
        solver=_get(raw, "run", "solver", "newton"),
        output_every=_num(raw, "run", "output_every", 1, kind=int),
        snapshot_steps=tuple(_get(raw, "run", "snapshot_steps", ()) or ()),
        newton=newton,
        max_sweeps=_num(raw, "run", "max_sweeps", 50, kind=int),
    )
    try:
        run_cfg = RunConfig(**run_kw)
    except ValueError as exc:
        raise ConfigError("run." + str(exc).split(":")[0], str(exc).split(":", 1)[-1].strip()) from None

    return ExperimentConfig(
        name=str(raw.get("name", raw.get("preset", "custom"))),
        params=params, dim=dim, nx=nx, ny=ny, lx=lx, ly=ly, boundary=boundary,
        initial=initial, run=run_cfg,
        out_dir=str(_get(raw, "output", "dir", "out")),
        preset=raw.get("preset"), raw=raw,
    )


def parse_config(path) -> ExperimentConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "file not found")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from None
    cfg = config_from_dict(raw)
    if cfg.initial.kind == "file" and not Path(cfg.initial.path).is_absolute():
        initial = InitialSpec(**{**cfg.initial.__dict__, "path": str(path.parent / cfg.initial.path)})
        cfg = ExperimentConfig(**{**cfg.__dict__, "initial": initial})
    return cfg


def load_preset(name: str) -> ExperimentConfig:
    """Expand a registered preset into a validated configuration."""
    return config_from_dict({"preset": name})


def preset_paper_sec5() -> ExperimentConfig:
    return load_preset("paper-sec5")
