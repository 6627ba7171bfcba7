"""Run configuration: JSON loading, defaults, overrides and validation.

Face-wise quantities (cost densities, bounds, initial controls) are given as
a number or as a mapping from wall name (``left``, ``right``, ``bottom``,
``top``) to a number; walls that are absent from a mapping get 0.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forms import PhysicalParams
from .grid import GAMMA1, GAMMA2, Domain, build_domain
from .state import ControlPair, CostWeights, TimeGrid

SIDES = ("left", "right", "bottom", "top")
METHODS = ("projected_gradient", "conditional_gradient")
# mappings whose keys are wall names rather than fixed fields
FREEFORM = {"geometry.partition", "cost.r1", "cost.r2", "controls.initial"}

DEFAULTS = {
    "geometry": {"Lx": 1.0, "Ly": 1.0, "nx": 8, "ny": 8, "partition": None},
    "physics": {"nu": 0.05, "k": 0.05, "beta": 1.0, "xi": [0.0, -1.0]},
    "time": {"T": 0.4, "nt": 20},
    "initial": {"z0": "zero", "w0": "sine", "amplitude": 1.0},
    "cost": {"N1": 1.0, "N2": 1.0, "r1": {"right": 1.0}, "r2": 1.0, "objective_form": "trace"},
    "controls": {"alpha1": 0.1, "beta1": 0.3, "alpha2": 0.1, "beta2": 0.5, "initial": "midpoint",
                 "parametrization": "full"},
    "algorithm": {"method": "projected_gradient", "tol_rel": 1e-6, "max_iter": 200, "check_cfl": True,
                  "epsilons": [1e-2 * 0.5 ** k for k in range(11)], "oracle_levels": 9, "samples": 200},
    "output": {"dir": "out"},
    "seed": 0,
}


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


def _merge(base: dict, new: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, val in new.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{where}{key}'")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in ("r1", "r2"):
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> dict:
    """Apply one ``dot.path=value`` override (value parsed as JSON when
    possible, otherwise kept as a string)."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' must look like key=value")
    path, text = item.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for i, key in enumerate(keys[:-1]):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"override path '{path}' does not exist")
        if node[key] is None or (".".join(keys[: i + 1]) in FREEFORM and not isinstance(node[key], dict)):
            node[key] = {}
        node = node[key]
    parent = ".".join(keys[:-1])
    if not isinstance(node, dict) or (keys[-1] not in node and parent not in FREEFORM):
        raise ConfigError(f"override path '{path}' does not exist")
    node[keys[-1]] = _parse_value(text)
    return cfg


def _side_values(domain: Domain, part: int, spec, name: str) -> np.ndarray:
    faces = domain.gamma1 if part == GAMMA1 else domain.gamma2
    sides = domain.faces.side[faces]
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(len(faces), float(spec))
    if isinstance(spec, dict):
        bad = set(spec) - set(SIDES)
        if bad:
            raise ConfigError(f"{name}: unknown wall names {sorted(bad)}")
        out = np.zeros(len(faces))
        for side, val in spec.items():
            out[sides == side] = float(val)
        return out
    if isinstance(spec, list) and len(spec) == len(faces):
        return np.asarray(spec, dtype=float)
    raise ConfigError(f"{name}: expected a number, a wall mapping or a list of {len(faces)} values")


@dataclass
class RunConfig:
    """Resolved configuration (plain nested dicts) with builders for the
    numerical objects."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def domain(self) -> Domain:
        g = self.data["geometry"]
        return build_domain(g["Lx"], g["Ly"], g["nx"], g["ny"], g["partition"])

    def params(self) -> PhysicalParams:
        p = self.data["physics"]
        return PhysicalParams(nu=p["nu"], k=p["k"], beta=p["beta"], xi=tuple(p["xi"]))

    def time(self) -> TimeGrid:
        t = self.data["time"]
        return TimeGrid(float(t["T"]), int(t["nt"]))

    def bounds(self, d: Domain):
        c = self.data["controls"]
        return (_side_values(d, GAMMA1, c["alpha1"], "controls.alpha1"),
                _side_values(d, GAMMA1, c["beta1"], "controls.beta1"),
                _side_values(d, GAMMA2, c["alpha2"], "controls.alpha2"),
                _side_values(d, GAMMA2, c["beta2"], "controls.beta2"))

    def weights(self, d: Domain, time: TimeGrid) -> CostWeights:
        c = self.data["cost"]
        return CostWeights.constant(d, time, c["N1"], c["N2"], _side_values(d, GAMMA1, c["r1"], "cost.r1"),
                                    _side_values(d, GAMMA2, c["r2"], "cost.r2"), c["objective_form"])

    def initial_state(self, d: Domain):
        ini = self.data["initial"]
        amp = float(ini["amplitude"])
        if ini["z0"] == "zero":
            z0 = np.zeros(d.n_vel)
        else:  # "vortex": a single recirculating cell
            z0 = amp * d.sample_velocity(
                lambda x, y: np.sin(np.pi * x / d.Lx) ** 2 * np.sin(2 * np.pi * y / d.Ly),
                lambda x, y: -np.sin(2 * np.pi * x / d.Lx) * np.sin(np.pi * y / d.Ly) ** 2).vector()
        if ini["w0"] == "zero":
            w0 = np.zeros(d.n_cells)
        else:
            w0 = amp * d.sample_scalar(lambda x, y: np.sin(np.pi * x / d.Lx) * np.sin(np.pi * y / d.Ly)).vector()
        return z0, w0

    def initial_controls(self, d: Domain, time: TimeGrid) -> ControlPair:
        b = self.bounds(d)
        init = self.data["controls"]["initial"]
        if init == "midpoint":
            v1, v2 = 0.5 * (b[0] + b[1]), 0.5 * (b[2] + b[3])
        else:
            v1 = _side_values(d, GAMMA1, init.get("v1", 0.0), "controls.initial.v1")
            v2 = _side_values(d, GAMMA2, init.get("v2", 0.0), "controls.initial.v2")
        return ControlPair.constant(d, time, v1, v2, bounds=b)

    def problem(self):
        from .problem import ControlProblem

        d = self.domain()
        time = self.time()
        z0, w0 = self.initial_state(d)
        return ControlProblem(d, self.params(), time, z0, w0, self.weights(d, time), bounds=self.bounds(d),
                              check_cfl=bool(self.data["algorithm"]["check_cfl"]))

    def parametrization(self, d: Domain):
        from .optimize import GroupParametrization

        kind = self.data["controls"]["parametrization"]
        if kind == "full":
            return None
        a1, b1, a2, b2 = self.bounds(d)
        for arr in (a1, b1, a2, b2):
            if np.ptp(arr) > 0:
                raise ConfigError("the inlet_outlet_walls parametrization needs scalar bounds")
        return GroupParametrization.inlet_outlet_walls(d, (a1[0], b1[0], a2[0], b2[0]))


def validate(cfg: dict) -> RunConfig:
    """Check every precondition the solvers rely on, raising
    :class:`ConfigError` that names the violated one."""
    p = cfg["physics"]
    for key, label in (("nu", "ν"), ("k", "k")):
        if not isinstance(p[key], (int, float)) or not p[key] > 0:
            raise ConfigError(f"{label} > 0 required (physics.{key} = {p[key]!r})")
    if not isinstance(p["beta"], (int, float)) or p["beta"] < 0:
        raise ConfigError("β >= 0 required")
    if not (isinstance(p["xi"], list) and len(p["xi"]) == 2):
        raise ConfigError("physics.xi must be a list of two numbers")
    g = cfg["geometry"]
    for key in ("nx", "ny"):
        if not isinstance(g[key], int) or g[key] < 4:
            raise ConfigError(f"geometry.{key} must be an integer >= 4")
    for key in ("Lx", "Ly"):
        if not g[key] > 0:
            raise ConfigError(f"geometry.{key} > 0 required")
    t = cfg["time"]
    if not t["T"] > 0:
        raise ConfigError("time.T > 0 required")
    if not isinstance(t["nt"], int) or t["nt"] < 1:
        raise ConfigError("time.nt must be a positive integer")
    c = cfg["cost"]
    if not (c["N1"] > 0 and c["N2"] > 0):
        raise ConfigError("cost weights N1, N2 > 0 required")
    if c["objective_form"] not in ("trace", "flux"):
        raise ConfigError("cost.objective_form must be 'trace' or 'flux'")
    a = cfg["algorithm"]
    if a["method"] not in METHODS:
        raise ConfigError(f"algorithm.method must be one of {METHODS}")
    if not (isinstance(a["max_iter"], int) and a["max_iter"] >= 0):
        raise ConfigError("algorithm.max_iter must be a non-negative integer")
    if cfg["controls"]["parametrization"] not in ("full", "inlet_outlet_walls"):
        raise ConfigError("controls.parametrization must be 'full' or 'inlet_outlet_walls'")
    if cfg["initial"]["z0"] not in ("zero", "vortex") or cfg["initial"]["w0"] not in ("zero", "sine"):
        raise ConfigError("initial.z0 must be 'zero'/'vortex' and initial.w0 'zero'/'sine'")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    rc = RunConfig(cfg)
    try:
        d = rc.domain()
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    a1, b1, a2, b2 = rc.bounds(d)
    for i, (lo, hi) in enumerate(((a1, b1), (a2, b2)), start=1):
        if np.any(lo <= 0):
            raise ConfigError(f"bounds violate (1.{i + 2}): alpha{i} > 0 required")
        if np.any(lo > hi):
            raise ConfigError(f"bounds violate (1.{i + 2}): alpha{i} > beta{i} somewhere")
    rc.weights(d, rc.time())
    v = rc.initial_controls(d, rc.time())
    if not v.is_admissible():
        raise ConfigError("controls.initial is outside the admissible box")
    rc.parametrization(d)
    return rc


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    """Read a JSON config, fill defaults, apply overrides and validate."""
    user = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = _merge(DEFAULTS, user)
    for item in overrides:
        apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = int(seed)
    return validate(cfg)
