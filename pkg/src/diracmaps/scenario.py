"""Scenario files: keyed-text configs that drive the command-line tools.

A scenario is one JSON document with an explicit ``schema_version``.
Parsing is deliberately strict: unknown keys anywhere in the document are
hard errors with a path diagnostic, because a silently ignored typo
("kapa": 0.35) would corrupt an experiment without any visible symptom.
A parsed scenario re-serialises to exactly the values that were read.

Catalog names understood here:

targets
    flat      params: dim (>= 2)
    sphere2   stereographic chart of the round unit 2-sphere
    sphere3   stereographic chart of the round unit 3-sphere

torsion kinds
    zero, vectorial (vector), totally_antisymmetric (form),
    scaled_volume (kappa), cartan_type (coefficients), raw (coefficients)

initial maps
    constant (point, optional), wrap (degree/component/direction, flat
    targets only), random (seed + band, amplitude optional)
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .energy import EL_MODES
from .errors import ConfigError
from .fields import GridGeometry, MapField, random_smooth_fields
from .solver import BACKENDS, SolverConfig
from .target import (TargetChart, TorsionSpec, flat_chart, sphere2_chart,
                     sphere3_chart)

SCHEMA_VERSION = 1

CHART_NAMES = ("flat", "sphere2", "sphere3")
TORSION_KINDS = ("zero", "vectorial", "totally_antisymmetric",
                 "scaled_volume", "cartan_type", "raw")
INITIAL_MAP_TYPES = ("constant", "wrap", "random")

_TOP_REQUIRED = ("schema_version", "mode", "target", "torsion", "grid",
                 "initial_map")
_TOP_OPTIONAL = ("id", "seed", "solver")


# ---------------------------------------------------------------------------
# strict-parsing helpers


def _require_mapping(value: Any, where: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ConfigError(f"{where}: expected an object, got "
                          f"{type(value).__name__}")
    return value


def _check_keys(block: Mapping, where: str, required: tuple, optional: tuple = ()):
    allowed = set(required) | set(optional)
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} "
                              f"(allowed: {sorted(allowed)})")
    for key in required:
        if key not in block:
            raise ConfigError(f"{where}: missing required key {key!r}")


def _as_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _as_float(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _as_str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _as_choice(value: Any, where: str, choices: tuple) -> str:
    value = _as_str(value, where)
    if value not in choices:
        raise ConfigError(f"{where}: {value!r} is not one of {list(choices)}")
    return value


def _as_tensor(value: Any, where: str, shape: tuple) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise ConfigError(f"{where}: expected shape {shape}, got {arr.shape}")
    return arr


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


# ---------------------------------------------------------------------------
# block validators


def _validate_target(block: Mapping) -> dict:
    block = _require_mapping(block, "target")
    chart = _as_choice(block.get("chart"), "target.chart", CHART_NAMES)
    if chart == "flat":
        _check_keys(block, "target", ("chart", "dim"))
        dim = _as_int(block["dim"], "target.dim")
        if dim < 2:
            raise ConfigError(f"target.dim: need at least 2, got {dim}")
        return {"chart": "flat", "dim": dim}
    _check_keys(block, "target", ("chart",))
    return {"chart": chart, "dim": 2 if chart == "sphere2" else 3}


def _validate_torsion(block: Mapping, dim: int) -> dict:
    block = _require_mapping(block, "torsion")
    kind = _as_choice(block.get("kind"), "torsion.kind", TORSION_KINDS)
    cube = (dim, dim, dim)
    if kind == "zero":
        _check_keys(block, "torsion", ("kind",))
        return {"kind": kind}
    if kind == "vectorial":
        _check_keys(block, "torsion", ("kind", "vector"))
        vec = _as_tensor(block["vector"], "torsion.vector", (dim,))
        return {"kind": kind, "vector": vec}
    if kind == "totally_antisymmetric":
        _check_keys(block, "torsion", ("kind", "form"))
        form = _as_tensor(block["form"], "torsion.form", cube)
        return {"kind": kind, "form": form}
    if kind == "scaled_volume":
        _check_keys(block, "torsion", ("kind", "kappa"))
        if dim != 3:
            raise ConfigError("torsion.kind: scaled_volume needs a "
                              f"3-dimensional target, got dim {dim}")
        return {"kind": kind, "kappa": _as_float(block["kappa"], "torsion.kappa")}
    # cartan_type and raw both carry a full coefficient cube; skewness of a
    # raw cube is *not* checked here — that is the verify command's job, so
    # a bad input shows up as a named check failure instead of a parse error
    _check_keys(block, "torsion", ("kind", "coefficients"))
    coeff = _as_tensor(block["coefficients"], "torsion.coefficients", cube)
    return {"kind": kind, "coefficients": coeff}


def _validate_grid(block: Mapping) -> dict:
    block = _require_mapping(block, "grid")
    _check_keys(block, "grid", ("n",), ("length", "conformal_factor"))
    n = _as_int(block["n"], "grid.n")
    if not _is_power_of_two(n):
        raise ConfigError(f"grid.n: the spectral backend needs a power of "
                          f"two, got {n}")
    out = {"n": n}
    if "length" in block:
        length = _as_float(block["length"], "grid.length")
        if length <= 0:
            raise ConfigError(f"grid.length: must be positive, got {length}")
        out["length"] = length
    if "conformal_factor" in block:
        lam = _as_float(block["conformal_factor"], "grid.conformal_factor")
        if lam <= 0:
            raise ConfigError("grid.conformal_factor: must be positive, "
                              f"got {lam}")
        out["conformal_factor"] = lam
    return out


def _validate_initial_map(block: Mapping, chart_name: str, dim: int) -> dict:
    block = _require_mapping(block, "initial_map")
    kind = _as_choice(block.get("type"), "initial_map.type", INITIAL_MAP_TYPES)
    if kind == "constant":
        _check_keys(block, "initial_map", ("type",), ("point",))
        point = (np.zeros(dim) if "point" not in block
                 else _as_tensor(block["point"], "initial_map.point", (dim,)))
        return {"type": kind, "point": point}
    if kind == "wrap":
        _check_keys(block, "initial_map", ("type",),
                    ("degree", "component", "direction"))
        if chart_name != "flat":
            raise ConfigError("initial_map.type: wrap needs a coordinate "
                              "that is globally translation-invariant; only "
                              "the flat target provides one")
        degree = _as_int(block.get("degree", 1), "initial_map.degree")
        component = _as_int(block.get("component", 0), "initial_map.component")
        direction = _as_int(block.get("direction", 0), "initial_map.direction")
        if not 0 <= component < dim:
            raise ConfigError(f"initial_map.component: out of range for "
                              f"dim {dim}: {component}")
        if direction not in (0, 1):
            raise ConfigError(f"initial_map.direction: must be 0 or 1, "
                              f"got {direction}")
        return {"type": kind, "degree": degree, "component": component,
                "direction": direction}
    _check_keys(block, "initial_map", ("type", "seed", "band"), ("amplitude",))
    return {"type": kind,
            "seed": _as_int(block["seed"], "initial_map.seed"),
            "band": _as_int(block["band"], "initial_map.band"),
            "amplitude": _as_float(block.get("amplitude", 0.1),
                                   "initial_map.amplitude")}


def _validate_solver(block: Mapping) -> SolverConfig:
    block = _require_mapping(block, "solver")
    _check_keys(block, "solver", (), ("step_size", "max_iterations",
                                      "map_tolerance", "kernel_tolerance",
                                      "backend"))
    kwargs: dict[str, Any] = {}
    if "step_size" in block:
        kwargs["step_size"] = _as_float(block["step_size"], "solver.step_size")
    if "max_iterations" in block:
        kwargs["max_iterations"] = _as_int(block["max_iterations"],
                                           "solver.max_iterations")
    if "map_tolerance" in block:
        kwargs["map_tolerance"] = _as_float(block["map_tolerance"],
                                            "solver.map_tolerance")
    if "kernel_tolerance" in block:
        kwargs["kernel_tolerance"] = _as_float(block["kernel_tolerance"],
                                               "solver.kernel_tolerance")
    if "backend" in block:
        kwargs["backend"] = _as_choice(block["backend"], "solver.backend",
                                       BACKENDS)
    return SolverConfig(**kwargs)


# ---------------------------------------------------------------------------
# the scenario object


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario plus the raw document it came from."""

    schema_version: int
    mode: str
    target: dict
    torsion: dict
    grid: dict
    initial_map: dict
    solver: SolverConfig
    scenario_id: str | None
    seed: int
    raw: dict = field(repr=False)

    # -- builders ----------------------------------------------------------

    def geometry(self) -> GridGeometry:
        kwargs = {"n_side": self.grid["n"]}
        if "length" in self.grid:
            kwargs["length"] = self.grid["length"]
        if "conformal_factor" in self.grid:
            kwargs["conformal_factor"] = self.grid["conformal_factor"]
        return GridGeometry(**kwargs)

    def torsion_spec(self) -> TorsionSpec:
        t = self.torsion
        if t["kind"] == "zero":
            return TorsionSpec.zero()
        if t["kind"] == "vectorial":
            return TorsionSpec.vectorial(t["vector"])
        if t["kind"] == "totally_antisymmetric":
            return TorsionSpec.totally_antisymmetric(t["form"])
        if t["kind"] == "scaled_volume":
            return TorsionSpec.scaled_volume(t["kappa"])
        if t["kind"] == "cartan_type":
            return TorsionSpec.cartan_type(t["coefficients"])
        return TorsionSpec.raw(t["coefficients"])

    def chart(self) -> TargetChart:
        spec = self.torsion_spec()
        name = self.target["chart"]
        if name == "flat":
            return flat_chart(self.target["dim"], torsion=spec)
        if name == "sphere2":
            return sphere2_chart(torsion=spec)
        return sphere3_chart(torsion=spec)

    def initial_map_field(self, geom: GridGeometry,
                          chart: TargetChart) -> MapField:
        im = self.initial_map
        if im["type"] == "constant":
            return MapField.constant(geom, im["point"])
        if im["type"] == "wrap":
            return MapField.wrap(geom, chart.dim, degree=im["degree"],
                                 component=im["component"],
                                 direction=im["direction"])
        phi, _ = random_smooth_fields(geom, chart, im["seed"], im["band"],
                                      map_amplitude=im["amplitude"])
        return phi

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        """The document this scenario was parsed from, value-identical."""
        return copy.deepcopy(self.raw)

    def display_id(self, fallback: str = "scenario") -> str:
        return self.scenario_id if self.scenario_id is not None else fallback


# ---------------------------------------------------------------------------
# entry points


def parse_scenario(data: Mapping, source: str = "<dict>") -> Scenario:
    data = _require_mapping(data, source)
    _check_keys(data, source, _TOP_REQUIRED, _TOP_OPTIONAL)

    version = _as_int(data["schema_version"], f"{source}: schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: schema_version {version} is not "
                          f"supported (this build reads {SCHEMA_VERSION})")

    mode = _as_choice(data["mode"], f"{source}: mode", EL_MODES)
    target = _validate_target(data["target"])
    torsion = _validate_torsion(data["torsion"], target["dim"])
    grid = _validate_grid(data["grid"])
    initial_map = _validate_initial_map(data["initial_map"], target["chart"],
                                        target["dim"])
    solver = (_validate_solver(data["solver"]) if "solver" in data
              else SolverConfig())
    scenario_id = (_as_str(data["id"], f"{source}: id")
                   if "id" in data else None)
    seed = _as_int(data["seed"], f"{source}: seed") if "seed" in data else 0

    if initial_map["type"] == "random" and initial_map["band"] >= grid["n"] / 2:
        raise ConfigError(f"initial_map.band: band {initial_map['band']} "
                          f"does not fit on an N={grid['n']} grid")

    raw = json.loads(json.dumps(data))  # plain-JSON deep copy
    return Scenario(schema_version=version, mode=mode, target=target,
                    torsion=torsion, grid=grid, initial_map=initial_map,
                    solver=solver, scenario_id=scenario_id, seed=seed,
                    raw=raw)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    scenario = parse_scenario(data, source=str(path))
    if scenario.scenario_id is None:
        # default the id to the file stem; the raw document stays untouched
        # so round-tripping still reproduces exactly what was read
        return replace(scenario, scenario_id=path.stem)
    return scenario


def scenario_round_trips(path) -> bool:
    """True when parse -> re-serialise reproduces the document's values."""
    original = json.loads(Path(path).read_text())
    return load_scenario(path).to_dict() == original


__all__ = [
    "SCHEMA_VERSION", "CHART_NAMES", "TORSION_KINDS", "INITIAL_MAP_TYPES",
    "Scenario", "parse_scenario", "load_scenario", "scenario_round_trips",
]
