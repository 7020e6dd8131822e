"""Scenario configuration: JSON documents, schema validation, builders.

One canonical config format: JSON.  A document carries a schema version, a
scenario kind, a mandatory seed (no wall-clock defaults anywhere), scalar
parameters, and a ``components`` map of named specs that the parameters
reference by ``*_ref`` keys.  Validation is two-layered: a versioned JSON
schema with ``additionalProperties: false`` everywhere (unknown keys are
errors, so typos in mathematical parameters cannot pass silently), then
semantic construction of every component (row sums, irreducibility,
summability, ...) with error messages naming the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .chains import (
    BiasedWalkKernel,
    FiniteKernel,
    FiniteKernelFamily,
    LinearGaussianKernel,
)
from .certificates import CertificateSpec, ThetaSpec
from .classk import ClassKFunction
from .errors import ConfigError
from .hybrid import BallRegion, FiniteSetRegion, PredicateTableRegion
from .iss import DisturbanceSpec, DisturbedSystemSpec, ScalarAffineDisturbedMap
from .switched import (
    AffineMap,
    LinearMap,
    LyapunovFamilySpec,
    ScalarTanhMap,
    SwitchedSystemSpec,
    SwitchingChainSpec,
    rotation,
)
from .diffusion import BesqSpec, DriftedDiffusionSpec, DriftSpec

SCHEMA_VERSION = 1

SCENARIO_KINDS = (
    "certificate-verify",
    "bound",
    "hybrid-sim",
    "value-iterate",
    "switched",
    "iss",
    "diffusion",
)

_number = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _number}}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "kind", "seed", "params"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "kind": {"enum": list(SCENARIO_KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
        "components": {
            "type": "object",
            "additionalProperties": {"type": "object", "required": ["type"]},
        },
    },
}

_PARAM_KEYS = {
    "certificate-verify": {
        "kernel_ref", "certificate_ref", "x0", "horizon", "paths",
        "verify_horizon", "confidence",
    },
    "bound": {"kernel_ref", "certificate_ref", "x0"},
    "hybrid-sim": {
        "y_kernel_ref", "z_kernel_ref", "certificate_ref", "x0", "horizon",
        "paths", "verify_horizon", "probe_state", "markov_alpha", "confidence",
    },
    "value-iterate": {
        "kernel_ref", "V_ref", "theta_ref", "region_ref", "N",
        "expected_values", "oracle", "convergence_extra",
    },
    "switched": {
        "system_ref", "lyapunov_ref", "x0", "horizon", "paths", "checks",
        "window", "window_paths", "decay_target", "confidence",
        "counterexample_ref", "epsilon_grid", "epsilon_paths",
    },
    "iss": {
        "system_ref", "x0", "horizon", "paths", "confidence",
    },
    "diffusion": {
        "besq_ref", "grid", "shape_paths", "sector_pass_ref", "sector_fail_ref",
        "zeta_ref", "zeta_x0", "zeta_paths", "confidence",
    },
}


def load_document(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def validate_document(doc: dict) -> None:
    """Structural validation; raises ConfigError with a field path."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    kind = doc["kind"]
    allowed = _PARAM_KEYS[kind]
    unknown = set(doc["params"]) - allowed
    if unknown:
        raise ConfigError(
            f"params for kind {kind!r} has unknown keys {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )


# ---------------------------------------------------------------------------
# component builders


def _as_key(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _walk_matrix(p_up: float, size: int) -> np.ndarray:
    if not 0 < p_up < 1:
        raise ConfigError(f"walk_matrix p_up must be in (0,1), got {p_up}")
    if size < 2:
        raise ConfigError(f"walk_matrix size must be >= 2, got {size}")
    P = np.zeros((size, size))
    for x in range(size):
        up = min(x + 1, size - 1)
        down = max(x - 1, 0)
        P[x, up] += p_up
        P[x, down] += 1.0 - p_up
    return P


def build_kernel(spec: dict):
    t = spec["type"]
    if t == "finite_matrix":
        return FiniteKernel(np.asarray(spec["matrix"]), states=spec.get("states"))
    if t == "finite_matrix_family":
        return FiniteKernelFamily(
            matrices=[np.asarray(m) for m in spec["matrices"]],
            horizon=spec.get("horizon"),
            states=spec.get("states"),
        )
    if t == "walk_matrix":
        return FiniteKernel(_walk_matrix(spec["p_up"], spec["size"]))
    if t == "lazy_walk_matrix":
        p_up, p_down, size = spec["p_up"], spec["p_down"], spec["size"]
        if p_up < 0 or p_down < 0 or p_up + p_down > 1:
            raise ConfigError("lazy_walk_matrix needs p_up, p_down >= 0 summing <= 1")
        P = np.zeros((size, size))
        for x in range(size):
            P[x, min(x + 1, size - 1)] += p_up
            P[x, max(x - 1, 0)] += p_down
            P[x, x] += 1.0 - p_up - p_down
        return FiniteKernel(P)
    if t == "walk_matrix_family":
        schedule = [float(p) for p in spec["p_up_schedule"]]
        size = spec["size"]
        mats = [_walk_matrix(p, size) for p in schedule]

        def rule(t: int) -> np.ndarray:
            return mats[min(t, len(mats) - 1)]

        return FiniteKernelFamily(rule=rule, states=list(range(size)))
    if t == "biased_walk":
        return BiasedWalkKernel(
            spec["p_up"], floor=spec.get("floor"), ceiling=spec.get("ceiling")
        )
    if t == "linear_gaussian":
        return LinearGaussianKernel(np.asarray(spec["A"]), spec["noise_scale"])
    raise ConfigError(f"unknown kernel type {t!r}")


def build_region(spec: dict):
    t = spec["type"]
    if t == "finite_set":
        return FiniteSetRegion(spec["members"])
    if t == "ball":
        return BallRegion(spec["radius"], center=spec.get("center", 0.0))
    if t == "predicate_table":
        return PredicateTableRegion(dict(zip(spec["states"], spec["flags"])))
    raise ConfigError(f"unknown region type {t!r}")


def build_functional(spec: dict):
    form = spec["form"]
    if form == "geometric":
        base = float(spec["base"])
        root = float(spec.get("root", 1.0))
        return lambda x: base ** (np.asarray(x, dtype=np.float64) / root)
    if form == "table":
        table = dict(zip(spec["states"], [float(v) for v in spec["values"]]))

        def lookup(x):
            if isinstance(x, (list, tuple, np.ndarray)):
                return np.array([table[_as_key(v)] for v in np.asarray(x).ravel()])
            return table[_as_key(x)]

        return lookup
    if form == "power_abs":
        c = float(spec.get("c", 1.0))
        p = float(spec.get("p", 1.0))
        return lambda x: c * np.abs(np.asarray(x, dtype=np.float64)) ** p
    if form == "norm":
        return lambda x: np.linalg.norm(np.atleast_1d(x), axis=-1)
    if form == "norm_sq":
        return lambda x: (np.atleast_2d(x) ** 2).sum(axis=-1)[0] if np.ndim(x) == 1 \
            else (np.asarray(x) ** 2).sum(axis=-1)
    if form == "constant":
        c = float(spec["c"])
        return lambda x: c * np.ones_like(np.asarray(x, dtype=np.float64))
    raise ConfigError(f"unknown functional form {form!r}")


def build_theta(spec: dict) -> ThetaSpec:
    form = spec["form"]
    if form == "exponential":
        return ThetaSpec.exponential(spec["alpha"])
    if form == "power":
        return ThetaSpec.power(spec["p"])
    if form == "table":
        return ThetaSpec.table(spec["values"], spec["tail_ratio"])
    raise ConfigError(f"unknown theta form {form!r}")


def build_classk(spec: dict) -> ClassKFunction:
    form = spec["form"]
    if form == "linear":
        return ClassKFunction.linear(spec.get("c", 1.0))
    if form == "power":
        return ClassKFunction.power(spec["c"], spec["p"])
    if form == "saturating":
        return ClassKFunction.saturating(spec["c"], spec["s"])
    raise ConfigError(f"unknown class-K form {form!r}")


def build_map(spec: dict):
    fam = spec["family"]
    if fam == "linear":
        return LinearMap(np.asarray(spec["A"]))
    if fam == "scaled_rotation":
        return LinearMap(float(spec["scale"]) * rotation(float(spec["angle"])))
    if fam == "scalar_linear":
        return LinearMap(np.array([[float(spec["a"])]]))
    if fam == "affine":
        return AffineMap(np.asarray(spec["A"]), np.asarray(spec["b"]))
    if fam == "scalar_tanh":
        return ScalarTanhMap(spec["a"])
    raise ConfigError(f"unknown map family {fam!r}")


def build_chain(spec: dict) -> SwitchingChainSpec:
    return SwitchingChainSpec(
        P=np.asarray(spec["P"]), pi0=np.asarray(spec["pi0"]) if "pi0" in spec else None
    )


def build_switched_system(spec: dict) -> SwitchedSystemSpec:
    chain = build_chain(spec["chain"])
    maps = [build_map(m) for m in spec["maps"]]
    return SwitchedSystemSpec(maps=maps, chain=chain)


def build_lyapunov(spec: dict) -> LyapunovFamilySpec:
    return LyapunovFamilySpec(
        weights=np.asarray(spec["weights"], dtype=np.float64),
        mu=float(spec["mu"]),
        r=float(spec.get("r", 0.0)),
        lambda0=spec.get("lambda0"),
        Lambda=np.asarray(spec["Lambda"]) if "Lambda" in spec else None,
        alpha1=build_classk(spec["alpha1"]) if "alpha1" in spec else None,
        alpha2=build_classk(spec["alpha2"]) if "alpha2" in spec else None,
    )


def build_disturbance(spec: dict) -> DisturbanceSpec:
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k not in ("kind", "w_max", "dim")}
    if "values_csv" in params:
        # table columns are the disturbance components; absolute path or
        # relative to the working directory
        path = params.pop("values_csv")
        try:
            values = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"disturbance table {path!r}: {exc}") from exc
        params["values"] = values
    return DisturbanceSpec(kind, spec["w_max"], dim=spec.get("dim", 1), **params)


def build_disturbed_system(spec: dict) -> DisturbedSystemSpec:
    maps = []
    for m in spec["maps"]:
        if m["family"] != "scalar_affine":
            raise ConfigError(f"unknown disturbed map family {m['family']!r}")
        maps.append(ScalarAffineDisturbedMap(m["a"]))
    return DisturbedSystemSpec(
        maps=maps,
        chain=build_chain(spec["chain"]),
        disturbance=build_disturbance(spec["disturbance"]),
        rho=build_classk(spec["rho"]),
        Lambda=np.asarray(spec["Lambda"]),
        mu=float(spec["mu"]),
        weights=np.asarray(spec["weights"]) if "weights" in spec else None,
    )


def build_besq(spec: dict) -> BesqSpec:
    return BesqSpec(
        delta=float(spec["delta"]),
        y0=float(spec["y0"]),
        S=float(spec["S"]),
        dt=float(spec.get("dt", 1e-3)),
        n_paths=int(spec.get("n_paths", 10_000)),
    )


def build_diffusion_spec(spec: dict) -> DriftedDiffusionSpec:
    d = spec["drift"]
    if d["form"] == "linear":
        drift = DriftSpec("linear", coeff=d["coeff"])
    elif d["form"] == "radial_shift":
        drift = DriftSpec("radial_shift", coeff=d["coeff"], shift=d["shift"])
    else:
        raise ConfigError(f"unknown drift form {d['form']!r}")
    return DriftedDiffusionSpec(
        drift=drift,
        dim=int(spec["dim"]),
        region_radius=float(spec["region_radius"]),
        dt=float(spec.get("dt", 1e-2)),
        horizon=float(spec.get("horizon", 6.0)),
    )


_KERNEL_TYPES = (
    "finite_matrix", "finite_matrix_family", "walk_matrix", "lazy_walk_matrix",
    "walk_matrix_family", "biased_walk", "linear_gaussian",
)
_REGION_TYPES = ("finite_set", "ball", "predicate_table")


def build_component(spec: dict):
    """Dispatch on the component's declared type."""
    t = spec.get("type")
    if t in _KERNEL_TYPES:
        return build_kernel(spec)
    if t in _REGION_TYPES:
        return build_region(spec)
    if t == "exponential_certificate":
        V = build_functional(spec["V"])
        K = build_region(spec["region"])
        return CertificateSpec.exponential(float(spec["alpha"]), V, K)
    if t == "functional":
        return build_functional(spec)
    if t == "theta":
        return build_theta(spec)
    if t == "chain":
        return build_chain(spec)
    if t == "switched_system":
        return build_switched_system(spec)
    if t == "lyapunov":
        return build_lyapunov(spec)
    if t == "disturbed_system":
        return build_disturbed_system(spec)
    if t == "besq":
        return build_besq(spec)
    if t == "diffusion":
        return build_diffusion_spec(spec)
    raise ConfigError(f"component has unknown type {t!r}")


class ComponentSet:
    """Named component specs with reference resolution."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.raw = doc.get("components", {})
        self._cache: dict[str, Any] = {}

    def ref(self, params: dict, key: str, expect: type | tuple | None = None,
            required: bool = True):
        name = params.get(key)
        if name is None:
            if required:
                raise ConfigError(
                    f"params.{key} is required for kind {self.doc['kind']!r}"
                )
            return None
        if not isinstance(name, str):
            raise ConfigError(f"params.{key} must reference a component by name")
        if name not in self.raw:
            raise ConfigError(
                f"params.{key} references unknown component {name!r}; "
                f"known: {sorted(self.raw)}"
            )
        if name not in self._cache:
            try:
                self._cache[name] = build_component(self.raw[name])
            except ConfigError as exc:
                raise ConfigError(f"components.{name}: {exc}") from exc
            except Exception as exc:
                raise ConfigError(f"components.{name}: {exc}") from exc
        built = self._cache[name]
        if expect is not None and not isinstance(built, expect):
            raise ConfigError(
                f"params.{key} expects a {expect} component, "
                f"got {type(built).__name__}"
            )
        return built

    def build_all(self) -> None:
        for name, spec in self.raw.items():
            try:
                if name not in self._cache:
                    self._cache[name] = build_component(spec)
            except Exception as exc:
                raise ConfigError(f"components.{name}: {exc}") from exc
