"""Mixed hyperparameter search spaces and their unit-cube embedding.

Every parameter occupies exactly one coordinate of ``[0, 1]^d``. The prior
sampler of a parameter is the push-forward of ``U(0, 1)`` through
:func:`warp`, so sampling the prior and mapping optimizer coordinates back to
native values share one code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

KINDS = ("continuous", "discrete", "categorical")
SAMPLERS = ("Uniform", "LogUniform", "RLogUniform", "RandomChoice")
GROUPS = ("G1", "G2", "G3", "G4", "G5")

Configuration = Dict[str, Any]


@dataclass(frozen=True)
class ParamSpec:
    """One hyperparameter dimension.

    ``lower``/``upper`` are in native units and unused for categorical
    parameters, which carry ``choices`` instead.
    """

    name: str
    kind: str
    sampler: str
    group: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    choices: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValidationError("parameter name must be non-empty")
        where = f"parameter {self.name!r}"
        if self.kind not in KINDS:
            raise ValidationError(f"{where}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.sampler not in SAMPLERS:
            raise ValidationError(f"{where}: sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.group not in GROUPS:
            raise ValidationError(f"{where}: group must be one of {GROUPS}, got {self.group!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "choices", tuple(str(c) for c in self.choices))
            if self.sampler != "RandomChoice":
                raise ValidationError(f"{where}: categorical parameters use the RandomChoice sampler")
            if not self.choices:
                raise ValidationError(f"{where}: choices must be non-empty")
            if len(set(self.choices)) != len(self.choices):
                raise ValidationError(f"{where}: choices must be unique")
            return
        if self.sampler == "RandomChoice":
            raise ValidationError(f"{where}: RandomChoice is reserved for categorical parameters")
        for bound in ("lower", "upper"):
            value = getattr(self, bound)
            if value is None:
                raise ValidationError(f"{where}: missing field {bound!r}")
            if not math.isfinite(value):
                raise ValidationError(f"{where}: field {bound!r} must be finite")
            object.__setattr__(self, bound, float(value))
        if not self.lower < self.upper:
            raise ValidationError(f"{where}: lower must be < upper ({self.lower} >= {self.upper})")
        if self.sampler in ("LogUniform", "RLogUniform") and self.lower <= 0:
            raise ValidationError(f"{where}: {self.sampler} requires lower > 0")

    @property
    def n_choices(self) -> int:
        return len(self.choices)

    def contains(self, value) -> bool:
        if self.kind == "categorical":
            return value in self.choices
        try:
            v = float(value)
        except (TypeError, ValueError):
            return False
        if not (self.lower <= v <= self.upper):
            return False
        return self.kind == "continuous" or v == round(v)


def _log_warp(lower: float, upper: float, u: float) -> float:
    return math.exp(math.log(lower) + u * (math.log(upper) - math.log(lower)))


def _log_unwarp(lower: float, upper: float, v: float) -> float:
    return (math.log(v) - math.log(lower)) / (math.log(upper) - math.log(lower))


def _continuous_warp(spec: ParamSpec, u: float) -> float:
    lo, hi = spec.lower, spec.upper
    if spec.sampler == "Uniform":
        x = lo + u * (hi - lo)
    elif spec.sampler == "LogUniform":
        x = _log_warp(lo, hi, u)
    else:
        # reflection of LogUniform through lower + upper: mass piles up near upper
        x = lo + hi - _log_warp(lo, hi, 1.0 - u)
    return min(max(x, lo), hi)


def _continuous_unwarp(spec: ParamSpec, v: float) -> float:
    lo, hi = spec.lower, spec.upper
    if spec.sampler == "Uniform":
        u = (v - lo) / (hi - lo)
    elif spec.sampler == "LogUniform":
        u = _log_unwarp(lo, hi, v)
    else:
        mirrored = min(max(lo + hi - v, lo), hi)
        u = 1.0 - _log_unwarp(lo, hi, mirrored)
    return min(max(u, 0.0), 1.0)


def warp(spec: ParamSpec, u: float):
    """Map a unit coordinate to a native value of ``spec``."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValidationError(f"parameter {spec.name!r}: unit coordinate {u} outside [0, 1]")
    if spec.kind == "categorical":
        k = spec.n_choices
        return spec.choices[min(int(math.floor(u * k)), k - 1)]
    x = _continuous_warp(spec, u)
    if spec.kind == "discrete":
        # half-up rounding keeps warp monotone and every integer reachable
        return int(min(max(math.floor(x + 0.5), spec.lower), spec.upper))
    return x


def unwarp(spec: ParamSpec, value) -> float:
    """Inverse of :func:`warp`; discrete values map to their bucket midpoint."""
    if not spec.contains(value):
        raise ValidationError(f"parameter {spec.name!r}: value {value!r} out of bounds")
    if spec.kind == "categorical":
        return (spec.choices.index(value) + 0.5) / spec.n_choices
    v = float(value)
    if spec.kind == "continuous":
        return _continuous_unwarp(spec, v)
    u_lo = _continuous_unwarp(spec, max(v - 0.5, spec.lower))
    u_hi = _continuous_unwarp(spec, min(v + 0.5, spec.upper))
    return 0.5 * (u_lo + u_hi)


@dataclass(frozen=True)
class SearchSpace:
    params: Tuple[ParamSpec, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        params = tuple(self.params)
        if not params:
            raise ValidationError("a search space needs at least one parameter")
        names = [p.name for p in params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"duplicate parameter names: {dupes}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    def __getitem__(self, name: str) -> ParamSpec:
        return self.params[self._index[name]]

    def __contains__(self, name) -> bool:
        return name in self._index

    def validate(self, config: Mapping[str, Any]) -> None:
        missing = [n for n in self.names if n not in config]
        extra = [n for n in config if n not in self._index]
        if missing or extra:
            raise ValidationError(f"configuration keys mismatch: missing={missing}, unknown={extra}")
        for p in self.params:
            if not p.contains(config[p.name]):
                raise ValidationError(f"parameter {p.name!r}: value {config[p.name]!r} out of bounds")

    def to_config(self, unit: Sequence[float]) -> Configuration:
        unit = np.asarray(unit, dtype=float)
        if unit.shape != (self.dim,):
            raise ValidationError(f"unit point has shape {unit.shape}, expected ({self.dim},)")
        return {p.name: warp(p, u) for p, u in zip(self.params, unit)}

    def to_unit(self, config: Mapping[str, Any]) -> np.ndarray:
        self.validate(config)
        return np.array([unwarp(p, config[p.name]) for p in self.params])

    def canonical(self, unit: Sequence[float]) -> np.ndarray:
        """Snap a unit point onto the representative of its native configuration."""
        return self.to_unit(self.to_config(unit))


def sample_prior(space: SearchSpace, n: int, rng: np.random.Generator) -> List[Configuration]:
    """Draw ``n`` configurations, each parameter from its declared sampler."""
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    u = rng.random((n, space.dim))
    return [space.to_config(row) for row in u]


def param_from_dict(entry: Mapping[str, Any]) -> ParamSpec:
    """Build a :class:`ParamSpec` from a config-file style mapping."""
    if not isinstance(entry, Mapping):
        raise ValidationError(f"parameter entry must be a table, got {entry!r}")
    allowed = {"name", "kind", "lower", "upper", "choices", "sampler", "group"}
    name = entry.get("name", "<unnamed>")
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise ValidationError(f"parameter {name!r}: unknown keys {unknown}")
    for key in ("name", "kind", "sampler", "group"):
        if key not in entry:
            raise ValidationError(f"parameter {name!r}: missing field {key!r}")
    if entry["kind"] == "categorical":
        for key in ("lower", "upper"):
            if key in entry:
                raise ValidationError(f"parameter {name!r}: field {key!r} not allowed for categorical")
        return ParamSpec(
            name=entry["name"], kind="categorical", sampler=entry["sampler"],
            group=entry["group"], choices=tuple(entry.get("choices", ())),
        )
    if "choices" in entry:
        raise ValidationError(f"parameter {name!r}: field 'choices' only allowed for categorical")
    for key in ("lower", "upper"):
        if key not in entry:
            raise ValidationError(f"parameter {name!r}: missing field {key!r}")
    return ParamSpec(
        name=entry["name"], kind=entry["kind"], sampler=entry["sampler"],
        group=entry["group"], lower=entry.get("lower"), upper=entry.get("upper"),
    )


def space_from_dicts(entries: Iterable[Mapping[str, Any]]) -> SearchSpace:
    return SearchSpace(tuple(param_from_dict(e) for e in entries))


DECODERS = ("Average", "Max", "2-gram", "3-gram")


def exp1_space(map_size_upper: int = 200) -> SearchSpace:
    """The 18-parameter STDP/SOM space, with a reduced map-size cap."""
    P = ParamSpec
    return SearchSpace((
        P("lambda_minus", "continuous", "RLogUniform", "G2", 1e-4, 1e-2),
        P("lambda_plus", "continuous", "LogUniform", "G2", 1e-4, 1e-2),
        P("map_size", "discrete", "Uniform", "G3", 20, map_size_upper),
        P("decoder", "categorical", "RandomChoice", "G4", choices=DECODERS),
        P("epochs", "discrete", "Uniform", "G5", 1, 3),
        P("weight_norm", "continuous", "Uniform", "G5", 78.4, 784),
        P("exc_v_th", "continuous", "Uniform", "G1", -59, 0),
        P("exc_v_rest", "continuous", "Uniform", "G1", -70, -60),
        P("exc_tau", "continuous", "LogUniform", "G1", 5, 5000),
        P("exc_t_ref", "discrete", "Uniform", "G1", 0, 20),
        P("exc_theta_plus", "continuous", "LogUniform", "G1", 0.001, 0.5),
        P("exc_tau_theta", "continuous", "LogUniform", "G1", 1e6, 1e7),
        P("exc_strength", "continuous", "LogUniform", "G3", 0.5, 500),
        P("inh_v_th", "continuous", "Uniform", "G1", -40, 0),
        P("inh_v_rest", "continuous", "Uniform", "G1", -60, -45),
        P("inh_tau", "continuous", "LogUniform", "G1", 5, 5000),
        P("inh_t_ref", "discrete", "Uniform", "G1", 0, 20),
        P("inh_strength", "continuous", "LogUniform", "G3", 0.5, 500),
    ))


# Best configuration reported for the MNIST STDP experiment; map size is
# substituted by callers that need a desk-scale network.
REFERENCE_CONFIGURATION: Configuration = {
    "lambda_minus": 0.00084,
    "lambda_plus": 0.0088,
    "map_size": 797,
    "decoder": "Max",
    "epochs": 2,
    "weight_norm": 123.38,
    "exc_v_th": -57.6,
    "exc_v_rest": -60.8,
    "exc_tau": 4166.8,
    "exc_t_ref": 6,
    "exc_theta_plus": 0.044,
    "exc_tau_theta": 2041798.0,
    "exc_strength": 356.9,
    "inh_v_th": -22.8,
    "inh_v_rest": -51.0,
    "inh_tau": 1516.15,
    "inh_t_ref": 19,
    "inh_strength": 433.6,
}
