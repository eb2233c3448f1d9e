"""Molecule and experiment data model, JSON config ingestion, initial states."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field as dc_field
from typing import Any, Sequence

import jsonschema
import numpy as np
from scipy.linalg import expm

from .errors import ConfigParseError, ValidationError
from .spin import HilbertLayout, SINGLET_VECTOR, spin_operators

#: |gamma_e| in rad us^-1 mT^-1; converts mT couplings to angular frequency.
GAMMA_E = 176.0859645

DEFAULT_B_UT = 50.0
DEFAULT_K_US = 0.5


class Radical(str, enum.Enum):
    D = "D"
    A = "A"


class NoiseModel(str, enum.Enum):
    LOCAL_DEPHASING = "LocalDephasing"
    RELAXATION = "Relaxation"
    SINGLET_TRIPLET_DEPHASING = "SingletTripletDephasing"


class ElectronState(str, enum.Enum):
    SINGLET = "Singlet"
    TRIPLET_PLUS = "TripletPlus"
    TRIPLET_ZERO = "TripletZero"
    TRIPLET_MINUS = "TripletMinus"
    MIXED = "Mixed"


def _as_tensor(value) -> tuple[tuple[float, ...], ...]:
    arr = np.asarray(value, dtype=float)
    if arr.size != 9:
        raise ValidationError("tensor", f"expected 9 entries, got {arr.size}")
    arr = arr.reshape(3, 3)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("tensor", "entries must be finite")
    return tuple(tuple(float(x) for x in row) for row in arr)


@dataclass(frozen=True)
class Nucleus:
    """One magnetic nucleus; ``tensor`` is the hyperfine tensor in mT."""

    label: str
    radical: Radical
    multiplicity: int
    tensor: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "radical", Radical(self.radical))
        if int(self.multiplicity) != self.multiplicity or self.multiplicity < 2:
            raise ValidationError(f"nuclei[{self.label}].multiplicity", "must be an integer >= 2")
        object.__setattr__(self, "multiplicity", int(self.multiplicity))
        object.__setattr__(self, "tensor", _as_tensor(self.tensor))

    @property
    def tensor_array(self) -> np.ndarray:
        return np.array(self.tensor, dtype=float)


@dataclass(frozen=True)
class RadicalPairSystem:
    """Two electrons plus nuclei, stored in canonical site order (D nuclei first)."""

    nuclei: tuple[Nucleus, ...] = ()

    def __post_init__(self):
        nuclei = tuple(self.nuclei)
        labels = [n.label for n in nuclei]
        if len(set(labels)) != len(labels):
            raise ValidationError("nuclei", f"duplicate labels in {labels}")
        ordered = tuple(n for n in nuclei if n.radical is Radical.D) + tuple(
            n for n in nuclei if n.radical is Radical.A
        )
        object.__setattr__(self, "nuclei", ordered)

    @property
    def layout(self) -> HilbertLayout:
        return HilbertLayout.from_nuclei([n.multiplicity for n in self.nuclei])

    @property
    def dim(self) -> int:
        return self.layout.dim

    def site_of(self, label: str) -> int:
        for i, n in enumerate(self.nuclei):
            if n.label == label:
                return i + 2
        raise KeyError(label)

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "RadicalPairSystem":
        return RadicalPairSystem(
            tuple(
                Nucleus(n.label, n.radical, n.multiplicity, t) for n, t in zip(self.nuclei, tensors)
            )
        )


@dataclass(frozen=True)
class FieldSpec:
    """Static field: ``b`` in uT, polar and azimuthal angles in radians."""

    b: float = DEFAULT_B_UT
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.b) or self.b < 0:
            raise ValidationError("field.b_uT", f"must be finite and >= 0, got {self.b}")
        if not 0.0 <= self.theta <= np.pi:
            raise ValidationError("field.theta_rad", f"must lie in [0, pi], got {self.theta}")
        if not 0.0 <= self.phi < 2 * np.pi:
            raise ValidationError("field.phi_rad", f"must lie in [0, 2pi), got {self.phi}")

    @property
    def direction(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    def pointing(self, theta: float, phi: float) -> "FieldSpec":
        return FieldSpec(self.b, theta, phi)


@dataclass(frozen=True)
class NoiseSpec:
    model: NoiseModel
    xi: float

    def __post_init__(self):
        object.__setattr__(self, "model", NoiseModel(self.model))
        if not np.isfinite(self.xi) or self.xi < 0:
            raise ValidationError("reaction.noise.xi_us", f"must be >= 0, got {self.xi}")


@dataclass(frozen=True)
class ReactionSpec:
    """Recombination rates (us^-1) and an optional noise channel."""

    k_s: float = DEFAULT_K_US
    k_t: float = DEFAULT_K_US
    noise: NoiseSpec | None = None

    def __post_init__(self):
        for name, value in (("reaction.kS_us", self.k_s), ("reaction.kT_us", self.k_t)):
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(name, f"must be > 0, got {value}")

    @property
    def equal_rates(self) -> bool:
        return self.k_s == self.k_t

    @property
    def noiseless(self) -> bool:
        return self.noise is None or self.noise.xi == 0


@dataclass(frozen=True)
class NuclearPolarization:
    label: str
    axis: tuple[float, float, float]
    beta: float

    def __post_init__(self):
        axis = tuple(float(x) for x in self.axis)
        if len(axis) != 3 or not np.isfinite(axis).all():
            raise ValidationError(f"initial.polarizations[{self.label}].axis", "must be 3 finite numbers")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValidationError(f"initial.polarizations[{self.label}].axis", "must be a unit vector")
        if not np.isfinite(self.beta):
            raise ValidationError(f"initial.polarizations[{self.label}].beta", "must be finite")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class InitialStateSpec:
    electron_state: ElectronState = ElectronState.SINGLET
    polarizations: tuple[NuclearPolarization, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "electron_state", ElectronState(self.electron_state))
        object.__setattr__(self, "polarizations", tuple(self.polarizations))


@dataclass(frozen=True)
class Config:
    system: RadicalPairSystem = dc_field(default_factory=RadicalPairSystem)
    field: FieldSpec = dc_field(default_factory=FieldSpec)
    reaction: ReactionSpec = dc_field(default_factory=ReactionSpec)
    initial: InitialStateSpec = dc_field(default_factory=InitialStateSpec)
    description: str | None = None

    def __iter__(self):
        # unpacks as (system, field, reaction, initial)
        return iter((self.system, self.field, self.reaction, self.initial))


_NUMBER = {"type": "number"}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "nuclei": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["label", "radical", "multiplicity", "tensor_mT"],
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "radical": {"enum": ["D", "A"]},
                    "multiplicity": {"type": "integer"},
                    "tensor_mT": {"type": "array", "items": _NUMBER, "minItems": 9, "maxItems": 9},
                },
            },
        },
        "field": {
            "type": "object",
            "additionalProperties": False,
            "required": ["b_uT"],
            "properties": {"b_uT": _NUMBER, "theta_rad": _NUMBER, "phi_rad": _NUMBER},
        },
        "reaction": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kS_us", "kT_us"],
            "properties": {
                "kS_us": _NUMBER,
                "kT_us": _NUMBER,
                "noise": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["model", "xi_us"],
                    "properties": {
                        "model": {"enum": [m.value for m in NoiseModel]},
                        "xi_us": _NUMBER,
                    },
                },
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["electron"],
            "properties": {
                "electron": {"enum": [s.value for s in ElectronState]},
                "polarizations": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["label", "axis", "beta"],
                        "properties": {
                            "label": {"type": "string"},
                            "axis": {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3},
                            "beta": _NUMBER,
                        },
                    },
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def _json_path(error: jsonschema.ValidationError) -> str:
    path = "$"
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def config_from_dict(doc: Any) -> Config:
    """Validate a decoded config document and build the model objects."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigParseError(err.message, _json_path(err))

    nuclei = []
    for i, item in enumerate(doc.get("nuclei", [])):
        try:
            nuclei.append(Nucleus(item["label"], item["radical"], item["multiplicity"], item["tensor_mT"]))
        except ValidationError as exc:
            raise ValidationError(f"nuclei[{i}].{exc.field.split('.')[-1]}", str(exc)) from exc
    system = RadicalPairSystem(tuple(nuclei))

    f = doc.get("field", {})
    field_spec = FieldSpec(
        float(f.get("b_uT", DEFAULT_B_UT)), float(f.get("theta_rad", 0.0)), float(f.get("phi_rad", 0.0))
    )

    r = doc.get("reaction", {})
    noise = None
    if "noise" in r:
        noise = NoiseSpec(NoiseModel(r["noise"]["model"]), float(r["noise"]["xi_us"]))
    reaction = ReactionSpec(float(r.get("kS_us", DEFAULT_K_US)), float(r.get("kT_us", DEFAULT_K_US)), noise)

    init = doc.get("initial", {})
    labels = {n.label for n in system.nuclei}
    pols = []
    for p in init.get("polarizations", []):
        if p["label"] not in labels:
            raise ValidationError("initial.polarizations.label", f"unknown nucleus {p['label']!r}")
        pols.append(NuclearPolarization(p["label"], tuple(p["axis"]), float(p["beta"])))
    initial = InitialStateSpec(ElectronState(init.get("electron", ElectronState.SINGLET.value)), tuple(pols))

    return Config(system, field_spec, reaction, initial, doc.get("description"))


def parse_config(text: str) -> Config:
    """Parse a JSON config document.

    Returns a :class:`Config`, which unpacks as
    ``(system, field, reaction, initial)``.  Missing sections take the
    defaults b = 50 uT, k_S = k_T = 0.5 us^-1, singlet-born, depolarized nuclei.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc.msg}", f"$ (line {exc.lineno})") from exc
    return config_from_dict(doc)


def config_to_dict(config: Config) -> dict[str, Any]:
    system, field_spec, reaction, initial = config
    doc: dict[str, Any] = {}
    if config.description is not None:
        doc["description"] = config.description
    doc["nuclei"] = [
        {
            "label": n.label,
            "radical": n.radical.value,
            "multiplicity": n.multiplicity,
            "tensor_mT": [x for row in n.tensor for x in row],
        }
        for n in system.nuclei
    ]
    doc["field"] = {"b_uT": field_spec.b, "theta_rad": field_spec.theta, "phi_rad": field_spec.phi}
    doc["reaction"] = {"kS_us": reaction.k_s, "kT_us": reaction.k_t}
    if reaction.noise is not None:
        doc["reaction"]["noise"] = {"model": reaction.noise.model.value, "xi_us": reaction.noise.xi}
    doc["initial"] = {"electron": initial.electron_state.value}
    if initial.polarizations:
        doc["initial"]["polarizations"] = [
            {"label": p.label, "axis": list(p.axis), "beta": p.beta} for p in initial.polarizations
        ]
    return doc


def serialize_config(config: Config) -> str:
    return json.dumps(config_to_dict(config), indent=2)


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


_ELECTRON_VECTORS = {
    ElectronState.SINGLET: SINGLET_VECTOR,
    ElectronState.TRIPLET_PLUS: np.array([1, 0, 0, 0], dtype=complex),
    ElectronState.TRIPLET_ZERO: np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    ElectronState.TRIPLET_MINUS: np.array([0, 0, 0, 1], dtype=complex),
}


def electron_density(state: ElectronState) -> np.ndarray:
    if state is ElectronState.MIXED:
        return np.eye(4, dtype=complex) / 4
    v = _ELECTRON_VECTORS[state]
    return np.outer(v, v.conj())


def polarized_nuclear_state(multiplicity: int, axis, beta: float) -> np.ndarray:
    """exp(beta n.I) / Z for a single nucleus."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValidationError("axis", "must be a unit vector")
    if beta == 0:
        return np.eye(multiplicity, dtype=complex) / multiplicity
    ops = spin_operators(multiplicity)
    gen = beta * (axis[0] * ops.sx + axis[1] * ops.sy + axis[2] * ops.sz)
    w, v = np.linalg.eigh(gen)
    w = np.exp(w - w.max())
    rho = (v * w) @ v.conj().T
    return rho / np.trace(rho).real


def build_initial_state(system: RadicalPairSystem, spec: InitialStateSpec | None = None) -> np.ndarray:
    """Product-state density matrix rho_0 on the joint space."""
    spec = spec or InitialStateSpec()
    pol = {p.label: p for p in spec.polarizations}
    unknown = set(pol) - {n.label for n in system.nuclei}
    if unknown:
        raise ValidationError("initial.polarizations.label", f"unknown nuclei {sorted(unknown)}")
    rho = electron_density(spec.electron_state)
    for n in system.nuclei:
        if n.label in pol:
            factor = polarized_nuclear_state(n.multiplicity, pol[n.label].axis, pol[n.label].beta)
        else:
            factor = np.eye(n.multiplicity, dtype=complex) / n.multiplicity
        rho = np.kron(rho, factor)
    return rho
