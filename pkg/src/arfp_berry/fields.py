"""Static and rf magnetic fields of the five trap configurations.

Reduced units throughout: mu_B |g_F| = 1, so fields are quoted as Larmor
frequencies, and the gradient B' is normally 1. Positions are Cartesian
3-vectors (x, y, z).

The rf field is stored as phasors: the oscillating field is
Re[(b_rf_a + exp(-i eta) b_rf_b) exp(-i theta(t))] with carrier phase
theta(t) = omega t. For real b_rf_a, b_rf_b this is
b_rf_a cos(omega t) + b_rf_b cos(omega t + eta).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .spin import DegenerateFieldError

SQRT2 = math.sqrt(2.0)


class ConfigError(ValueError):
    """Invalid configuration parameters or evaluation outside the model region."""


def cart(rho: float, phi: float, z: float) -> np.ndarray:
    return np.array([rho * math.cos(phi), rho * math.sin(phi), z])


def cylindrical(r) -> tuple[float, float, float]:
    return float(math.hypot(r[0], r[1])), float(math.atan2(r[1], r[0])), float(r[2])


def unit_vectors(phi: float) -> tuple[np.ndarray, np.ndarray]:
    """(e_rho, e_phi) at azimuth phi."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c, s, 0.0]), np.array([-s, c, 0.0])


@dataclass(frozen=True)
class FieldSample:
    position: np.ndarray
    b_static: np.ndarray
    b_rf_a: np.ndarray
    b_rf_b: np.ndarray
    eta: float
    omega: float
    carrier_phase: float

    @property
    def rf_phasor(self) -> np.ndarray:
        return self.b_rf_a + np.exp(-1j * self.eta) * self.b_rf_b

    @property
    def rho(self) -> float:
        return cylindrical(self.position)[0]

    @property
    def phi(self) -> float:
        return cylindrical(self.position)[1]

    @property
    def z(self) -> float:
        return float(self.position[2])

    @property
    def b_static_norm(self) -> float:
        return float(np.linalg.norm(self.b_static))

    @property
    def beta_s(self) -> float:
        return float(np.arccos(np.clip(self.b_static[2] / self.b_static_norm, -1, 1)))

    def rf_field(self) -> np.ndarray:
        return np.real(self.rf_phasor * np.exp(-1j * self.carrier_phase))


@dataclass(frozen=True)
class FieldConfig:
    """Base class; subclasses define the fields of one trap geometry."""

    kind: ClassVar[str] = ""
    kappa: int = 1

    def __post_init__(self):
        if self.kappa not in (1, -1):
            raise ConfigError("kappa must be +1 or -1")
        for name in self._positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{self.kind}: {name} must be strictly positive")

    _positive: ClassVar[tuple[str, ...]] = ()
    cylindrically_symmetric: ClassVar[bool] = False
    time_dependent: ClassVar[bool] = False

    # subclass hooks -----------------------------------------------------
    def static_field(self, r, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def rf_amplitudes(self, r, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def eta(self) -> float:
        return 0.0

    def omega_at(self, t: float = 0.0) -> float:
        return self.omega

    def carrier_phase(self, t: float) -> float:
        return self.omega_at(t) * t

    def check_region(self, r) -> None:
        pass

    def analytic_center(self) -> tuple[float, float] | None:
        return None

    def rwa_constraints(self, r) -> dict[str, float]:
        """Design-level RWA ratios at r, beyond the pointwise factors."""
        return {}

    # shared API ---------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update(dataclasses.asdict(self))
        return d

    def replace(self, **changes) -> "FieldConfig":
        return dataclasses.replace(self, **changes)


def sample_fields(cfg: FieldConfig, r, t: float = 0.0) -> FieldSample:
    r = np.asarray(r, dtype=float)
    cfg.check_region(r)
    bs = np.asarray(cfg.static_field(r, t), dtype=float)
    if not np.all(np.isfinite(bs)):
        raise DegenerateFieldError(f"static field not finite at {r}")
    if np.linalg.norm(bs) == 0.0:
        raise DegenerateFieldError(f"static field vanishes at {r}")
    a, b = cfg.rf_amplitudes(r, t)
    return FieldSample(r, bs, np.asarray(a, dtype=complex), np.asarray(b, dtype=complex),
                       cfg.eta, cfg.omega_at(t), cfg.carrier_phase(t))


def total_field(cfg: FieldConfig, r, t: float) -> np.ndarray:
    """Static plus oscillating field at position r and time t."""
    s = sample_fields(cfg, r, t)
    return s.b_static + s.rf_field()


@dataclass(frozen=True)
class RingQuadrupole(FieldConfig):
    """Ring-shaped quadrupole static field vanishing on the circle rho = rho0.

    Only the near-ring expansion is modelled; positions further than
    0.5 rho0 from the zero circle are refused.
    """

    kind: ClassVar[str] = "RingQuadrupole"
    gradient: float = 1.0
    rho0: float = 1.0
    a: float = 0.02
    b: float = 0.01
    varphi: float = 0.0
    omega: float = 0.1
    _positive: ClassVar[tuple[str, ...]] = ("gradient", "rho0", "a", "b", "omega")
    cylindrically_symmetric: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if not self.rho0 > self.r0:
            raise ConfigError("RingQuadrupole: rho0 must exceed r0 = omega / B'")

    @property
    def eta(self) -> float:
        return self.varphi

    @property
    def r0(self) -> float:
        return self.omega / self.gradient

    def check_region(self, r):
        rho, _, z = cylindrical(r)
        if math.hypot(rho - self.rho0, z) > 0.5 * self.rho0:
            raise ConfigError("RingQuadrupole field is only defined within 0.5 rho0 of the ring")

    def static_field(self, r, t=0.0):
        rho, phi, z = cylindrical(r)
        e_rho, _ = unit_vectors(phi)
        return self.gradient * ((rho - self.rho0) * e_rho - z * np.array([0.0, 0.0, 1.0]))

    def rf_amplitudes(self, r, t=0.0):
        _, phi, _ = cylindrical(r)
        e_rho, _ = unit_vectors(phi)
        ez = np.array([0.0, 0.0, 1.0])
        # a: cos(wt) e_rho - sin(wt) e_z ; b: cos(wt+varphi) e_rho + sin(wt+varphi) e_z
        return (self.a / SQRT2) * (e_rho - 1j * ez), (self.b / SQRT2) * (e_rho + 1j * ez)

    def theta(self, rho, z) -> float:
        return math.atan2(z, rho - self.rho0)

    def analytic_center(self):
        th = -self.varphi / 2
        return self.rho0 + self.r0 * math.cos(th), self.r0 * math.sin(th)


@dataclass(frozen=True)
class QuadrupolePlusLinearRf(FieldConfig):
    """Quadrupole B'(x, y, -2z) with a uniform rf field along z."""

    kind: ClassVar[str] = "QuadrupolePlusLinearRf"
    gradient: float = 1.0
    b_rf: float = 0.15
    omega: float = 1.0
    z_pin: float = 0.0
    _positive: ClassVar[tuple[str, ...]] = ("gradient", "omega")
    cylindrically_symmetric: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.b_rf < 0:
            raise ConfigError("b_rf must be non-negative")

    @property
    def rho0(self) -> float:
        return self.omega / self.gradient

    def static_field(self, r, t=0.0):
        return self.gradient * np.array([r[0], r[1], -2.0 * r[2]])

    def rf_amplitudes(self, r, t=0.0):
        return np.array([0.0, 0.0, self.b_rf]), np.zeros(3)

    def analytic_center(self):
        if self.z_pin != 0.0:
            return None
        return self.rho0, 0.0


@dataclass(frozen=True)
class TimeAveragedRing(FieldConfig):
    """Quadrupole with a modulated bias B_m sin(w_m t) and chirped rf along z."""

    kind: ClassVar[str] = "TimeAveragedRing"
    gradient: float = 1.0
    b_m: float = 0.05
    omega_m: float = 0.01
    b_rf: float = 0.1
    omega0: float = 1.0
    _positive: ClassVar[tuple[str, ...]] = ("gradient", "omega_m", "omega0")
    cylindrically_symmetric: ClassVar[bool] = True
    time_dependent: ClassVar[bool] = True

    @property
    def rho0(self) -> float:
        return self.omega0 / self.gradient

    @property
    def omega(self) -> float:
        return self.omega0

    def omega_at(self, t=0.0):
        s = math.sin(self.omega_m * t)
        return self.omega0 * math.sqrt(1.0 + (self.b_m / (self.gradient * self.rho0)) ** 2 * s * s)

    def static_field(self, r, t=0.0):
        g = self.gradient
        return np.array([g * r[0], g * r[1], -2 * g * r[2] + self.b_m * math.sin(self.omega_m * t)])

    def rf_amplitudes(self, r, t=0.0):
        # B_rf sin(theta) = Re[i B_rf exp(-i theta)]
        return np.array([0.0, 0.0, 1j * self.b_rf]), np.zeros(3, dtype=complex)

    def analytic_center(self):
        return self.rho0, 0.0


@dataclass(frozen=True)
class IoffeRing(FieldConfig):
    """Ioffe-Pritchard static field with circularly combined rf in the x-y plane.

    The y amplitude carries a minus sign so that eta = +kappa pi/2 is the
    polarization co-rotating with the Larmor precession at the origin.
    """

    kind: ClassVar[str] = "IoffeRing"
    gradient: float = 1.0
    bias_length: float = 1.0
    b_rf0: float = 0.08
    curvature: float = 1e-12
    eta_value: float = math.pi / 2
    omega: float = 1.02
    _positive: ClassVar[tuple[str, ...]] = ("gradient", "bias_length", "b_rf0", "omega")

    @property
    def eta(self) -> float:
        return self.eta_value

    @property
    def detuning_origin(self) -> float:
        """|B_s(0)| - omega; negative when the rf lies above the trap bottom."""
        return self.gradient * self.bias_length - self.omega

    @property
    def lam(self) -> float:
        """sqrt2 (omega - |B_s(0)|) / B_rf0."""
        return -SQRT2 * self.detuning_origin / self.b_rf0

    @property
    def resonance_radius(self) -> float | None:
        g, L = self.gradient, self.bias_length
        if self.omega <= g * L:
            return None
        return math.sqrt((self.omega / g) ** 2 - L * L)

    @classmethod
    def from_lambda(cls, lam: float, b_rf0: float = 0.08, *, eta_sign: int = 1, kappa: int = 1,
                    gradient: float = 1.0, bias_length: float = 1.0, curvature: float = 1e-12):
        """Build from the rf offset above the trap bottom.

        eta = +kappa pi/2 uses lambda = sqrt2 (omega - B'L)/B_rf0; eta = -kappa pi/2
        uses lambda' = 6 sqrt2 (omega - B'L)/B_rf0.
        """
        if eta_sign not in (1, -1):
            raise ConfigError("eta_sign must be +1 or -1")
        scale = SQRT2 if eta_sign == 1 else 6 * SQRT2
        omega = gradient * bias_length + lam * b_rf0 / scale
        return cls(kappa=kappa, gradient=gradient, bias_length=bias_length, b_rf0=b_rf0,
                   curvature=curvature, eta_value=eta_sign * kappa * math.pi / 2, omega=omega)

    def b_rf_at(self, z: float) -> float:
        return self.b_rf0 + self.curvature * z * z

    def rwa_constraints(self, r) -> dict[str, float]:
        """Axis detuning and rf amplitude, each over the bias field B'L."""
        bias = self.gradient * self.bias_length
        return {"axis_detuning": abs(self.detuning_origin) / bias,
                "axis_rf": self.b_rf_at(float(r[2])) / (SQRT2 * bias)}

    def static_field(self, r, t=0.0):
        g = self.gradient
        return np.array([g * r[0], -g * r[1], g * self.bias_length])

    def rf_amplitudes(self, r, t=0.0):
        c = self.b_rf_at(r[2]) / SQRT2
        return np.array([c, 0.0, 0.0]), np.array([0.0, -c, 0.0])


def raised_cosine_ramp(z: float, z_end: float) -> float:
    """0 -> 1 -> 0 over z in [0, z_end]; zero outside."""
    if z <= 0.0 or z >= z_end:
        return 0.0
    return math.sin(math.pi * z / z_end) ** 2


@dataclass(frozen=True)
class DoubleWellSplitter(FieldConfig):
    """Ioffe-Pritchard static field with a linearly polarized rf ramp B_rf[z] x."""

    kind: ClassVar[str] = "DoubleWellSplitter"
    gradient: float = 1.0
    bias_length: float = 1.0
    b_max: float = 0.2
    z_end: float = 10.0
    omega: float = 0.9
    _positive: ClassVar[tuple[str, ...]] = ("gradient", "bias_length", "b_max", "z_end", "omega")

    def b_rf_at(self, z: float) -> float:
        return self.b_max * raised_cosine_ramp(z, self.z_end)

    def static_field(self, r, t=0.0):
        g = self.gradient
        return np.array([g * r[0], -g * r[1], g * self.bias_length])

    def rf_amplitudes(self, r, t=0.0):
        return np.array([self.b_rf_at(r[2]), 0.0, 0.0]), np.zeros(3)


CONFIG_TYPES: dict[str, type[FieldConfig]] = {
    c.kind: c for c in (RingQuadrupole, QuadrupolePlusLinearRf, TimeAveragedRing, IoffeRing,
                        DoubleWellSplitter)
}


def config_from_dict(doc: dict) -> FieldConfig:
    """Build a FieldConfig from its JSON document; unknown keys are rejected."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("config document must be an object with a 'kind' key")
    kind = doc["kind"]
    if kind not in CONFIG_TYPES:
        raise ConfigError(f"unknown config kind {kind!r}")
    cls = CONFIG_TYPES[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    params = {k: v for k, v in doc.items() if k != "kind"}
    unknown = set(params) - names
    if unknown:
        raise ConfigError(f"{kind}: unknown keys {sorted(unknown)}")
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{kind}.{k} must be a number")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
