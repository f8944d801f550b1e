"""Rotating-wave effective field, dressed eigenframes, trap centers and validity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .fields import (
    DoubleWellSplitter,
    FieldConfig,
    FieldSample,
    IoffeRing,
    QuadrupolePlusLinearRf,
    RingQuadrupole,
    TimeAveragedRing,
    cart,
    sample_fields,
)
from .spin import (
    DegenerateFieldError,
    Gauge,
    SpinRep,
    align_phases,
    align_rotation,
    eigenframe,
    rotation_matrix3,
    spin_matrices,
)

FD_STEP = 1e-5
_DEFAULT_REP = spin_matrices(1)


class ConvergenceError(RuntimeError):
    """Numerical minimization or integration did not converge."""


def _resonant_phasor(sample: FieldSample, kappa: int) -> np.ndarray:
    # H_+ multiplies exp(-i w t); it is the resonant part for kappa = +1, H_- for kappa = -1
    w = sample.rf_phasor
    return w if kappa == 1 else w.conj()


def _transverse(w_rot: np.ndarray) -> np.ndarray:
    """(B_x, B_y) of the effective field generated by a rotated rf phasor."""
    c = (w_rot[0] - 1j * w_rot[1]) / 2
    return np.array([c.real, -c.imag])


@dataclass(frozen=True, eq=False)
class DressedFrame:
    sample: FieldSample
    gauge: Gauge
    kappa: int
    b_eff: np.ndarray
    delta: float
    s_frame: np.ndarray = field(repr=False)
    eff_frame: np.ndarray = field(repr=False)
    k_matrix: np.ndarray = field(repr=False)

    @property
    def b_eff_norm(self) -> float:
        return float(np.linalg.norm(self.b_eff))

    @property
    def beta_s(self) -> float:
        return self.sample.beta_s

    @property
    def cos_beta_eff(self) -> float:
        return float(self.b_eff[2] / self.b_eff_norm)

    @property
    def beta_eff(self) -> float:
        return float(np.arccos(np.clip(self.cos_beta_eff, -1.0, 1.0)))

    @property
    def n_perp_eff(self) -> np.ndarray:
        axis, _ = align_rotation(self.b_eff)
        return axis

    def energies(self, rep: SpinRep) -> np.ndarray:
        """epsilon^(n) = kappa n |B_eff| in frame column order."""
        return self.kappa * rep.m_values * self.b_eff_norm

    def lab_state(self, n: float, rep: SpinRep) -> np.ndarray:
        """U^dagger(t=0) |n>_eff: sum_l <l|n>_eff |l>_s in the lab z-basis."""
        return self.s_frame @ self.eff_frame[:, rep.index(n)]


def effective_field_rotation(sample: FieldSample, kappa: int) -> np.ndarray:
    """Effective field from the rotation construction (rotation gauge).

    The rf phasor is rotated by the same SO(3) rotation that aligns the static
    field with z; for real amplitudes this is R B_a plus the z-rotated R B_b.
    """
    axis, angle = align_rotation(sample.b_static)
    w = rotation_matrix3(axis, angle) @ _resonant_phasor(sample, kappa)
    bx, by = _transverse(w)
    return np.array([bx, by, sample.b_static_norm - sample.omega])


def _rotate_z(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])


def static_frame(cfg: FieldConfig, sample: FieldSample, rep: SpinRep, gauge: Gauge,
                 previous: np.ndarray | None = None) -> np.ndarray:
    return eigenframe(rep, sample.b_static, gauge, phi=sample.phi, previous=previous)


def coupling_matrix(sample: FieldSample, kappa: int, rep: SpinRep, s_frame: np.ndarray) -> np.ndarray:
    """RWA interaction-picture Hamiltonian in the |m>_z basis for a given static frame.

    Diagonal kappa m Delta plus the resonant couplings <m|H_res|m-1>_s and h.c.
    """
    h_res = (kappa / 2) * rep.dot(_resonant_phasor(sample, kappa))
    hs = s_frame.conj().T @ h_res @ s_frame
    k = np.diag(kappa * rep.m_values * (sample.b_static_norm - sample.omega)).astype(complex)
    sub = np.diag(np.diag(hs, k=1), k=1)  # row m, column m-1 (basis ordered F..-F)
    k += sub + sub.conj().T
    return k


def effective_field_matrix_element(cfg: FieldConfig, r, t: float = 0.0, gauge=Gauge.ROTATION,
                                   rep: SpinRep = _DEFAULT_REP, *, all_m: bool = False,
                                   s_frame: np.ndarray | None = None):
    """Effective field from <m|H_res|m-1>_s with the ladder norm sqrt((F+m)(F-m+1)).

    With all_m=True returns the (2F, 3) array of estimates, one per coupled pair.
    """
    gauge = Gauge.parse(gauge)
    sample = sample_fields(cfg, r, t)
    if s_frame is None:
        s_frame = static_frame(cfg, sample, rep, gauge)
    h_res = (cfg.kappa / 2) * rep.dot(_resonant_phasor(sample, cfg.kappa))
    hs = s_frame.conj().T @ h_res @ s_frame
    f = rep.f
    rows = []
    for i, m in enumerate(rep.m_values[:-1]):
        c = hs[i, i + 1]
        val = 2 * c / (cfg.kappa * math.sqrt((f + m) * (f - m + 1)))
        rows.append([val.real, -val.imag, sample.b_static_norm - sample.omega])
    rows = np.array(rows).reshape(-1, 3)
    if all_m:
        return rows
    if rows.shape[0] == 0:
        return np.array([0.0, 0.0, sample.b_static_norm - sample.omega])
    return rows[0]


def effective_field(cfg: FieldConfig, r, t: float = 0.0, gauge=Gauge.ROTATION,
                    rep: SpinRep = _DEFAULT_REP, *, previous: "DressedFrame | None" = None,
                    route: str = "rotation") -> DressedFrame:
    """Dressed frame at position r and time t.

    `previous` seeds the smooth gauge. route="matrix-element" derives B_eff
    from the coupling matrix elements instead of the rotation construction.
    """
    gauge = Gauge.parse(gauge)
    sample = sample_fields(cfg, r, t)
    prev_s = previous.s_frame if previous is not None else None
    s_frame = static_frame(cfg, sample, rep, gauge, prev_s)
    kmat = coupling_matrix(sample, cfg.kappa, rep, s_frame)

    if gauge is Gauge.SMOOTH or route == "matrix-element":
        b_eff = effective_field_matrix_element(cfg, r, t, gauge, rep, s_frame=s_frame)
    else:
        b_eff = effective_field_rotation(sample, cfg.kappa)
        if gauge is Gauge.CYLINDRICAL:
            b_eff = _rotate_z(b_eff, -sample.phi)

    if gauge is Gauge.SMOOTH:
        eff_frame = _sorted_eigvecs(kmat, cfg.kappa, rep)
        if previous is not None:
            eff_frame = align_phases(eff_frame, previous.eff_frame)
        elif np.linalg.norm(b_eff) > 0:
            # anchor to the rotation construction of the same operator
            ref = eigenframe(rep, b_eff, Gauge.ROTATION)
            eff_frame = align_phases(eff_frame, ref)
    else:
        if np.linalg.norm(b_eff) == 0:
            raise DegenerateFieldError(f"effective field vanishes at {r}")
        # the cylindrical s-frame phases already carry the azimuth, so the
        # dressed eigenvectors use the plain rotation construction
        eff_frame = eigenframe(rep, b_eff, Gauge.ROTATION)
    delta = sample.b_static_norm - sample.omega
    return DressedFrame(sample, gauge, cfg.kappa, b_eff, delta, s_frame, eff_frame, kmat)


def _sorted_eigvecs(kmat: np.ndarray, kappa: int, rep: SpinRep) -> np.ndarray:
    w, v = np.linalg.eigh(kmat)
    order = np.argsort(-kappa * w, kind="stable")
    if np.min(np.abs(np.diff(w))) < 1e-14:
        raise DegenerateFieldError("effective field vanishes; dressed branches degenerate")
    return v[:, order]


def b_eff_norm(cfg: FieldConfig, r, t: float = 0.0) -> float:
    sample = sample_fields(cfg, r, t)
    return float(np.linalg.norm(effective_field_rotation(sample, cfg.kappa)))


def time_averaged_b_eff_norm(cfg: FieldConfig, r, npts: int = 256) -> float:
    """Average of |B_eff| over one modulation period (composite Simpson)."""
    if not cfg.time_dependent:
        return b_eff_norm(cfg, r)
    period = 2 * math.pi / cfg.omega_m
    ts = np.linspace(0.0, period, npts + 1)
    vals = np.array([b_eff_norm(cfg, r, t) for t in ts])
    return float(integrate.simpson(vals, x=ts) / period)


# -- trap centers ---------------------------------------------------------

@dataclass
class TrapCenter:
    rho_c: float
    z_c: float
    residual: float
    analytic: tuple[float, float] | None
    landscape: dict = field(default_factory=dict, repr=False)

    @property
    def analytic_distance(self) -> float | None:
        if self.analytic is None:
            return None
        return math.hypot(self.rho_c - self.analytic[0], self.z_c - self.analytic[1])

    def to_dict(self) -> dict:
        return {"rho_c": self.rho_c, "z_c": self.z_c, "residual": self.residual,
                "analytic": list(self.analytic) if self.analytic else None,
                "analytic_distance": self.analytic_distance}


def _objective(cfg: FieldConfig):
    def fun(rho, z):
        return time_averaged_b_eff_norm(cfg, cart(rho, 0.0, z))
    return fun


def _search_box(cfg: FieldConfig):
    """(rho range, z range or fixed z) for the coarse scan."""
    if isinstance(cfg, RingQuadrupole):
        r0 = cfg.r0
        return (cfg.rho0 - 1.5 * r0, cfg.rho0 + 1.5 * r0), (-1.5 * r0, 1.5 * r0)
    if isinstance(cfg, QuadrupolePlusLinearRf):
        return (0.5 * cfg.rho0, 1.5 * cfg.rho0), cfg.z_pin
    if isinstance(cfg, TimeAveragedRing):
        return (0.5 * cfg.rho0, 1.5 * cfg.rho0), 0.0
    if isinstance(cfg, IoffeRing):
        hi = 2.0 * max(cfg.bias_length, cfg.resonance_radius or 0.0)
        return (0.0, hi), 0.0
    if isinstance(cfg, DoubleWellSplitter):
        return (0.0, 2.0 * cfg.bias_length), cfg.z_end / 2
    raise TypeError(f"no trap-center search defined for {type(cfg).__name__}")


def trap_center(cfg: FieldConfig, *, grid: int = 41, xatol: float = 1e-10,
                maxiter: int = 4000) -> TrapCenter:
    """Minimize |B_eff| (time-averaged for the modulated ring) over (rho, z).

    Coarse grid scan followed by Nelder-Mead. Configurations with a z-mirror
    symmetry or a pinned plane are minimized over rho only.
    """
    fun = _objective(cfg)
    rho_rng, z_spec = _search_box(cfg)
    analytic = cfg.analytic_center()
    rhos = np.linspace(*rho_rng, grid)
    rhos = rhos[rhos > 0] if rhos[0] <= 0 else rhos

    def safe(rho, z):
        try:
            return fun(rho, z)
        except (DegenerateFieldError, ValueError):
            return np.inf

    if isinstance(z_spec, tuple):
        zs = np.linspace(*z_spec, grid)
        land = np.array([[safe(p, q) for q in zs] for p in rhos])
        cands = np.argwhere(land <= land.min() * (1 + 1e-9) + 1e-15)
        pts = [(rhos[i], zs[j]) for i, j in cands]
        if analytic is not None:
            pts.sort(key=lambda p: math.hypot(p[0] - analytic[0], p[1] - analytic[1]))
        x0 = np.array(pts[0])
        res = optimize.minimize(lambda x: safe(x[0], x[1]), x0, method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-15, "maxiter": maxiter,
                                         "initial_simplex": [x0, x0 + [0.02 * np.ptp(rhos), 0],
                                                             x0 + [0, 0.02 * np.ptp(zs)]]})
        rho_c, z_c = res.x
        landscape = {"rho": rhos, "z": zs, "b_eff": land}
    else:
        z_c = float(z_spec)
        land = np.array([safe(p, z_c) for p in rhos])
        x0 = np.array([rhos[int(np.argmin(land))]])
        step = 0.02 * np.ptp(rhos)
        res = optimize.minimize(lambda x: safe(abs(x[0]), z_c), x0, method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-15, "maxiter": maxiter,
                                         "initial_simplex": [x0, x0 + step]})
        rho_c = abs(float(res.x[0]))
        landscape = {"rho": rhos, "z": np.array([z_c]), "b_eff": land[:, None]}
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError(f"trap-center minimization failed: {res.message}")
    return TrapCenter(float(rho_c), float(z_c), float(res.fun), analytic, landscape)


# -- validity -------------------------------------------------------------

@dataclass
class ValidityReport:
    rwa_factors: dict
    adiabatic_ratio: float
    adiabatic_ratios: np.ndarray = field(repr=False)
    rwa_threshold: float = 0.15
    adiabatic_threshold: float = 0.1

    @property
    def rwa_max(self) -> float:
        return max(self.rwa_factors.values())

    @property
    def rwa_pass(self) -> bool:
        return self.rwa_max < self.rwa_threshold

    @property
    def adiabatic_pass(self) -> bool:
        return self.adiabatic_ratio < self.adiabatic_threshold

    def to_dict(self) -> dict:
        return {
            "rwa_factors": dict(self.rwa_factors),
            "rwa_max": self.rwa_max,
            "adiabatic_ratio": self.adiabatic_ratio,
            "thresholds": {"rwa": self.rwa_threshold, "adiabatic": self.adiabatic_threshold},
            "verdicts": {"rwa": self.rwa_pass, "adiabatic": self.adiabatic_pass},
        }


def frame_derivatives(cfg, position, velocity, t, gauge, rep, h: float = FD_STEP,
                      center: DressedFrame | None = None):
    """d/dt of the static and dressed frames along a velocity (central differences).

    Stencil frames are phase-aligned to the center frame, which keeps the
    difference quotient meaningful in every gauge.
    """
    position = np.asarray(position, float)
    velocity = np.asarray(velocity, float)
    if center is None:
        center = effective_field(cfg, position, t, gauge, rep)
    speed = float(np.linalg.norm(velocity))
    ds = np.zeros_like(center.s_frame)
    de = np.zeros_like(center.eff_frame)
    if speed > 0:
        u = velocity / speed
        fp = effective_field(cfg, position + h * u, t, gauge, rep, previous=_seed(center, gauge))
        fm = effective_field(cfg, position - h * u, t, gauge, rep, previous=_seed(center, gauge))
        ds += speed * (fp.s_frame - fm.s_frame) / (2 * h)
        de += speed * (fp.eff_frame - fm.eff_frame) / (2 * h)
    if cfg.time_dependent:
        ht = h / max(cfg.omega_m, 1e-300) * 1e-1
        fp = effective_field(cfg, position, t + ht, gauge, rep, previous=_seed(center, gauge))
        fm = effective_field(cfg, position, t - ht, gauge, rep, previous=_seed(center, gauge))
        ds += (fp.s_frame - fm.s_frame) / (2 * ht)
        de += (fp.eff_frame - fm.eff_frame) / (2 * ht)
    return center, ds, de


def _seed(center: DressedFrame, gauge: Gauge):
    return center if gauge is Gauge.SMOOTH else None


def nu_matrix(center: DressedFrame, ds: np.ndarray, de: np.ndarray) -> np.ndarray:
    """nu_pq coupling matrix between dressed branches (columns in frame order)."""
    s_conn = np.einsum("ij,ij->j", center.s_frame.conj(), ds)  # <l|dl/dt>_s
    v = center.eff_frame
    return -1j * (v.conj().T @ (s_conn[:, None] * v)) - 1j * (v.conj().T @ de)


def rwa_factor_sample(frame: DressedFrame, ds: np.ndarray) -> dict:
    """Field-equivalent magnitudes of the terms dropped or kept by the RWA, over omega."""
    s = frame.sample
    kappa = frame.kappa
    axis, angle = align_rotation(s.b_static)
    rot = rotation_matrix3(axis, angle)
    w_res = rot @ _resonant_phasor(s, kappa)
    w_counter = rot @ _resonant_phasor(s, -kappa)
    om = s.omega
    conn = frame.s_frame.conj().T @ ds
    off = conn - np.diag(np.diag(conn))
    return {
        "detuning": abs(frame.delta) / om,
        "co_rotating": float(np.hypot(*_transverse(w_res))) / om,
        "counter_rotating": float(np.hypot(*_transverse(w_counter))) / om,
        "longitudinal": abs(w_res[2]) / 2 / om,
        "frame_motion": float(np.max(np.abs(off))) / om if off.size else 0.0,
    }


def validity_report(cfg: FieldConfig, trajectory, times, gauge=Gauge.ROTATION,
                    rep: SpinRep = _DEFAULT_REP, *, rwa_threshold: float = 0.15,
                    adiabatic_threshold: float = 0.1) -> ValidityReport:
    """Evaluate RWA and adiabaticity diagnostics along r(t).

    `trajectory` is a callable t -> (position, velocity).
    """
    gauge = Gauge.parse(gauge)
    factors: dict[str, float] = {}
    ratios = []
    prev = None
    for t in np.asarray(times, dtype=float):
        pos, vel = trajectory(t)
        center = effective_field(cfg, pos, t, gauge, rep, previous=prev if gauge is Gauge.SMOOTH else None)
        center, ds, de = frame_derivatives(cfg, pos, vel, t, gauge, rep, center=center)
        sample = rwa_factor_sample(center, ds) | cfg.rwa_constraints(pos)
        for k, v in sample.items():
            factors[k] = max(factors.get(k, 0.0), float(v))
        nu = np.abs(nu_matrix(center, ds, de))
        e = center.energies(rep)
        gaps = np.abs(e[:, None] - e[None, :])
        mask = ~np.eye(len(e), dtype=bool)
        ratios.append(float(np.max(nu[mask] / gaps[mask])) if mask.any() else 0.0)
        prev = center
    ratios = np.array(ratios)
    return ValidityReport(factors, float(ratios.max()) if ratios.size else 0.0, ratios,
                          rwa_threshold, adiabatic_threshold)
