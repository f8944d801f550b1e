"""Adiabatic gauge potentials, geometric phases and (rho, z) phase maps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .dressed import FD_STEP, DressedFrame, effective_field
from .fields import (
    ConfigError,
    FieldConfig,
    IoffeRing,
    QuadrupolePlusLinearRf,
    RingQuadrupole,
    TimeAveragedRing,
    cart,
    cylindrical,
    sample_fields,
    unit_vectors,
)
from .spin import DegenerateFieldError, Gauge, SpinRep, spin_matrices

_DEFAULT_REP = spin_matrices(1)


class GaugeDiscontinuityError(ValueError):
    """The eigenframe phase convention jumps inside a finite-difference stencil."""


@dataclass(frozen=True)
class GaugeSample:
    a_vec: np.ndarray
    a_phi: float
    n: float
    gauge: Gauge
    static_part: np.ndarray = field(repr=False)
    effective_part: np.ndarray = field(repr=False)


def _check_continuity(center: np.ndarray, other: np.ndarray, what: str):
    ov = np.einsum("ij,ij->j", center.conj(), other)
    if np.any(np.abs(np.angle(ov)) > math.pi / 2):
        raise GaugeDiscontinuityError(
            f"{what} eigenframe phase jumps by more than pi/2 across the stencil; "
            "use the smooth-numeric gauge")


def _directional_connection(cfg, r, u, n, gauge, rep, t, h, center):
    """(static part, effective part) of A_n . u from central differences."""
    fp = effective_field(cfg, r + h * u, t, gauge, rep)
    fm = effective_field(cfg, r - h * u, t, gauge, rep)
    for f in (fp, fm):
        _check_continuity(center.s_frame, f.s_frame, "static")
        _check_continuity(center.eff_frame, f.eff_frame, "dressed")
    k = rep.index(n)
    v = center.eff_frame[:, k]
    weights = np.abs(v) ** 2
    ds = (fp.s_frame - fm.s_frame) / (2 * h)
    a_s = np.einsum("ij,ij->j", center.s_frame.conj(), ds).imag
    de = (fp.eff_frame[:, k] - fm.eff_frame[:, k]) / (2 * h)
    a_e = float(np.vdot(v, de).imag)
    return float(weights @ a_s), a_e


def gauge_potential_numeric(cfg: FieldConfig, r, n: float = 1, gauge=Gauge.CYLINDRICAL,
                            rep: SpinRep = _DEFAULT_REP, *, t: float = 0.0, h: float = FD_STEP,
                            directions=None) -> GaugeSample:
    """A_n(r) by central differences of the static and dressed eigenframes.

    Each component is Richardson-extrapolated from steps h and h/2. In the
    smooth gauge every stencil frame is anchored independently, so pointwise
    values coincide with the rotation gauge; transported phases along a path
    come from `geometric_phase_path`.
    """
    gauge = Gauge.parse(gauge)
    r = np.asarray(r, dtype=float)
    center = effective_field(cfg, r, t, gauge, rep)
    basis = np.eye(3) if directions is None else np.asarray(directions, float)
    stat = np.zeros(len(basis))
    eff = np.zeros(len(basis))
    for i, u in enumerate(basis):
        s1, e1 = _directional_connection(cfg, r, u, n, gauge, rep, t, h, center)
        s2, e2 = _directional_connection(cfg, r, u, n, gauge, rep, t, h / 2, center)
        stat[i] = (4 * s2 - s1) / 3
        eff[i] = (4 * e2 - e1) / 3
    a = stat + eff
    if directions is None:
        _, e_phi = unit_vectors(cylindrical(r)[1])
        a_phi = float(a @ e_phi)
    else:
        a_phi = float("nan")
    return GaugeSample(a, a_phi, n, gauge, stat, eff)


def _cosines(cfg: FieldConfig, rho: float, z: float, t: float = 0.0) -> tuple[float, float]:
    d = effective_field(cfg, cart(rho, 0.0, z), t, Gauge.ROTATION)
    return d.cos_beta_eff, math.cos(d.beta_s)


def gauge_potential_analytic(cfg: FieldConfig, rho: float, z: float, n: float = 1,
                             t: float = 0.0) -> float:
    """Closed-form azimuthal gauge potential for the ring configurations."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    cos_eff, cos_s = _cosines(cfg, rho, z, t)
    if isinstance(cfg, (RingQuadrupole, QuadrupolePlusLinearRf, TimeAveragedRing)):
        return -(n / rho) * cos_eff * cos_s
    if isinstance(cfg, IoffeRing):
        sign = math.cos(cfg.eta - cfg.kappa * math.pi / 2)
        if math.isclose(sign, 1.0, abs_tol=1e-9):
            # the Ioffe field azimuth runs opposite to phi, hence the sign
            return -(n / rho) * cos_eff * (1 - cos_s)
        if math.isclose(sign, -1.0, abs_tol=1e-9):
            return (n / rho) * cos_eff * (1 + cos_s)
        raise ConfigError("closed form only for eta = +-kappa pi/2")
    raise ConfigError(f"no closed-form gauge potential for {cfg.kind}")


def ring_quadrupole_potential_theta(cfg: RingQuadrupole, rho: float, z: float, n: float = 1) -> float:
    """Equivalent form (n/rho) cos(beta_eff) sin(theta) of the ring-quadrupole potential."""
    cos_eff, _ = _cosines(cfg, rho, z)
    return (n / rho) * cos_eff * math.sin(cfg.theta(rho, z))


def time_averaged_gauge(cfg: TimeAveragedRing, rho: float, z: float, n: float = 1,
                        npts: int = 256) -> float:
    """Average of the instantaneous azimuthal potential over one modulation period."""
    if not isinstance(cfg, TimeAveragedRing):
        raise ConfigError("time averaging applies to TimeAveragedRing only")
    cos_eff, cos_s = _tar_cosines(cfg, np.array([rho]), np.array([z]), npts)
    period = 2 * math.pi / cfg.omega_m
    ts = np.linspace(0.0, period, npts + 1)
    vals = -(n / rho) * cos_eff[0] * cos_s[0]
    return float(integrate.simpson(vals, x=ts) / period)


def _tar_cosines(cfg: TimeAveragedRing, rho: np.ndarray, z: np.ndarray, npts: int):
    """Vectorized cos(beta_eff), cos(beta_s) over points x time samples."""
    period = 2 * math.pi / cfg.omega_m
    ts = np.linspace(0.0, period, npts + 1)
    g = cfg.gradient
    bz = -2 * g * z[:, None] + cfg.b_m * np.sin(cfg.omega_m * ts)[None, :]
    br = g * rho[:, None]
    bs = np.hypot(br, bz)
    om = np.array([cfg.omega_at(t) for t in ts])[None, :]
    delta = bs - om
    transverse = cfg.b_rf * br / (2 * bs)
    return delta / np.hypot(delta, transverse), bz / bs


def closed_form_gauge(cfg: FieldConfig) -> tuple[Gauge, int]:
    """Gauge in which the closed form holds pointwise, and its pure-gauge offset k.

    gauge_potential_numeric in that gauge equals the closed form minus k n / rho;
    the offset is the potential of the single-valued rephasing exp(i k n phi)
    and changes ring phases by 2 pi k n only.
    """
    if isinstance(cfg, IoffeRing):
        sign = math.cos(cfg.eta - cfg.kappa * math.pi / 2)
        return Gauge.ROTATION, (0 if sign > 0 else 2)
    if has_closed_form(cfg):
        return Gauge.CYLINDRICAL, 0
    raise ConfigError(f"no closed-form gauge potential for {cfg.kind}")


def has_closed_form(cfg: FieldConfig) -> bool:
    if isinstance(cfg, (RingQuadrupole, QuadrupolePlusLinearRf, TimeAveragedRing)):
        return True
    if isinstance(cfg, IoffeRing):
        return abs(abs(math.cos(cfg.eta - cfg.kappa * math.pi / 2)) - 1) < 1e-9
    return False


def ring_phase(cfg: FieldConfig, rho: float, z: float, n: float = 1, q: int = 1,
               t: float = 0.0) -> float:
    """q 2 pi rho A_phi(rho, z) for a circle at fixed (rho, z)."""
    if q == 0:
        return 0.0
    if isinstance(cfg, TimeAveragedRing):
        a = time_averaged_gauge(cfg, rho, z, n)
    else:
        a = gauge_potential_analytic(cfg, rho, z, n, t)
    return q * 2 * math.pi * rho * a


# -- paths ----------------------------------------------------------------

@dataclass
class PathPhase:
    gamma: float
    error_estimate: float
    static_part: float
    effective_part: float
    samples: int


def circle_path(rho: float, z: float, q: int = 1, phi0: float = 0.0):
    """r(s), r'(s) for s in [0, 1] around a circle of radius rho at height z."""
    def path(s):
        ph = phi0 + 2 * math.pi * q * s
        pos = cart(rho, ph, z)
        vel = 2 * math.pi * q * rho * np.array([-math.sin(ph), math.cos(ph), 0.0])
        return pos, vel
    return path


def splitter_path(cfg, rho_split: float | None = None, arm: int = 1):
    """Split-recombine path x = arm rho_split sin^2(pi z/z_end), y = 0.

    z(s) = z_end (1 - cos pi s)/2 so the path starts and stops smoothly.
    `rho_split` defaults to the trap bottom at the rf maximum.
    """
    if rho_split is None:
        from .dressed import trap_center
        rho_split = trap_center(cfg).rho_c
    ze = cfg.z_end

    def path(s):
        z = ze * (1 - math.cos(math.pi * s)) / 2
        dz = ze * math.pi * math.sin(math.pi * s) / 2
        arg = math.pi * z / ze
        x = arm * rho_split * math.sin(arg) ** 2
        dx = arm * rho_split * math.sin(2 * arg) * math.pi / ze * dz
        return np.array([x, 0.0, z]), np.array([dx, 0.0, dz])
    return path


def _path_integrand(cfg, path, n, gauge, rep, t, ss):
    out = np.zeros((len(ss), 2))
    for i, s in enumerate(ss):
        pos, vel = path(s)
        speed = np.linalg.norm(vel)
        if speed == 0:
            continue
        g = gauge_potential_numeric(cfg, pos, n, gauge, rep, t=t, directions=[vel / speed])
        out[i] = speed * g.static_part[0], speed * g.effective_part[0]
    return out


def geometric_phase_path(cfg: FieldConfig, path: Callable, n: float = 1, gauge=Gauge.ROTATION,
                         rep: SpinRep = _DEFAULT_REP, *, samples: int = 1024, t: float = 0.0,
                         closed: bool | None = None) -> PathPhase:
    """Line integral of A_n along r(s), s in [0, 1].

    Rotation and cylindrical gauges integrate the finite-difference potential
    with composite Simpson (error estimate from the half-resolution rule).
    The smooth gauge transports frames along the path and sums link phases;
    for closed paths the last link returns to the anchored starting frame.
    """
    gauge = Gauge.parse(gauge)
    if closed is None:
        closed = bool(np.allclose(path(0.0)[0], path(1.0)[0], atol=1e-12))
    if gauge is Gauge.SMOOTH:
        g, s_part, e_part = _link_sum(cfg, path, n, rep, samples, t, closed)
        g2, *_ = _link_sum(cfg, path, n, rep, samples // 2, t, closed)
        # second-order links; report the Richardson-extrapolated value
        return PathPhase((4 * g - g2) / 3, abs(g - g2) / 3, s_part, e_part, samples)
    samples += samples % 2
    ss = np.linspace(0.0, 1.0, samples + 1)
    vals = _path_integrand(cfg, path, n, gauge, rep, t, ss)
    parts = integrate.simpson(vals, x=ss, axis=0)
    coarse = integrate.simpson(vals[::2], x=ss[::2], axis=0)
    total = float(parts.sum())
    return PathPhase(total, abs(total - float(coarse.sum())) / 15, float(parts[0]),
                     float(parts[1]), samples)


def _link_sum(cfg, path, n, rep, samples, t, closed):
    """Sum over links of sum_l w_l arg<u_l^k|u_l^(k+1)> with u_l = v_l |l>_s.

    Each per-l link is invariant under rephasing of the static frame, so the
    sum only depends on the dressed-branch phase, which telescopes on loops.
    """
    ss = np.linspace(0.0, 1.0, samples + 1)
    frames: list[DressedFrame] = []
    prev = None
    for s in (ss[:-1] if closed else ss):
        prev = effective_field(cfg, path(s)[0], t, Gauge.SMOOTH, rep, previous=prev)
        frames.append(prev)
    if closed:
        frames.append(frames[0])
    k = rep.index(n)
    s_part = e_part = 0.0
    for a, b in zip(frames[:-1], frames[1:]):
        va, vb = a.eff_frame[:, k], b.eff_frame[:, k]
        w = 0.5 * (np.abs(va) ** 2 + np.abs(vb) ** 2)
        ov_s = np.einsum("ij,ij->j", a.s_frame.conj(), b.s_frame)
        s_link = np.angle(ov_s)
        u_link = np.angle(va.conj() * vb * ov_s)
        s_part += float(w @ s_link)
        e_part += float(w @ (u_link - s_link))
    return s_part + e_part, s_part, e_part


def wrap_phase(x: float, period: float = 2 * math.pi) -> float:
    """Reduce to (-period/2, period/2]."""
    y = math.remainder(x, period)
    return period / 2 if y == -period / 2 else y


# -- grids ----------------------------------------------------------------

@dataclass
class PhaseGrid:
    rho_axis: np.ndarray
    z_axis: np.ndarray
    gamma: np.ndarray
    config: dict
    n: float
    gauge: str
    route: str

    def finite(self) -> np.ndarray:
        return self.gamma[np.isfinite(self.gamma)]

    def std(self) -> float:
        return float(np.std(self.finite()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.finite())))

    def rows(self):
        """(rho, z, gamma) in row-major order, rho outer and z inner."""
        for i, rho in enumerate(self.rho_axis):
            for j, z in enumerate(self.z_axis):
                yield float(rho), float(z), float(self.gamma[i, j])


def default_window(cfg: FieldConfig, half_width: float = 0.2, center=None):
    if center is None:
        from .dressed import trap_center
        ac = cfg.analytic_center()
        if ac is None:
            tc = trap_center(cfg)
            ac = (tc.rho_c, tc.z_c)
        center = ac
    rc, zc = center
    return (rc - half_width, rc + half_width, zc - half_width, zc + half_width)


def _grid_point(cfg, rho, z, n, gauge, rep, route):
    try:
        if rho <= 0:
            return math.nan
        if route == "numeric":
            g = gauge_potential_numeric(cfg, cart(rho, 0.0, z), n, gauge, rep)
            return 2 * math.pi * rho * g.a_phi
        return ring_phase(cfg, rho, z, n)
    except (DegenerateFieldError, ConfigError, GaugeDiscontinuityError, ZeroDivisionError):
        return math.nan


def phase_grid_scan(cfg: FieldConfig, window=None, resolution=(101, 101), n: float = 1,
                    gauge=Gauge.CYLINDRICAL, rep: SpinRep = _DEFAULT_REP, *,
                    route: str = "analytic", threads: int = 1) -> PhaseGrid:
    """gamma_n(rho, z) = 2 pi rho A_phi over a rectangular window.

    `window` is (rho_min, rho_max, z_min, z_max). Points where the fields are
    degenerate are stored as NaN.
    """
    gauge = Gauge.parse(gauge)
    if window is None:
        window = default_window(cfg)
    rmin, rmax, zmin, zmax = map(float, window)
    nr, nz = (resolution, resolution) if np.isscalar(resolution) else resolution
    if not (rmax > rmin and zmax > zmin) or nr < 1 or nz < 1:
        raise ValueError("scan window must have positive extent in rho and z")
    if route == "analytic" and not has_closed_form(cfg):
        route = "numeric"
    rho_axis = np.linspace(rmin, rmax, nr)
    z_axis = np.linspace(zmin, zmax, nz)
    if route == "analytic" and isinstance(cfg, TimeAveragedRing):
        gamma = _tar_grid(cfg, rho_axis, z_axis, n)
    else:
        pts = [(p, q) for p in rho_axis for q in z_axis]
        work = lambda pq: _grid_point(cfg, pq[0], pq[1], n, gauge, rep, route)  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                vals = list(ex.map(work, pts))
        else:
            vals = [work(pq) for pq in pts]
        gamma = np.array(vals, dtype=float).reshape(nr, nz)
    return PhaseGrid(rho_axis, z_axis, gamma, cfg.to_dict(), n, gauge.value, route)


def _tar_grid(cfg: TimeAveragedRing, rho_axis, z_axis, n, npts: int = 256):
    R, Z = np.meshgrid(rho_axis, z_axis, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_eff, cos_s = _tar_cosines(cfg, R.ravel(), Z.ravel(), npts)
        period = 2 * math.pi / cfg.omega_m
        ts = np.linspace(0.0, period, npts + 1)
        # 2 pi rho * (-(n/rho) <cos_eff cos_s>)
        avg = integrate.simpson(cos_eff * cos_s, x=ts, axis=1) / period
        gamma = -2 * math.pi * n * avg
    gamma = gamma.reshape(R.shape)
    gamma[R <= 0] = np.nan
    return gamma
