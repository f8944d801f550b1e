"""Spin-F angular momentum algebra, rotations and field-aligned eigenframes.

All matrices are in the z-quantized basis ordered m = F, F-1, ..., -F and
use hbar = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial.transform import Rotation as _Rot3


class DegenerateFieldError(ValueError):
    """Raised when a field vector vanishes where a quantization axis is needed."""


class Gauge(str, enum.Enum):
    ROTATION = "rotation"
    CYLINDRICAL = "cylindrical"
    SMOOTH = "smooth-numeric"

    @classmethod
    def parse(cls, value) -> "Gauge":
        if isinstance(value, cls):
            return value
        if value == "smooth":
            return cls.SMOOTH
        return cls(value)


@dataclass(frozen=True, eq=False)
class SpinRep:
    f: float
    fx: np.ndarray = field(repr=False)
    fy: np.ndarray = field(repr=False)
    fz: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.fz.shape[0]

    @property
    def m_values(self) -> np.ndarray:
        return np.real(np.diag(self.fz)).copy()

    @property
    def fplus(self) -> np.ndarray:
        return self.fx + 1j * self.fy

    def dot(self, v) -> np.ndarray:
        """F . v for a (possibly complex) 3-vector v."""
        return self.fx * v[0] + self.fy * v[1] + self.fz * v[2]

    def basis(self, m) -> np.ndarray:
        """The z-basis ket |m>."""
        idx = int(round(self.f - m))
        if not 0 <= idx < self.dim or abs(self.m_values[idx] - m) > 1e-12:
            raise ValueError(f"m={m} is not a valid projection for F={self.f}")
        v = np.zeros(self.dim, dtype=complex)
        v[idx] = 1.0
        return v

    def index(self, m) -> int:
        return int(round(self.f - m))


def spin_matrices(f) -> SpinRep:
    """Angular momentum matrices for spin `f` (integer or half-integer)."""
    try:
        two_f = Fraction(f).limit_denominator(1000) * 2
    except (TypeError, ValueError):
        raise ValueError(f"spin quantum number must be numeric, got {f!r}") from None
    if two_f.denominator != 1 or two_f < 0 or abs(float(two_f) - 2 * float(f)) > 1e-12:
        raise ValueError(f"spin quantum number must be a non-negative half-integer, got {f!r}")
    f = float(two_f) / 2
    m = f - np.arange(int(two_f) + 1)
    # <m+1|F_+|m> = sqrt(F(F+1) - m(m+1)) on the superdiagonal
    fplus = np.diag(np.sqrt(f * (f + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    fminus = fplus.conj().T
    fx = (fplus + fminus) / 2
    fy = (fplus - fminus) / 2j
    fz = np.diag(m).astype(complex)
    for a in (fx, fy, fz):
        a.setflags(write=False)
    return SpinRep(f, fx, fy, fz)


def hermitian_expm(h: np.ndarray, scale: complex = -1j) -> np.ndarray:
    """exp(scale * h) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(scale * w)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class Rotation:
    axis: np.ndarray
    angle: float
    matrix: np.ndarray = field(repr=False)

    def rotation3(self) -> np.ndarray:
        """The SO(3) matrix of the same rotation."""
        return rotation_matrix3(self.axis, self.angle)


def _unit_axis(axis) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be a unit 3-vector, got {axis}")
    return axis


def rotation_operator(rep: SpinRep, axis, angle: float) -> Rotation:
    """exp(-i angle F.axis), the spin image of the active rotation about `axis`."""
    axis = _unit_axis(axis)
    mat = hermitian_expm(rep.dot(axis) * angle)
    return Rotation(axis, float(angle), mat)


def rotation_matrix3(axis, angle: float) -> np.ndarray:
    return _Rot3.from_rotvec(np.asarray(axis, dtype=float) * angle).as_matrix()


def align_rotation(b) -> tuple[np.ndarray, float]:
    """Axis (in the x-y plane) and angle of the rotation taking b onto |b| z.

    The axis is b_hat x z normalized; for b antiparallel to z it is fixed to x.
    """
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if not nb > 0 or not np.isfinite(nb):
        raise DegenerateFieldError(f"cannot align a degenerate field vector {b}")
    bh = b / nb
    perp = np.hypot(bh[0], bh[1])
    angle = float(np.arctan2(perp, bh[2]))
    if perp < 1e-15:
        axis = np.array([1.0, 0.0, 0.0]) if bh[2] < 0 else np.array([0.0, 0.0, 1.0])
        return axis, (np.pi if bh[2] < 0 else 0.0)
    axis = np.array([bh[1], -bh[0], 0.0]) / perp
    return axis, angle


def azimuth(r) -> float:
    return float(np.arctan2(r[1], r[0]))


def eigenframe(rep: SpinRep, b, gauge=Gauge.ROTATION, *, phi: float | None = None,
               previous: np.ndarray | None = None) -> np.ndarray:
    """Columns |n>, n = F..-F, eigenvectors of F.b_hat with eigenvalue n.

    `phi` (position azimuth) is required for the cylindrical gauge, which adds
    exp(-i n phi) to the rotation construction. The smooth gauge aligns each
    column's phase with `previous` (real positive overlap); without a
    previous frame it falls back to the rotation construction.
    """
    gauge = Gauge.parse(gauge)
    axis, angle = align_rotation(b)
    frame = rotation_operator(rep, axis, -angle).matrix
    if gauge is Gauge.CYLINDRICAL:
        if phi is None:
            raise ValueError("cylindrical gauge needs the azimuth of the position")
        frame = frame * np.exp(-1j * rep.m_values * phi)
    elif gauge is Gauge.SMOOTH and previous is not None:
        frame = align_phases(frame, previous)
    return frame


def align_phases(frame: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Rephase columns of `frame` so that <previous_k|frame_k> is real positive."""
    ov = np.einsum("ij,ij->j", previous.conj(), frame)
    mag = np.abs(ov)
    phase = np.where(mag > 1e-300, ov / np.where(mag > 0, mag, 1.0), 1.0)
    return frame * phase.conj()
