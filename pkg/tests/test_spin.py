import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from arfp_berry.spin import (
    DegenerateFieldError,
    Gauge,
    align_phases,
    align_rotation,
    eigenframe,
    hermitian_expm,
    rotation_matrix3,
    rotation_operator,
    spin_matrices,
)

TOL = 1e-12

two_f = st.integers(min_value=1, max_value=8)
unit = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
vec3 = st.tuples(unit, unit, unit).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(two_f)
def test_commutators_and_casimir(tf):
    rep = spin_matrices(tf / 2)
    f = tf / 2
    fx, fy, fz = rep.fx, rep.fy, rep.fz
    np.testing.assert_allclose(fx @ fy - fy @ fx, 1j * fz, atol=TOL)
    np.testing.assert_allclose(fy @ fz - fz @ fy, 1j * fx, atol=TOL)
    np.testing.assert_allclose(fz @ fx - fx @ fz, 1j * fy, atol=TOL)
    casimir = fx @ fx + fy @ fy + fz @ fz
    np.testing.assert_allclose(casimir, f * (f + 1) * np.eye(rep.dim), atol=1e-11)


def test_basis_order_and_ladder():
    rep = spin_matrices(1)
    np.testing.assert_allclose(rep.m_values, [1, 0, -1])
    # F+ |0> = sqrt(2) |1>
    np.testing.assert_allclose(rep.fplus @ rep.basis(0), math.sqrt(2) * rep.basis(1))
    assert rep.index(-1) == 2


def test_spin_half_is_pauli_over_two():
    rep = spin_matrices(0.5)
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1, -1])
    for a, s in zip((rep.fx, rep.fy, rep.fz), (sx, sy, sz)):
        np.testing.assert_allclose(a, s / 2, atol=TOL)


@pytest.mark.parametrize("bad", [-1, 0.3, "one", None])
def test_invalid_spin_rejected(bad):
    with pytest.raises(ValueError):
        spin_matrices(bad)


def test_invalid_projection_rejected():
    with pytest.raises(ValueError):
        spin_matrices(1).basis(0.5)


@settings(max_examples=30)
@given(st.integers(2, 6), st.floats(-3, 3))
def test_hermitian_expm_matches_scipy(dim, scale):
    rng = np.random.default_rng(dim)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = a + a.conj().T
    np.testing.assert_allclose(hermitian_expm(h, -1j * scale), scipy.linalg.expm(-1j * scale * h),
                               atol=1e-10)


@settings(max_examples=40)
@given(vec3, st.floats(-2 * math.pi, 2 * math.pi), two_f)
def test_rotation_operator_is_spin_image_of_so3(axis, angle, tf):
    axis = axis / np.linalg.norm(axis)
    rep = spin_matrices(tf / 2)
    u = rotation_operator(rep, axis, angle).matrix
    np.testing.assert_allclose(u @ u.conj().T, np.eye(rep.dim), atol=1e-11)
    r3 = rotation_matrix3(axis, angle)
    v = np.array([0.3, -0.7, 0.2])
    # U (F.v) U^dagger = F.(R v) for U = exp(-i angle F.n)
    np.testing.assert_allclose(u @ rep.dot(v) @ u.conj().T, rep.dot(r3 @ v), atol=1e-10)


def test_spin_half_rotation_closed_form():
    rep = spin_matrices(0.5)
    n = np.array([1.0, 2.0, -2.0]) / 3.0
    a = 0.9
    sig = 2 * rep.dot(n)
    expect = math.cos(a / 2) * np.eye(2) - 1j * math.sin(a / 2) * sig
    np.testing.assert_allclose(rotation_operator(rep, n, a).matrix, expect, atol=TOL)


def test_rotation_axis_must_be_unit():
    with pytest.raises(ValueError):
        rotation_operator(spin_matrices(1), [1.0, 1.0, 0.0], 0.1)


@given(vec3)
def test_align_rotation_maps_field_onto_z(b):
    axis, angle = align_rotation(b)
    if 0 < angle < math.pi:
        assert abs(axis[2]) < 1e-15
    np.testing.assert_allclose(rotation_matrix3(axis, angle) @ b, [0, 0, np.linalg.norm(b)],
                               atol=1e-12)


def test_align_rotation_special_directions():
    axis, angle = align_rotation([0, 0, -2.0])
    np.testing.assert_allclose(axis, [1, 0, 0])
    assert angle == pytest.approx(math.pi)
    _, angle = align_rotation([0, 0, 5.0])
    assert angle == 0.0
    with pytest.raises(DegenerateFieldError):
        align_rotation([0.0, 0.0, 0.0])


@settings(max_examples=40)
@given(vec3, two_f, st.floats(-math.pi, math.pi))
def test_eigenframe_columns_are_eigenvectors(b, tf, phi):
    rep = spin_matrices(tf / 2)
    bh = b / np.linalg.norm(b)
    for gauge in (Gauge.ROTATION, Gauge.CYLINDRICAL):
        frame = eigenframe(rep, b, gauge, phi=phi)
        np.testing.assert_allclose(frame.conj().T @ frame, np.eye(rep.dim), atol=1e-11)
        np.testing.assert_allclose(rep.dot(bh) @ frame, frame * rep.m_values, atol=1e-10)


def test_cylindrical_gauge_phases():
    rep = spin_matrices(1)
    b = np.array([0.3, 0.4, 0.5])
    rot = eigenframe(rep, b, Gauge.ROTATION)
    cyl = eigenframe(rep, b, Gauge.CYLINDRICAL, phi=0.7)
    np.testing.assert_allclose(cyl, rot * np.exp(-1j * rep.m_values * 0.7), atol=TOL)
    with pytest.raises(ValueError):
        eigenframe(rep, b, Gauge.CYLINDRICAL)


def test_smooth_gauge_aligns_with_previous():
    rep = spin_matrices(1.5)
    prev = eigenframe(rep, [0.1, 0.2, 1.0]) * np.exp(1j * np.array([0.3, -1.0, 2.0, 0.5]))
    new = eigenframe(rep, [0.11, 0.2, 1.0], Gauge.SMOOTH, previous=prev)
    ov = np.einsum("ij,ij->j", prev.conj(), new)
    np.testing.assert_allclose(ov.imag, 0, atol=TOL)
    assert np.all(ov.real > 0.99)
    np.testing.assert_allclose(align_phases(new, new), new, atol=TOL)


def test_gauge_parse():
    assert Gauge.parse("smooth") is Gauge.SMOOTH
    assert Gauge.parse("smooth-numeric") is Gauge.SMOOTH
    assert Gauge.parse(Gauge.ROTATION) is Gauge.ROTATION
    with pytest.raises(ValueError):
        Gauge.parse("coulomb")
