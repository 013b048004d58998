from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdg.basis import (
    ElementMap, MAX_ORDER, build_reference_basis, eval_modes, eval_physical,
    evaluate_field, jacobi_table, modes, project, volume_data,
)
from fracdg.quadrature import gauss_jacobi, triangle_rule


@pytest.mark.parametrize("order", range(1, MAX_ORDER + 1))
def test_reference_orthonormal(order):
    rule = triangle_rule(2 * order)
    psi = eval_modes(order, rule.r, rule.s)
    gram = psi.T @ (rule.weights[:, None] * psi)
    assert np.allclose(gram, np.eye(len(modes(order))), atol=1e-12)


def test_jacobi_table_orthonormal():
    rule = gauss_jacobi(12, 1.5, 0.5)
    p = jacobi_table(rule.nodes, 1.5, 0.5, 8)
    gram = (p * rule.weights) @ p.T
    assert np.allclose(gram, np.eye(9), atol=1e-12)


@pytest.mark.parametrize("order", [1, 3, 5])
def test_gradients_match_finite_differences(order, rng):
    r = rng.uniform(-1, 0, 10)
    s = rng.uniform(-1, 0, 10) - 0.0
    s = np.minimum(s, -r - 0.05)
    _, dr, ds = eval_modes(order, r, s, derivatives=True)
    h = 1e-6
    fr = (eval_modes(order, r + h, s) - eval_modes(order, r - h, s)) / (2 * h)
    fs = (eval_modes(order, r, s + h) - eval_modes(order, r, s - h)) / (2 * h)
    assert np.allclose(dr, fr, atol=1e-6)
    assert np.allclose(ds, fs, atol=1e-6)


def test_gradients_at_top_vertex():
    # the collapsed coordinate is singular at s = 1 but the polynomials are not
    _, dr, ds = eval_modes(3, np.array([-1.0]), np.array([1.0]), derivatives=True)
    assert np.all(np.isfinite(dr)) and np.all(np.isfinite(ds))


def test_build_rejects_bad_order():
    with pytest.raises(ValueError):
        build_reference_basis(0)
    with pytest.raises(ValueError):
        build_reference_basis(MAX_ORDER + 1)


def test_element_map_roundtrip():
    verts = np.array([[0.2, 0.1], [1.0, 0.3], [0.4, 0.9]])
    emap = ElementMap.from_vertices(verts)
    ref = np.array([[-1, -1], [1, -1], [-1, 1]], dtype=float)
    assert np.allclose(emap.to_physical(ref[:, 0], ref[:, 1]), verts)
    assert np.allclose(emap.to_reference(verts), ref)
    with pytest.raises(ValueError):
        ElementMap.from_vertices(verts[::-1])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_projection_reproduces_polynomials(order, a, b, c):
    verts = np.array([[0.0, 0.0], [0.7, 0.1], [0.2, 0.5]])
    emap = ElementMap.from_vertices(verts)
    basis = build_reference_basis(order)
    f = lambda x, y: a + b * x ** order + c * x * y ** (order - 1)
    coef = project(emap, basis, f)
    pt = np.array([0.3, 0.2])
    val, grad = evaluate_field(emap, basis, coef, pt)
    assert val == pytest.approx(f(*pt), abs=1e-11)
    gx = b * order * pt[0] ** (order - 1) + c * pt[1] ** (order - 1)
    gy = c * pt[0] * (order - 1) * pt[1] ** (order - 2) if order > 1 else 0.0
    assert np.allclose(grad, [gx, gy], atol=1e-10)


def test_evaluate_field_outside_raises():
    emap = ElementMap.from_vertices(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        evaluate_field(emap, build_reference_basis(1), np.zeros(3), np.array([1.0, 1.0]))


def test_volume_data_mass_is_identity(unstructured100):
    basis = build_reference_basis(2)
    vd = volume_data(unstructured100, basis)
    mass = np.einsum("kq,kqa,kqb->kab", vd.weights, vd.phi, vd.phi)
    assert np.allclose(mass, np.eye(basis.np)[None], atol=1e-12)
    assert vd.weights.sum() == pytest.approx(4.0, rel=1e-12)


def test_eval_physical_matches_volume_data(square8):
    basis = build_reference_basis(2)
    vd = volume_data(square8, basis)
    phi, grad = eval_physical(square8, 2, vd.owners, vd.flat_points, derivatives=True)
    assert np.allclose(phi, vd.phi.reshape(phi.shape), atol=1e-12)
    assert np.allclose(grad, vd.grad.reshape(grad.shape), atol=1e-11)
