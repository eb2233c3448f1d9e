import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PAULI, SPIN_ONE, kron_all, singlet_projector_2e
from rpcompass.errors import InvalidMultiplicityError, LayoutError
from rpcompass.spin import (
    HilbertLayout,
    embed,
    embed_many,
    embed_spin,
    singlet_projector,
    spin_operators,
    triplet_projector,
)


def test_spin_half_matches_pauli():
    ops = spin_operators(2)
    for name, op in zip("xyz", ops):
        np.testing.assert_allclose(op, PAULI[name] / 2, atol=1e-15)


def test_spin_one_matches_explicit_matrices():
    ops = spin_operators(3)
    for name, op in zip("xyz", ops):
        np.testing.assert_allclose(op, SPIN_ONE[name], atol=1e-15)


@pytest.mark.parametrize("mult", [2, 3, 4, 5, 7])
def test_angular_momentum_algebra(mult):
    sx, sy, sz = spin_operators(mult)
    s = (mult - 1) / 2
    np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-13)
    np.testing.assert_allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-13)
    casimir = sx @ sx + sy @ sy + sz @ sz
    np.testing.assert_allclose(casimir, s * (s + 1) * np.eye(mult), atol=1e-13)
    np.testing.assert_allclose(np.diag(sz).real, s - np.arange(mult), atol=1e-15)


def test_operators_are_read_only():
    sx = spin_operators(3).sx
    with pytest.raises(ValueError):
        sx[0, 0] = 1.0


@pytest.mark.parametrize("bad", [1, 0, -2, 2.5, "3"])
def test_invalid_multiplicity(bad):
    with pytest.raises(InvalidMultiplicityError):
        spin_operators(bad)


def test_layout_validation():
    assert HilbertLayout.from_nuclei([2, 3]).dim == 24
    assert HilbertLayout.from_nuclei([]).nuclear_dim == 1
    with pytest.raises(LayoutError):
        HilbertLayout((3, 2))
    with pytest.raises(LayoutError):
        HilbertLayout((2, 2, 1))


def test_embed_matches_explicit_kron():
    layout = HilbertLayout.from_nuclei([3, 2])
    op = SPIN_ONE["y"]
    expected = kron_all(np.eye(2), np.eye(2), op, np.eye(2))
    np.testing.assert_allclose(embed(op, 2, layout), expected)
    sx, sy, sz = embed_spin(1, layout)
    np.testing.assert_allclose(sz, kron_all(np.eye(2), PAULI["z"] / 2, np.eye(3), np.eye(2)))
    with pytest.raises(LayoutError):
        embed(op, 3, layout)
    with pytest.raises(LayoutError):
        embed(op, 4, layout)


def test_embed_many_is_product():
    layout = HilbertLayout.from_nuclei([3])
    a, b = PAULI["x"] / 2, SPIN_ONE["z"]
    np.testing.assert_allclose(embed_many({0: a, 2: b}, layout), embed(a, 0, layout) @ embed(b, 2, layout))


def test_singlet_projector():
    layout = HilbertLayout.from_nuclei([2, 3])
    qs = singlet_projector(layout)
    np.testing.assert_allclose(qs, singlet_projector_2e(6))
    np.testing.assert_allclose(qs @ qs, qs, atol=1e-15)
    assert np.trace(qs).real == pytest.approx(6)
    np.testing.assert_allclose(qs + triplet_projector(layout), np.eye(24), atol=1e-15)
    # S_total^2 vanishes on the singlet
    s = [embed_spin(0, layout)[i] + embed_spin(1, layout)[i] for i in range(3)]
    s2 = sum(x @ x for x in s)
    np.testing.assert_allclose(s2 @ qs, np.zeros_like(qs), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=0, max_size=3), st.data())
def test_embedded_operators_commute_across_sites(mults, data):
    layout = HilbertLayout.from_nuclei(mults)
    i = data.draw(st.integers(0, len(layout.dims) - 1))
    j = data.draw(st.integers(0, len(layout.dims) - 1).filter(lambda x: x != i))
    a = embed_spin(i, layout)[data.draw(st.integers(0, 2))]
    b = embed_spin(j, layout)[data.draw(st.integers(0, 2))]
    np.testing.assert_allclose(a @ b, b @ a, atol=1e-14)
    assert a.shape == (layout.dim, layout.dim)
