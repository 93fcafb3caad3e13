import numpy as np
import pytest

from nvdnp.spin import (BasisIndex, Manifold, N_LEVELS, N_LEVELS_ION, basis_of, embed,
                        flat_index, spin1_ops)


def test_spin_algebra():
    s = spin1_ops()
    for op in (s.sx, s.sy, s.sz):
        assert np.allclose(op, op.conj().T)
    assert np.allclose(s.sx @ s.sy - s.sy @ s.sx, 1j * s.sz, atol=1e-12)
    assert np.allclose(s.sy @ s.sz - s.sz @ s.sy, 1j * s.sx, atol=1e-12)
    assert np.allclose(s.sz @ s.sx - s.sx @ s.sz, 1j * s.sy, atol=1e-12)
    assert np.allclose(s.sx @ s.sx + s.sy @ s.sy + s.sz @ s.sz, 2 * s.id3)
    assert np.array_equal(np.diag(s.sz).real, [1, 0, -1])
    up = np.array([1, 0, 0])
    assert np.allclose(s.sz @ up, up)


def test_ops_are_read_only():
    with pytest.raises(ValueError):
        spin1_ops().sx[0, 0] = 5


def test_flat_index_anchors():
    assert flat_index(BasisIndex(Manifold.GROUND, 1, 1)) == 0
    assert flat_index(BasisIndex(Manifold.SINGLET, None, -1)) == 20
    assert flat_index(BasisIndex(Manifold.EXCITED, 0, 1)) == 12
    assert flat_index(BasisIndex(Manifold.NV0, None, -1), N_LEVELS_ION) == 23


@pytest.mark.parametrize("dim", [N_LEVELS, N_LEVELS_ION])
def test_basis_round_trip(dim):
    for i in range(dim):
        assert flat_index(basis_of(i, dim), dim) == i
    with pytest.raises(IndexError):
        basis_of(dim, dim)


def test_nv0_needs_ionization_space():
    with pytest.raises(IndexError):
        flat_index(BasisIndex(Manifold.NV0, None, 0), N_LEVELS)


def test_invalid_basis_labels():
    with pytest.raises(ValueError):
        BasisIndex(Manifold.GROUND, 2, 0)
    with pytest.raises(ValueError):
        BasisIndex(Manifold.SINGLET, 1, 0)


def test_embed_examples():
    s = spin1_ops()
    proj = embed(s.id3, s.id3, Manifold.GROUND)
    assert proj.shape == (21, 21)
    assert np.allclose(np.diag(proj), [1] * 9 + [0] * 12)
    assert abs(np.trace(embed(s.sz, s.id3, Manifold.EXCITED))) < 1e-15
    m = embed(s.sx, s.sx, Manifold.GROUND)
    assert np.allclose(m, m.conj().T)
    assert np.allclose(embed(s.sx, s.sz, Manifold.GROUND) @ embed(s.sy, s.sx, Manifold.EXCITED), 0)


def test_embed_nuclear_only_blocks():
    s = spin1_ops()
    m = embed(s.id3, s.sz, Manifold.NV0, N_LEVELS_ION)
    assert np.allclose(np.diag(m)[21:], [1, 0, -1])
    with pytest.raises(ValueError):
        embed(s.sz, s.id3, Manifold.SINGLET)
