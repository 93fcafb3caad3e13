"""Spin-1 operators and the ordered composite basis of the NV-14N model.

Basis ordering (fixed everywhere in the package)::

    0..8    ground   |m_s, m_i>, m_s = +1, 0, -1 outer, m_i = +1, 0, -1 inner
    9..17   excited  same ordering
    18..20  singlet  |m_i>, m_i = +1, 0, -1
    21..23  NV0      |m_i> (only when ionization is enabled)

The seven-level labels of the usual NV level scheme map onto this as
level 1/2/3 = ground m_s = 0/+1/-1, level 4/5/6 = excited m_s = 0/+1/-1,
level 7 = singlet.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

M_VALUES = (1, 0, -1)
N_LEVELS = 21
N_LEVELS_ION = 24


class Manifold(enum.Enum):
    GROUND = "ground"
    EXCITED = "excited"
    SINGLET = "singlet"
    NV0 = "nv0"


_OFFSET = {Manifold.GROUND: 0, Manifold.EXCITED: 9, Manifold.SINGLET: 18, Manifold.NV0: 21}
_TRIPLETS = (Manifold.GROUND, Manifold.EXCITED)


@dataclass(frozen=True)
class SpinOps:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    id3: np.ndarray


@lru_cache(maxsize=1)
def spin1_ops() -> SpinOps:
    """Dimensionless spin-1 matrices in the m = +1, 0, -1 basis."""
    r = 1.0 / np.sqrt(2.0)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    for m in (sx, sy, sz):
        m.flags.writeable = False
    id3 = np.eye(3, dtype=complex)
    id3.flags.writeable = False
    return SpinOps(sx, sy, sz, id3)


@dataclass(frozen=True)
class BasisIndex:
    manifold: Manifold
    m_s: int | None
    m_i: int

    def __post_init__(self):
        if self.m_i not in M_VALUES:
            raise ValueError(f"m_i must be one of {M_VALUES}, got {self.m_i}")
        if self.manifold in _TRIPLETS:
            if self.m_s not in M_VALUES:
                raise ValueError(f"m_s must be one of {M_VALUES} in {self.manifold.value}")
        elif self.m_s is not None:
            raise ValueError(f"{self.manifold.value} states carry no m_s")


def dimension(ionization: bool = False) -> int:
    return N_LEVELS_ION if ionization else N_LEVELS


def flat_index(b: BasisIndex, dim: int = N_LEVELS) -> int:
    """Position of ``b`` in the ordered basis of size ``dim`` (21 or 24)."""
    if dim not in (N_LEVELS, N_LEVELS_ION):
        raise ValueError(f"state-space size must be 21 or 24, got {dim}")
    if b.manifold is Manifold.NV0 and dim != N_LEVELS_ION:
        raise IndexError("NV0 states exist only in the 24-level space")
    k = 1 - b.m_i
    if b.manifold in _TRIPLETS:
        k += 3 * (1 - b.m_s)
    return _OFFSET[b.manifold] + k


def basis_of(i: int, dim: int = N_LEVELS) -> BasisIndex:
    """Inverse of :func:`flat_index`."""
    if dim not in (N_LEVELS, N_LEVELS_ION):
        raise ValueError(f"state-space size must be 21 or 24, got {dim}")
    if not 0 <= i < dim:
        raise IndexError(f"index {i} outside 0..{dim - 1}")
    if i < 18:
        manifold = Manifold.GROUND if i < 9 else Manifold.EXCITED
        k = i - _OFFSET[manifold]
        return BasisIndex(manifold, M_VALUES[k // 3], M_VALUES[k % 3])
    manifold = Manifold.SINGLET if i < 21 else Manifold.NV0
    return BasisIndex(manifold, None, M_VALUES[i - _OFFSET[manifold]])


def index(manifold: Manifold, m_s: int | None, m_i: int, dim: int = N_LEVELS) -> int:
    return flat_index(BasisIndex(manifold, m_s, m_i), dim)


def manifold_slice(manifold: Manifold) -> slice:
    start = _OFFSET[manifold]
    return slice(start, start + (9 if manifold in _TRIPLETS else 3))


def embed(op_electron: np.ndarray, op_nucleus: np.ndarray, manifold: Manifold,
          dim: int = N_LEVELS) -> np.ndarray:
    """Place ``op_electron (x) op_nucleus`` in the diagonal block of ``manifold``.

    Singlet and NV0 have no electronic spin; there the electronic factor must
    be the identity and only the nuclear operator is embedded.
    """
    if dim not in (N_LEVELS, N_LEVELS_ION):
        raise ValueError(f"state-space size must be 21 or 24, got {dim}")
    if manifold is Manifold.NV0 and dim != N_LEVELS_ION:
        raise IndexError("NV0 block requires the 24-level space")
    out = np.zeros((dim, dim), dtype=complex)
    sl = manifold_slice(manifold)
    if manifold in _TRIPLETS:
        out[sl, sl] = np.kron(op_electron, op_nucleus)
    else:
        if not np.allclose(op_electron, np.eye(3)):
            raise ValueError(f"{manifold.value} block accepts nuclear-only operators")
        out[sl, sl] = op_nucleus
    return out
