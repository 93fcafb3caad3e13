"""Ground, excited and singlet Hamiltonians of the NV-14N pair.

Units: MHz for energies, Gauss for fields, degrees for angles.  The field is
realized as ``B (sin theta, 0, cos theta)``; the azimuth is a gauge choice for
this axially symmetric model and is not configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin import Manifold, embed, dimension, manifold_slice, spin1_ops

# GSLAC sits near 1025 G; transition labels are only meaningful well below it.
MAX_CALIBRATION_FIELD = 900.0


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the two-spin model (MHz, MHz/G)."""

    d_g: float = 2870.0
    d_e: float = 1420.0
    q: float = -4.945
    gamma_e: float = 2.802
    gamma_n: float = -0.000308
    a_par: float = -2.162
    a_perp: float = -2.62
    c_par: float = -40.0
    c_perp: float = -23.0
    strain_e: float = 0.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.d_g <= 0 or self.d_e <= 0:
            raise ValueError("zero-field splittings must be positive")


@dataclass(frozen=True)
class FieldConfig:
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b >= 0):
            raise ValueError(f"field magnitude must be >= 0 G, got {self.b}")
        if not (math.isfinite(self.theta) and 0.0 <= self.theta <= 90.0):
            raise ValueError(f"theta must lie in [0, 90] degrees, got {self.theta}")

    @property
    def vector(self) -> tuple[float, float, float]:
        t = math.radians(self.theta)
        return (self.b * math.sin(t), 0.0, self.b * math.cos(t))


@dataclass(frozen=True)
class HamiltonianSet:
    h_total: np.ndarray
    dim: int

    def block(self, manifold: Manifold) -> np.ndarray:
        sl = manifold_slice(manifold)
        return self.h_total[sl, sl]


def _triplet_block(zfs, hf_par, hf_perp, p: SystemParams, f: FieldConfig, strain=0.0):
    ops = spin1_ops()
    sx, sy, sz, one = ops.sx, ops.sy, ops.sz, ops.id3
    bx, _, bz = f.vector
    k = np.kron
    h = zfs * k(sz @ sz, one)
    h = h + p.gamma_e * (bx * k(sx, one) + bz * k(sz, one))
    h = h + p.q * k(one, sz @ sz)
    h = h + hf_par * k(sz, sz) + hf_perp * (k(sx, sx) + k(sy, sy))
    h = h + p.gamma_n * (bx * k(one, sx) + bz * k(one, sz))
    if strain:
        h = h + strain * k(sx @ sx - sy @ sy, one)
    return h


def _nuclear_block(p: SystemParams, f: FieldConfig):
    ops = spin1_ops()
    bx, _, bz = f.vector
    return p.q * ops.sz @ ops.sz + p.gamma_n * (bx * ops.sx + bz * ops.sz)


def build_hamiltonian(p: SystemParams, f: FieldConfig, ionization: bool = False) -> HamiltonianSet:
    """Block-diagonal Hamiltonian over the full basis, in MHz.

    The NV0 block, present only with ``ionization=True``, reuses the
    nuclear-only singlet form.
    """
    dim = dimension(ionization)
    h = np.zeros((dim, dim), dtype=complex)
    h[manifold_slice(Manifold.GROUND), manifold_slice(Manifold.GROUND)] = \
        _triplet_block(p.d_g, p.a_par, p.a_perp, p, f, p.strain_e)
    h[manifold_slice(Manifold.EXCITED), manifold_slice(Manifold.EXCITED)] = \
        _triplet_block(p.d_e, p.c_par, p.c_perp, p, f)
    nuc = _nuclear_block(p, f)
    h[manifold_slice(Manifold.SINGLET), manifold_slice(Manifold.SINGLET)] = nuc
    if ionization:
        h[manifold_slice(Manifold.NV0), manifold_slice(Manifold.NV0)] = nuc
    return HamiltonianSet(h, dim)


def ground_electronic_hamiltonian(p: SystemParams, f: FieldConfig) -> np.ndarray:
    """3x3 electron-only ground Hamiltonian (hyperfine neglected)."""
    ops = spin1_ops()
    bx, _, bz = f.vector
    h = p.d_g * ops.sz @ ops.sz + p.gamma_e * (bx * ops.sx + bz * ops.sz)
    if p.strain_e:
        h = h + p.strain_e * (ops.sx @ ops.sx - ops.sy @ ops.sy)
    return h


def eslac_field(p: SystemParams) -> float:
    """Aligned field (G) at which the excited-state Zeeman shift cancels D_e."""
    if p.gamma_e <= 0:
        raise ValueError("gamma_e must be positive")
    return p.d_e / p.gamma_e


def cubic_coefficients(p: SystemParams, b: float, theta: float) -> tuple[float, float, float]:
    """Coefficients (a2, a1, a0) of the monic characteristic cubic of the ground triplet."""
    zeeman_sq = (p.gamma_e * b) ** 2
    sin_sq = math.sin(math.radians(theta)) ** 2
    return _coefficients(p.d_g, zeeman_sq, sin_sq)


def _coefficients(d, zeeman_sq, sin_sq):
    # (1 - cos 2 theta) / 2 == sin^2 theta
    return -2.0 * d, d * d - zeeman_sq, d * zeeman_sq * sin_sq


def _trig_roots(a2, a1, a0):
    shift = a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2 ** 3 / 27.0 - a2 * a1 / 3.0 + a0
    if p > 0 or 4.0 * p ** 3 + 27.0 * q ** 2 > 1e-9 * (abs(p) ** 3 + q * q + 1.0):
        raise ArithmeticError("characteristic cubic has complex roots")
    if p == 0:
        return np.full(3, -shift)
    m = 2.0 * math.sqrt(-p / 3.0)
    arg = max(-1.0, min(1.0, 3.0 * q / (p * m)))
    phi = math.acos(arg) / 3.0
    return np.array([m * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]) - shift


def _polished_roots(a2, a1, a0):
    approx = np.sort(_trig_roots(a2, a1, a0))
    gaps = [approx[1] - approx[0], min(approx[1] - approx[0], approx[2] - approx[1]),
            approx[2] - approx[1]]
    r = float(approx[int(np.argmax(gaps))])
    # Newton on the isolated root, then deflate to a quadratic
    for _ in range(8):
        f = ((r + a2) * r + a1) * r + a0
        df = (3.0 * r + 2.0 * a2) * r + a1
        if df == 0:
            break
        step = f / df
        r -= step
        if abs(step) <= 1e-15 * max(1.0, abs(r)):
            break
    if abs(r) >= 0.5 * abs(a2) and r != 0:
        # dominant root: Vieta avoids the cancellation in a2 + r
        b0 = -a0 / r
        b1 = -(a1 - b0) / r
    else:
        b1 = a2 + r
        b0 = a1 + r * b1
    half = -b1 / 2.0
    disc = half * half - b0
    if disc < 0:
        if disc < -1e-9 * max(1.0, half * half):
            raise ArithmeticError("characteristic cubic has complex roots")
        disc = 0.0
    sq = math.sqrt(disc)
    big = half + math.copysign(sq, half) if half != 0 else sq
    other = b0 / big if big != 0 else half - sq
    return np.sort(np.array([r, big, other]))


def _ground_roots(d, zeeman_sq, cos_sq):
    # Substituting lambda = d + x gives x^3 + d x^2 - b^2 x - d b^2 cos^2 = 0,
    # whose coefficients carry no cancellation; the pair near d stays accurate
    # even when b << d.
    return _polished_roots(d, -zeeman_sq, -d * zeeman_sq * cos_sq) + d


def solve_cubic(p: SystemParams, b: float, theta: float) -> np.ndarray:
    """Ascending eigenvalues (MHz) of the electron-only ground Hamiltonian.

    Closed-form trigonometric roots of the characteristic cubic, written about
    lambda = D_g, each polished so that nearly degenerate pairs keep full precision.
    """
    return _ground_roots(p.d_g, (p.gamma_e * b) ** 2, math.cos(math.radians(theta)) ** 2)


def companion_roots(p: SystemParams, b: float, theta: float) -> np.ndarray:
    """Eigenvalues of the companion matrix of the same cubic (independent check)."""
    a2, a1, a0 = cubic_coefficients(p, b, theta)
    comp = np.array([[-a2, -a1, -a0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return np.sort(np.linalg.eigvals(comp).real)


def _nu_from_roots(roots):
    return roots[2] - roots[0], roots[1] - roots[0]


def ground_transition_frequencies(p: SystemParams, f: FieldConfig) -> tuple[float, float]:
    """(nu_plus, nu_minus) of the m_s = 0 -> +1 and 0 -> -1 ground transitions, MHz.

    Below the GSLAC the lowest root is m_s = 0, the highest m_s = +1.
    """
    if f.b >= MAX_CALIBRATION_FIELD:
        raise ValueError(f"field {f.b} G too close to the GSLAC (limit {MAX_CALIBRATION_FIELD} G)")
    nu_p, nu_m = _nu_from_roots(solve_cubic(p, f.b, f.theta))
    return float(nu_p), float(nu_m)
