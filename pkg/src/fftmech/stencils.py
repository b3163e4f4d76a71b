"""Per-frequency finite-difference symbols D(q) for the two discrete schemes.

The tetrahedral scheme differentiates through the four corners of one of
the two tetrahedra inscribed in each voxel; its symbol factors into
per-axis half-angle sines/cosines,

    D_i(q) = -2 cos(q_i/2) sin(q_j/2) sin(q_k/2)
             + 2i sin(q_i/2) cos(q_j/2) cos(q_k/2),    {i,j,k} = {1,2,3},

and vanishes on the enumerated grid only at q = (0,0,0) and q = (pi,pi,pi),
both of which are pure translations of the corner subgrids.  The rotated
scheme uses the corner-based product form

    D_i(q) = (1/4) (e^{iq_i} - 1) prod_{j != i} (e^{iq_j} + 1)

(the optional common phase factor is dropped; it cancels in every
D_i conj(D_j) product the Green operators are built from).  Its symbol
vanishes whenever two components of q sit at the highest frequency pi,
which is the root of that scheme's real-space artifacts.

Tables are built once per (grid, scheme) with the zero sets exact in
floating point, so downstream masks can test literal equality with zero.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .grid import Grid

TETRAHEDRAL = "tetrahedral"
ROTATED = "rotated"

# The 8 half-lattice shift sign patterns pi*(s1, s2, s3), s_i = +/-1.
OMEGA_SIGNS = np.array(list(itertools.product((-1, 1), repeat=3)))


def shift_phase(signs):
    """Phase constant exp(-i pi (s1+s2+s3)/2) attached to a half-lattice shift."""
    signs = np.asarray(signs)
    return np.exp(-0.5j * np.pi * signs.sum(axis=-1))


def omega_vectors_in_window():
    """Members of the half-lattice shift set that lie inside [0, 2*pi)^3."""
    vec = np.pi * OMEGA_SIGNS
    inside = np.all((vec >= 0.0) & (vec < 2.0 * np.pi), axis=1)
    return vec[inside]


def tetrahedral_symbol(q):
    """Tetrahedral D(q) at arbitrary frequency vectors (..., 3) -> (..., 3)."""
    q = np.asarray(q, dtype=float)
    s = np.sin(0.5 * q)
    c = np.cos(0.5 * q)
    out = np.empty(q.shape, dtype=complex)
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        out[..., i] = (-2.0 * c[..., i] * s[..., j] * s[..., k]
                       + 2.0j * s[..., i] * c[..., j] * c[..., k])
    return out


def rotated_symbol(q):
    """Rotated-scheme D(q) at arbitrary frequency vectors (..., 3) -> (..., 3)."""
    q = np.asarray(q, dtype=float)
    e = np.exp(1j * q)
    minus = e - 1.0
    plus = e + 1.0
    out = np.empty(q.shape, dtype=complex)
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        out[..., i] = 0.25 * minus[..., i] * plus[..., j] * plus[..., k]
    return out


@dataclass(frozen=True)
class StencilTable:
    """Precomputed D(q) over the full frequency grid for one scheme.

    ``zero_mask`` is True exactly where all three components of D vanish;
    for the tetrahedral scheme that set is {(0,0,0), (pi,pi,pi)}.
    """

    scheme: str
    grid: Grid
    D: np.ndarray           # (n1, n2, n3, 3) complex
    zero_mask: np.ndarray   # (n1, n2, n3) bool

    @property
    def D_conj(self):
        return np.conj(self.D)


def _axis_half_angle(n):
    """sin and cos of q/2 along one axis, with the q = pi entry made exact."""
    q_half = np.pi * np.arange(n) / n
    s = np.sin(q_half)
    c = np.cos(q_half)
    if n % 2 == 0:
        s[n // 2] = 1.0
        c[n // 2] = 0.0
    return s, c


def _axis_exp_factors(n):
    """e^{iq} - 1 and e^{iq} + 1 along one axis, exact at q = 0 and q = pi."""
    e = np.exp(2j * np.pi * np.arange(n) / n)
    e[0] = 1.0
    if n % 2 == 0:
        e[n // 2] = -1.0
    return e - 1.0, e + 1.0


def build_stencil(grid, scheme):
    """Assemble the D(q) table for ``scheme`` on ``grid``.

    The tetrahedral scheme rejects odd voxel counts: the corner-subgrid
    split it relies on is undefined there.
    """
    if scheme == TETRAHEDRAL:
        grid.require_even("the tetrahedral scheme")
        sc = [_axis_half_angle(n) for n in grid.dims]
        shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
        s = [sc[a][0].reshape(shapes[a]) for a in range(3)]
        c = [sc[a][1].reshape(shapes[a]) for a in range(3)]
        D = np.empty(grid.dims + (3,), dtype=complex)
        for i in range(3):
            j, k = [a for a in range(3) if a != i]
            D[..., i] = -2.0 * c[i] * s[j] * s[k] + 2.0j * s[i] * c[j] * c[k]
    elif scheme == ROTATED:
        mp = [_axis_exp_factors(n) for n in grid.dims]
        shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
        minus = [mp[a][0].reshape(shapes[a]) for a in range(3)]
        plus = [mp[a][1].reshape(shapes[a]) for a in range(3)]
        D = np.empty(grid.dims + (3,), dtype=complex)
        for i in range(3):
            j, k = [a for a in range(3) if a != i]
            D[..., i] = 0.25 * minus[i] * plus[j] * plus[k]
    else:
        raise ValueError(f"unknown stencil scheme {scheme!r}")

    zero_mask = np.all(D == 0.0, axis=-1)
    return StencilTable(scheme=scheme, grid=grid, D=D, zero_mask=zero_mask)


def half_lattice_partner(grid):
    """Pair every enumerated frequency with its unique half-lattice shift.

    Returns (index_maps, signs, phase) where ``index_maps`` are the shifted
    per-axis index arrays (h_i + n_i/2 mod n_i), ``signs`` the (n1,n2,n3,3)
    sign pattern s_i = +1 where q_i < pi (the shift that stays inside the
    enumeration window), and ``phase`` the associated constant
    exp(-i pi (s1+s2+s3)/2) per frequency.
    """
    grid.require_even("the half-lattice shift pairing")
    index_maps = []
    signs = np.empty(grid.dims + (3,))
    shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
    for a, n in enumerate(grid.dims):
        h = np.arange(n)
        index_maps.append((h + n // 2) % n)
        signs[..., a] = np.where(h < n // 2, 1.0, -1.0).reshape(shapes[a])
    return index_maps, signs, shift_phase(signs)
