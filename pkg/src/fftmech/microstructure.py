"""Phase geometries and per-voxel material assignment.

Microstructures are stored as a phase-id voxel map plus a small per-phase
palette of stiffnesses and eigenstrains; phase 0 is the matrix by
convention.  A dense per-voxel stiffness field is available as an escape
hatch for fully heterogeneous input.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensors
from .grid import Grid


@dataclass(frozen=True)
class MaterialFields:
    """Per-voxel phase ids with per-phase stiffness and eigenstrain."""

    grid: Grid
    phase: np.ndarray                 # (n1, n2, n3) small ints
    stiffness: tuple                  # one (6, 6) array per phase, MPa
    eigenstrain: tuple = field(default=None)  # one (6,) array per phase

    def __post_init__(self):
        if tuple(self.phase.shape) != self.grid.dims:
            raise ValueError("phase map shape does not match grid")
        nph = len(self.stiffness)
        if self.phase.min() < 0 or self.phase.max() >= nph:
            raise ValueError("phase map contains ids outside the palette")
        if self.eigenstrain is None:
            object.__setattr__(self, 'eigenstrain',
                               tuple(np.zeros(6) for _ in range(nph)))
        if len(self.eigenstrain) != nph:
            raise ValueError("eigenstrain palette length does not match "
                             "stiffness palette")

    @property
    def n_phases(self):
        return len(self.stiffness)

    def volume_fractions(self):
        counts = np.bincount(self.phase.ravel(), minlength=self.n_phases)
        return counts / self.grid.size

    def mean_stiffness(self):
        """<lambda(r)> as a 6x6 Voigt matrix."""
        f = self.volume_fractions()
        return sum(fp * Cp for fp, Cp in zip(f, self.stiffness))

    def mean_eigenstress(self):
        """<lambda(r) : eps0(r)> as a 6-component tensor."""
        f = self.volume_fractions()
        return sum(fp * tensors.double_contract_42(Cp, e0)
                   for fp, Cp, e0 in zip(f, self.stiffness, self.eigenstrain))

    def stiffness_field(self):
        """Dense per-voxel (n1, n2, n3, 6, 6) stiffness array."""
        palette = np.stack(self.stiffness)
        return palette[self.phase]

    def eigenstrain_field(self):
        """Dense per-voxel (n1, n2, n3, 6) eigenstrain array."""
        palette = np.stack(self.eigenstrain)
        return palette[self.phase]


def homogeneous(grid, C, eps0=None):
    """Single-phase material over the whole grid."""
    e0 = np.zeros(6) if eps0 is None else np.asarray(eps0, dtype=float)
    return MaterialFields(grid=grid,
                          phase=np.zeros(grid.dims, dtype=np.uint8),
                          stiffness=(np.asarray(C, dtype=float),),
                          eigenstrain=(e0,))


def two_phase(grid, inclusion_mask, matrix, inclusion,
              eps0_matrix=None, eps0_inclusion=None):
    """Matrix (phase 0) plus inclusion (phase 1) from a boolean mask."""
    if tuple(inclusion_mask.shape) != grid.dims:
        raise ValueError("inclusion mask shape does not match grid")
    zeros = np.zeros(6)
    return MaterialFields(
        grid=grid,
        phase=inclusion_mask.astype(np.uint8),
        stiffness=(np.asarray(matrix, dtype=float),
                   np.asarray(inclusion, dtype=float)),
        eigenstrain=(zeros if eps0_matrix is None else np.asarray(eps0_matrix, dtype=float),
                     zeros if eps0_inclusion is None else np.asarray(eps0_inclusion, dtype=float)),
    )


def assign_eigenstrain(fields, phase_id, eps0):
    """Return a copy of ``fields`` with the eigenstrain of one phase replaced."""
    if not 0 <= phase_id < fields.n_phases:
        raise ValueError(f"unknown phase id {phase_id}")
    palette = list(fields.eigenstrain)
    palette[phase_id] = np.asarray(eps0, dtype=float)
    return replace(fields, eigenstrain=tuple(palette))


# ----------------------------------------------------------------------------
# Geometry generators
# ----------------------------------------------------------------------------

def cube_start_indices(grid, edge):
    """Lower corner of the centered cube: floor((n - e)/2) per axis."""
    return tuple((n - edge) // 2 for n in grid.dims)


def centered_cube_mask(grid, edge):
    """Axis-aligned cube of exactly edge^3 voxels centered in the box.

    An odd edge in an even box cannot sit exactly at the geometric center;
    the cube occupies [floor((n-e)/2), floor((n-e)/2) + e) per axis, which
    is inversion-symmetric about the voxel-center lattice point nearest the
    box center.
    """
    if edge < 0:
        raise ValueError("cube edge must be non-negative")
    if edge > min(grid.dims):
        raise ValueError(f"cube edge {edge} exceeds grid dims {grid.dims}")
    mask = np.zeros(grid.dims, dtype=bool)
    if edge == 0:
        return mask
    s = cube_start_indices(grid, edge)
    mask[s[0]:s[0] + edge, s[1]:s[1] + edge, s[2]:s[2] + edge] = True
    return mask


def centered_sphere_mask(grid, radius):
    """Voxels whose centers lie strictly within ``radius`` of the box center."""
    if radius < 0:
        raise ValueError("sphere radius must be non-negative")
    center = [(n - 1) / 2.0 for n in grid.dims]
    x = (np.arange(grid.n1) - center[0])[:, None, None]
    y = (np.arange(grid.n2) - center[1])[None, :, None]
    z = (np.arange(grid.n3) - center[2])[None, None, :]
    return x * x + y * y + z * z < radius * radius
