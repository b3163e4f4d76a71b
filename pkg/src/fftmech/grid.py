"""Periodic voxel grid, frequency enumeration and the Fourier contract.

Fields are laid out row-major over the voxel indices (l1, l2, l3) with any
tensor/vector components on a trailing axis.  The forward transform carries
the 1/N normalization; the inverse is the plain sum, so the q = 0 bin of a
forward-transformed field is its spatial mean.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft


@dataclass(frozen=True)
class Grid:
    """Periodic rectangular grid of n1 x n2 x n3 cubic voxels of edge d."""

    n1: int
    n2: int
    n3: int
    d: float = 1.0

    def __post_init__(self):
        for n in (self.n1, self.n2, self.n3):
            if n < 1:
                raise ValueError(f"voxel counts must be positive, got {self.dims}")
        if self.d <= 0.0:
            raise ValueError(f"voxel edge length must be positive, got {self.d}")

    @property
    def dims(self):
        return (self.n1, self.n2, self.n3)

    @property
    def size(self):
        return self.n1 * self.n2 * self.n3

    @property
    def all_even(self):
        return all(n % 2 == 0 for n in self.dims)

    def require_even(self, context="this scheme"):
        if not self.all_even:
            raise ValueError(f"{context} requires even voxel counts on every "
                             f"axis, got {self.dims}")

    def axis_frequencies(self, axis):
        """1-D array q = 2*pi*h/n, h = 0..n-1, for one axis."""
        n = self.dims[axis]
        return 2.0 * np.pi * np.arange(n) / n

    def frequency_vectors(self):
        """All N frequency vectors as an (N, 3) array in field layout order."""
        q1, q2, q3 = np.meshgrid(self.axis_frequencies(0),
                                 self.axis_frequencies(1),
                                 self.axis_frequencies(2), indexing='ij')
        return np.stack([q1.ravel(), q2.ravel(), q3.ravel()], axis=-1)

    def frequency_mesh(self):
        """Broadcastable per-axis frequency arrays (n1,1,1), (1,n2,1), (1,1,n3)."""
        return (self.axis_frequencies(0)[:, None, None],
                self.axis_frequencies(1)[None, :, None],
                self.axis_frequencies(2)[None, None, :])

    def check_field(self, field):
        if tuple(field.shape[:3]) != self.dims:
            raise ValueError(f"field shape {field.shape} does not match grid "
                             f"dims {self.dims}")


def forward_fft(grid, field, workers=1):
    """Discrete Fourier transform with 1/N forward normalization.

    Transforms the three leading (grid) axes; trailing component axes are
    carried along.  Output is complex.
    """
    grid.check_field(field)
    return _fft.fftn(field, axes=(0, 1, 2), workers=workers) / grid.size


def inverse_fft(grid, spectral, workers=1):
    """Inverse of :func:`forward_fft` (plain sum over frequencies)."""
    grid.check_field(spectral)
    return _fft.ifftn(spectral, axes=(0, 1, 2), workers=workers) * grid.size


def inverse_fft_real(grid, spectral, workers=1):
    """Inverse transform of a conjugate-symmetric spectrum, real part only."""
    return inverse_fft(grid, spectral, workers=workers).real
