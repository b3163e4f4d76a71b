"""Post-processing, the dense real-space oracle, and Green-function analysis.

The oracle assembles the discrete elastic energy directly in real space
from the two tetrahedral strain stencils and solves the stationarity
system densely (least-norm through an eigendecomposition), so it shares no
code path with the spectral solver beyond the stencil geometry.  It is the
ground truth the fixed-point solvers are validated against on small grids.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from . import tensors
from .grid import Grid
from .green import assemble_omega, strain_green_component
from .solver import tensor_dot_vec, sym_outer
from .stencils import TETRAHEDRAL, ROTATED, build_stencil

# Corner-index offsets and per-axis signs of the two tetrahedra.  Entry
# (offset, sign): strain gradient component i at voxel l sums
# sign_i * u(l + offset) over the four corners, with a 1/2 prefactor.
_T1_STENCIL = (((0, 0, 0), (1, 1, 1)),
               ((0, -1, -1), (1, -1, -1)),
               ((-1, -1, 0), (-1, -1, 1)),
               ((-1, 0, -1), (-1, 1, -1)))
_T2_STENCIL = (((-1, -1, -1), (-1, -1, -1)),
               ((-1, 0, 0), (-1, 1, 1)),
               ((0, 0, -1), (1, 1, -1)),
               ((0, -1, 0), (1, -1, 1)))

_GRID_AXES = (-4, -3, -2)


def _gradient(u, stencil):
    """Per-voxel gradient matrix G_ij = D_i[u_j] for one tetrahedron type."""
    g = np.zeros(u.shape[:-1] + (3, 3), dtype=u.dtype)
    for offset, sign in stencil:
        shifted = np.roll(u, shift=tuple(-o for o in offset), axis=_GRID_AXES)
        for i in range(3):
            if sign[i]:
                g[..., i, :] += (0.5 * sign[i]) * shifted
    return g


def _strain_from_gradient(g):
    out = np.empty(g.shape[:-2] + (6,), dtype=g.dtype)
    out[..., 0] = g[..., 0, 0]
    out[..., 1] = g[..., 1, 1]
    out[..., 2] = g[..., 2, 2]
    out[..., 3] = 0.5 * (g[..., 1, 2] + g[..., 2, 1])
    out[..., 4] = 0.5 * (g[..., 0, 2] + g[..., 2, 0])
    out[..., 5] = 0.5 * (g[..., 0, 1] + g[..., 1, 0])
    return out


def tetra_strain_pair(u):
    """Real-space fluctuating strain pair from a corner displacement field."""
    return (_strain_from_gradient(_gradient(u, _T1_STENCIL)),
            _strain_from_gradient(_gradient(u, _T2_STENCIL)))


def _stress_pair(materials, eps_bar, deps1, deps2):
    maps = [tensors.stiffness_map(C) for C in materials.stiffness]
    out = []
    for deps in (deps1, deps2):
        sig = np.empty_like(deps)
        for p, W in enumerate(maps):
            mask = materials.phase == p
            b = W @ (eps_bar - materials.eigenstrain[p])
            sig[..., mask, :] = deps[..., mask, :] @ W.T + b
        out.append(sig)
    return out


def elastic_energy(u, materials, eps_bar):
    """Discrete elastic energy of a corner displacement field (d = 1)."""
    deps1, deps2 = tetra_strain_pair(u)
    total = 0.0
    for deps in (deps1, deps2):
        e = deps + eps_bar
        for p, C in enumerate(materials.stiffness):
            mask = materials.phase == p
            x = e[mask] - materials.eigenstrain[p]
            sx = x @ tensors.stiffness_map(C).T
            total += np.sum(x * sx * tensors.VOIGT_WEIGHTS)
    return 0.25 * total


def force_density(u, materials, eps_bar):
    """Per-site force density, the energy gradient per unit cell volume.

    Vanishes at equilibrium; its root-mean-square over the corner grid
    equals the spectral residual norm of the solver (Parseval).
    """
    deps1, deps2 = tetra_strain_pair(u)
    sig1, sig2 = _stress_pair(materials, eps_bar, deps1, deps2)
    g = np.zeros(u.shape, dtype=float)
    for sig, stencil in ((sig1, _T1_STENCIL), (sig2, _T2_STENCIL)):
        for offset, sign in stencil:
            pulled = tensor_dot_vec(sig, np.asarray(sign, dtype=float))
            g += 0.5 * np.roll(pulled, shift=offset, axis=_GRID_AXES)
    return 0.5 * g


@dataclass
class OracleSolution:
    """Dense equilibrium solution with its numerical nullspace."""

    u: np.ndarray              # (n1, n2, n3, 3) corner displacements
    eps_bar: np.ndarray
    strain: np.ndarray         # averaged total strain field
    sigma: np.ndarray          # averaged stress field
    deps1: np.ndarray
    deps2: np.ndarray
    energy: float
    null_basis: np.ndarray     # (dofs, k) orthonormal nullspace of the system

    def project_out_null(self, u_field):
        """Remove the system nullspace components from a corner field."""
        x = u_field.reshape(-1)
        nb = self.null_basis[:x.size]
        return (x - nb @ (nb.T @ x)).reshape(u_field.shape)


def _mean_stress(materials, eps_bar, u):
    """Average of the two-tetrahedra stress fields; supports batched u."""
    deps1, deps2 = tetra_strain_pair(u)
    sig1, sig2 = _stress_pair(materials, eps_bar, deps1, deps2)
    return 0.5 * (sig1 + sig2).mean(axis=(-4, -3, -2))


def oracle_solve(materials, loading, max_voxels=1000):
    """Direct dense solve of the real-space equilibrium system.

    Supports applied average strain and applied average stress (the
    average strain then joins the unknowns, and the stationarity system is
    augmented with the average-stress condition).  The returned
    displacement is the least-norm solution: translation modes of both
    corner subgrids, and any extra zero-stiffness modes, carry zero
    amplitude.
    """
    grid = materials.grid
    if grid.size > max_voxels:
        raise ValueError(f"oracle limited to {max_voxels} voxels, "
                         f"got {grid.size}")
    n_u = 3 * grid.size
    stress_mode = loading.mode == "stress"
    n_dof = n_u + (6 if stress_mode else 0)
    weights = tensors.VOIGT_WEIGHTS
    u_zero = np.zeros(grid.dims + (3,))
    basis = np.eye(n_u).reshape((n_u,) + grid.dims + (3,))

    # The stationarity gradient is affine in the unknowns: stack it as
    # F(x) = A x + b and assemble A column by column, batched over the
    # displacement basis.
    A = np.zeros((n_dof, n_dof))
    b_vec = np.zeros(n_dof)

    eb0 = np.zeros(6) if stress_mode else np.asarray(loading.tensor, float)
    g0 = force_density(u_zero, materials, eb0).reshape(-1)
    b_vec[:n_u] = g0
    g_cols = force_density(basis, materials, eb0)
    A[:n_u, :n_u] = g_cols.reshape(n_u, n_u).T - g0[:, None]

    if stress_mode:
        smean0 = _mean_stress(materials, eb0, u_zero)
        b_vec[n_u:] = grid.size * weights * (smean0 - loading.tensor)
        smean_cols = _mean_stress(materials, eb0, basis)
        A[n_u:, :n_u] = (grid.size * weights * (smean_cols - smean0)).T
        for J in range(6):
            ebJ = np.zeros(6)
            ebJ[J] = 1.0
            A[:n_u, n_u + J] = force_density(u_zero, materials, ebJ).reshape(-1) - g0
            A[n_u:, n_u + J] = grid.size * weights \
                * (_mean_stress(materials, ebJ, u_zero) - smean0)

    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    cut = 1e-10 * max(w.max(), 1.0)
    keep = w > cut
    if np.any(w < -cut):
        raise ValueError("equilibrium system is not positive semi-definite; "
                         "check the material palette")
    coeff = (V[:, keep].T @ (-b_vec)) / w[keep]
    x = V[:, keep] @ coeff
    null_basis = V[:, ~keep]

    u = x[:n_u].reshape(grid.dims + (3,))
    eps_bar = x[n_u:] if stress_mode else np.asarray(loading.tensor, float)
    deps1, deps2 = tetra_strain_pair(u)
    sig1, sig2 = _stress_pair(materials, eps_bar, deps1, deps2)
    return OracleSolution(
        u=u, eps_bar=eps_bar,
        strain=0.5 * (deps1 + deps2) + eps_bar,
        sigma=0.5 * (sig1 + sig2),
        deps1=deps1, deps2=deps2,
        energy=elastic_energy(u, materials, eps_bar),
        null_basis=null_basis)


# ----------------------------------------------------------------------------
# Profiles and oscillation metrics
# ----------------------------------------------------------------------------

@dataclass
class LineProfile:
    axis: int
    at: tuple            # the two fixed transverse indices
    coords: np.ndarray
    values: np.ndarray


def extract_profile(field, axis, at):
    """Samples of a scalar voxel field along one axis at fixed transverse
    indices."""
    field = np.asarray(field)
    n = field.shape[axis]
    j, k = at
    index = [j, k]
    index.insert(axis, slice(None))
    values = field[tuple(index)]
    if values.ndim != 1:
        raise ValueError("transverse indices out of range")
    return LineProfile(axis=axis, at=(j, k), coords=np.arange(n),
                       values=np.array(values))


def oscillation_index(values, mask=None):
    """Excess total variation over the sample range, for masked samples.

    Zero for monotone data; grows with the number and amplitude of
    direction reversals.  The mask must select at least 3 samples.
    """
    values = np.asarray(values, dtype=float)
    if mask is not None:
        values = values[np.asarray(mask)]
    if values.size < 3:
        raise ValueError("oscillation index needs at least 3 samples")
    tv = np.sum(np.abs(np.diff(values)))
    rng = values.max() - values.min()
    if rng == 0.0:
        return 0.0
    return (tv - rng) / rng


# ----------------------------------------------------------------------------
# Real-space Green-function analysis
# ----------------------------------------------------------------------------

def green_q_component(scheme, lam0, grid, pair):
    """Spectral strain-Green component over the full grid for one scheme.

    Tetrahedral: real part of the sum of the diagonal and cross operators
    (the response of the averaged strain to a single polarization field).
    Rotated: the single operator component with the zero recipe on its
    undefined set.
    """
    stencil = build_stencil(grid, scheme)
    table = assemble_omega(stencil, np.asarray(lam0, dtype=float))
    if scheme == TETRAHEDRAL:
        gd = strain_green_component(table.omega, table.D, pair,
                                    conjugate_last=True)
        gnd = -strain_green_component(table.omega, table.D, pair,
                                      conjugate_last=False)
        return (gd + gnd).real
    return strain_green_component(table.omega, table.D, pair,
                                  conjugate_last=True)


def green_real_space(scheme, lam0, grid, pair):
    """Real-space Green component field G(r) = (1/N) sum_q G(q) e^{iqr}."""
    gq = green_q_component(scheme, lam0, grid, pair)
    gr = _fft.ifftn(np.asarray(gq, dtype=complex), axes=(0, 1, 2))
    return gr.real


@dataclass
class DecayFit:
    exponent: float
    residual: float
    radii: np.ndarray
    shell_max: np.ndarray


def plane_slice(field, plane="100"):
    """The lattice plane through the origin normal to a cubic axis."""
    if plane == "100":
        return np.asarray(field)[0, :, :]
    if plane == "010":
        return np.asarray(field)[:, 0, :]
    if plane == "001":
        return np.asarray(field)[:, :, 0]
    raise ValueError(f"unknown plane {plane!r}")


def radial_shell_max(plane_field):
    """Max |value| over unit-width radial shells, minimum-image distances."""
    f = np.asarray(plane_field)
    n1, n2 = f.shape
    c1 = np.minimum(np.arange(n1), n1 - np.arange(n1))[:, None]
    c2 = np.minimum(np.arange(n2), n2 - np.arange(n2))[None, :]
    rho = np.sqrt(c1 ** 2 + c2 ** 2)
    shell = rho.astype(int)
    nsh = shell.max() + 1
    out = np.zeros(nsh)
    np.maximum.at(out, shell.ravel(), np.abs(f).ravel())
    return np.arange(nsh) + 0.5, out


def fit_decay(field, plane="100", window=(4, 16)):
    """Least-squares power-law exponent of the shell-maximum envelope.

    Fits log(max |G|) against log r over shells whose integer radius lies
    in ``[window[0], window[1])``; at least 4 shells are required.
    """
    radii, shell_max = radial_shell_max(plane_slice(field, plane))
    lo, hi = window
    sel = (np.arange(radii.size) >= lo) & (np.arange(radii.size) < hi)
    sel &= shell_max > 0.0
    if sel.sum() < 4:
        raise ValueError("decay-fit window must contain at least 4 shells")
    x = np.log(radii[sel])
    y = np.log(shell_max[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(exponent=-slope, residual=resid,
                    radii=radii[sel], shell_max=shell_max[sel])


# ----------------------------------------------------------------------------
# Voigt-pair classification for the rotated-scheme singular lines
# ----------------------------------------------------------------------------

S_100 = frozenset({22, 23, 24, 33, 34, 44, 55, 56, 66})
S_010 = frozenset({11, 13, 15, 33, 35, 44, 46, 55, 66})
S_001 = frozenset({11, 12, 16, 22, 26, 44, 45, 55, 66})

INDEX_SETS = {"S_100": S_100, "S_010": S_010, "S_001": S_001}


def classify_voigt_pair(pair):
    """Names of the singular-line index sets containing a Voigt pair.

    Pairs are order-insensitive; 14, 25 and 36 belong to no set (those
    components admit the zero analytic continuation along all three
    lines).
    """
    I, J = pair
    if not (1 <= I <= 6 and 1 <= J <= 6):
        raise ValueError(f"Voigt indices must lie in 1..6, got {pair}")
    key = 10 * min(I, J) + max(I, J)
    return {name for name, s in INDEX_SETS.items() if key in s}
