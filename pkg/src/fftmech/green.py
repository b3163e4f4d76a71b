"""Per-frequency Green tables for the three schemes.

For the stencil schemes the displacement Green function Omega(q) is the
3x3 inverse of the acoustic matrix assembled from D(q) and the reference
stiffness:

    tetrahedral:  Omega^-1 = conj(D).lam0.D + D.lam0.conj(D)   (real, symmetric)
    rotated:      Omega^-1 = conj(D).lam0.D                    (Hermitian)

Omega is set to exact zero wherever D(q) vanishes: at q = 0 for every
scheme, additionally at q = (pi,pi,pi) for the tetrahedral stencil (a pure
subgrid translation) and on the two-component-Nyquist lines for the
rotated scheme (the Willot zero recipe).  The strain-level operators
Gamma(q), G^d(q), G^nd(q) are derived products of D and Omega.

The Moulinec-Suquet baseline does not go through a displacement stencil;
it uses the classical continuum operator of an isotropic reference medium
with the inverse-stiffness replacement at Nyquist-bearing frequencies.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from . import tensors
from .grid import Grid
from .stencils import (StencilTable, TETRAHEDRAL, ROTATED, build_stencil,
                       tetrahedral_symbol, rotated_symbol)

# Relative determinant threshold below which a 3x3 acoustic matrix is
# treated as singular; tripping it anywhere off the documented zero set
# signals an invalid reference stiffness.
_SINGULARITY_RTOL = 1e-12


@dataclass
class GreenTable:
    """Omega(q) plus optional strain-level operator tables for one scheme."""

    scheme: str
    grid: Grid
    lam0: np.ndarray               # (6, 6) reference stiffness
    stencil: StencilTable
    omega: np.ndarray              # (n1, n2, n3, 3, 3), real for tetrahedral
    gamma: np.ndarray = field(default=None)    # (..., 3, 3, 3) complex
    g_diag: np.ndarray = field(default=None)   # (..., 3, 3, 3, 3) complex
    g_cross: np.ndarray = field(default=None)  # (..., 3, 3, 3, 3) complex

    @property
    def D(self):
        return self.stencil.D


def _invert_3x3_fields(K, invertible, context):
    """Adjugate inverse of a field of 3x3 matrices on ``invertible`` points.

    Entries outside ``invertible`` are returned as exact zeros.  A
    determinant below the relative singularity threshold at an invertible
    point raises, since that can only come from an invalid reference
    stiffness.
    """
    a, b, c = K[..., 0, 0], K[..., 0, 1], K[..., 0, 2]
    d, e, f = K[..., 1, 0], K[..., 1, 1], K[..., 1, 2]
    g, h, i = K[..., 2, 0], K[..., 2, 1], K[..., 2, 2]
    A = e * i - f * h
    B = -(d * i - f * g)
    C = d * h - e * g
    det = a * A + b * B + c * C

    norm = np.sqrt(np.sum(np.abs(K) ** 2, axis=(-2, -1)))
    bad = invertible & (np.abs(det) <= (_SINGULARITY_RTOL * norm) ** 3)
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0])
        raise ValueError(f"singular acoustic matrix at grid frequency index "
                         f"{idx} while assembling {context}; the reference "
                         f"stiffness is not valid")

    det_safe = np.where(invertible, det, 1.0)
    inv = np.empty_like(K)
    inv[..., 0, 0] = A
    inv[..., 1, 0] = B
    inv[..., 2, 0] = C
    inv[..., 0, 1] = -(b * i - c * h)
    inv[..., 1, 1] = a * i - c * g
    inv[..., 2, 1] = -(a * h - b * g)
    inv[..., 0, 2] = b * f - c * e
    inv[..., 1, 2] = -(a * f - c * d)
    inv[..., 2, 2] = a * e - b * d
    inv /= det_safe[..., None, None]
    inv[~invertible] = 0.0
    return inv


def acoustic_matrix(scheme, lam0, D):
    """Omega(q)^-1 from the stencil symbol and the reference stiffness."""
    lam_full = tensors.voigt4_to_full(np.asarray(lam0, dtype=float))
    M = np.einsum('ijkl,...j,...k->...il', lam_full, np.conj(D), D,
                  optimize=True)
    if scheme == TETRAHEDRAL:
        K = M + np.conj(M)
        # The two terms are elementwise conjugates, so K is real by
        # construction; keep a guard against an asymmetric lam0 slipping in.
        imag_max = np.abs(K.imag).max()
        if imag_max > 1e-12 * max(np.abs(K.real).max(), 1.0):
            raise ValueError("tetrahedral acoustic matrix is not real; "
                             "reference stiffness lacks major symmetry")
        return K.real
    if scheme == ROTATED:
        return M
    raise ValueError(f"unknown scheme {scheme!r}")


def assemble_omega(stencil, lam0):
    """Build the displacement Green table Omega(q) for a stencil scheme."""
    lam0 = np.asarray(lam0, dtype=float)
    tensors.check_positive_definite(lam0)
    K = acoustic_matrix(stencil.scheme, lam0, stencil.D)
    omega = _invert_3x3_fields(K, ~stencil.zero_mask,
                               f"the {stencil.scheme} Green table")
    return GreenTable(scheme=stencil.scheme, grid=stencil.grid, lam0=lam0,
                      stencil=stencil, omega=omega)


def assemble_gamma(table):
    """Populate the third-order strain operator Gamma_ijk = (D_i O_jk + D_j O_ik)/2."""
    D = table.D
    omega = table.omega
    gamma = 0.5 * (np.einsum('...i,...jk->...ijk', D, omega)
                   + np.einsum('...j,...ik->...ijk', D, omega))
    table.gamma = gamma
    return table


def assemble_strain_green(table):
    """Populate the fourth-order pair (G^d, G^nd) used by the two-table update."""
    D = table.D
    Dc = np.conj(D)
    omega = table.omega
    t_dd = np.einsum('...i,...jk,...l->...ijkl', D, omega, Dc)
    g_diag = 0.25 * (t_dd
                     + np.einsum('...ijkl->...jikl', t_dd)
                     + np.einsum('...ijkl->...ijlk', t_dd)
                     + np.einsum('...ijkl->...jilk', t_dd))
    t_nn = np.einsum('...i,...jk,...l->...ijkl', D, omega, D)
    g_cross = -0.25 * (t_nn
                       + np.einsum('...ijkl->...jikl', t_nn)
                       + np.einsum('...ijkl->...ijlk', t_nn)
                       + np.einsum('...ijkl->...jilk', t_nn))
    table.g_diag = g_diag
    table.g_cross = g_cross
    return table


def strain_green_component(omega, D, pair, conjugate_last=True):
    """One Voigt-pair component of the fourth-order strain Green operator.

    ``pair`` is a 1-based Voigt pair such as (2, 4); ``conjugate_last``
    selects the conj(D_l)/conj(D_k) form (G^d and the rotated G) versus the
    unconjugated form whose negative is G^nd.
    """
    I, J = pair
    i, j = tensors.VOIGT_PAIRS[I - 1]
    k, l = tensors.VOIGT_PAIRS[J - 1]
    Dl = np.conj(D) if conjugate_last else D
    comp = 0.25 * (D[..., i] * omega[..., j, k] * Dl[..., l]
                   + D[..., j] * omega[..., i, k] * Dl[..., l]
                   + D[..., i] * omega[..., j, l] * Dl[..., k]
                   + D[..., j] * omega[..., i, l] * Dl[..., k])
    return comp


def strain_green_probe(scheme, lam0, q_points, pair):
    """Strain Green component at arbitrary (off-grid) frequency vectors.

    For the tetrahedral scheme this is the real part of G^d + G^nd, the
    operator that maps a single polarization field to the averaged strain;
    for the rotated scheme it is the single G component.
    """
    q_points = np.atleast_2d(np.asarray(q_points, dtype=float))
    if scheme == TETRAHEDRAL:
        D = tetrahedral_symbol(q_points)
    elif scheme == ROTATED:
        D = rotated_symbol(q_points)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    K = acoustic_matrix(scheme, np.asarray(lam0, dtype=float), D)
    omega = np.linalg.inv(K)
    if scheme == TETRAHEDRAL:
        gd = strain_green_component(omega, D, pair, conjugate_last=True)
        gnd = -strain_green_component(omega, D, pair, conjugate_last=False)
        return (gd + gnd).real
    return strain_green_component(omega, D, pair, conjugate_last=True)


# ----------------------------------------------------------------------------
# Moulinec-Suquet continuum operator
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MSTables:
    """Signed frequencies, Nyquist mask and scalars for the continuum operator."""

    grid: Grid
    lam0: np.ndarray
    mu0: float
    coeff: float                 # (lam_lame0 + mu0) / (mu0 (lam_lame0 + 2 mu0))
    xi: tuple                    # broadcastable signed per-axis frequencies
    xi_sq: np.ndarray            # |xi|^2 with the origin patched to 1
    nyquist_mask: np.ndarray     # True where some q_i sits at pi on an even axis
    compliance: np.ndarray       # (6, 6) tensor-component stress -> strain map


def build_ms_tables(grid, lam0):
    """Prepare the classical isotropic Gamma0 application on ``grid``."""
    lam0 = np.asarray(lam0, dtype=float)
    if not tensors.is_isotropic(lam0):
        raise ValueError("the Moulinec-Suquet scheme requires an isotropic "
                         "reference stiffness")
    tensors.check_positive_definite(lam0)
    k0, mu0 = tensors.iso_moduli(lam0)
    lame0 = k0 - 2.0 * mu0 / 3.0
    coeff = (lame0 + mu0) / (mu0 * (lame0 + 2.0 * mu0))

    shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
    xi = tuple((2.0 * np.pi * _fft.fftfreq(n)).reshape(shapes[a])
               for a, n in enumerate(grid.dims))
    xi_sq = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    xi_sq[0, 0, 0] = 1.0

    nyq = np.zeros(grid.dims, dtype=bool)
    for a, n in enumerate(grid.dims):
        if n % 2 == 0:
            h = np.arange(n).reshape(shapes[a])
            nyq |= np.broadcast_to(h == n // 2, grid.dims)

    return MSTables(grid=grid, lam0=lam0, mu0=mu0, coeff=coeff, xi=xi,
                    xi_sq=xi_sq, nyquist_mask=nyq,
                    compliance=tensors.compliance_map(lam0))


def ms_apply(tables, sigma_q):
    """Gamma0 : sigma in q-space, with the Nyquist replacement and zero mean."""
    x1, x2, x3 = tables.xi
    c = sigma_q
    t1 = c[..., 0] * x1 + c[..., 5] * x2 + c[..., 4] * x3
    t2 = c[..., 5] * x1 + c[..., 1] * x2 + c[..., 3] * x3
    t3 = c[..., 4] * x1 + c[..., 3] * x2 + c[..., 2] * x3
    s = t1 * x1 + t2 * x2 + t3 * x3

    inv_q2 = 1.0 / (2.0 * tables.mu0 * tables.xi_sq)
    proj = tables.coeff * s / tables.xi_sq ** 2

    out = np.empty_like(sigma_q)
    out[..., 0] = 2.0 * x1 * t1 * inv_q2 - proj * x1 * x1
    out[..., 1] = 2.0 * x2 * t2 * inv_q2 - proj * x2 * x2
    out[..., 2] = 2.0 * x3 * t3 * inv_q2 - proj * x3 * x3
    out[..., 3] = (x3 * t2 + x2 * t3) * inv_q2 - proj * x2 * x3
    out[..., 4] = (x3 * t1 + x1 * t3) * inv_q2 - proj * x1 * x3
    out[..., 5] = (x2 * t1 + x1 * t2) * inv_q2 - proj * x1 * x2

    out[tables.nyquist_mask] = np.einsum(
        'IJ,...J->...I', tables.compliance, sigma_q[tables.nyquist_mask])
    out[0, 0, 0] = 0.0
    return out


def ms_gamma0(lam0, q):
    """Continuum Green operator entry at a single frequency vector.

    Returns the full (3, 3, 3, 3) real tensor: zero at q = 0, the inverse
    reference stiffness wherever some component sits at the highest
    frequency pi, and the classical isotropic projector form elsewhere
    (evaluated on the signed principal frequency).
    """
    lam0 = np.asarray(lam0, dtype=float)
    if not tensors.is_isotropic(lam0):
        raise ValueError("the Moulinec-Suquet operator requires an isotropic "
                         "reference stiffness")
    q = np.asarray(q, dtype=float)
    if np.allclose(q, 0.0, atol=1e-15):
        return np.zeros((3, 3, 3, 3))
    if np.any(np.abs(q - np.pi) < 1e-12):
        return _map66_to_full(tensors.compliance_map(lam0))

    xi = np.where(q > np.pi, q - 2.0 * np.pi, q)
    n = xi / np.linalg.norm(xi)
    k0, mu0 = tensors.iso_moduli(lam0)
    lame0 = k0 - 2.0 * mu0 / 3.0
    coeff = (lame0 + mu0) / (mu0 * (lame0 + 2.0 * mu0))
    eye = np.eye(3)
    g = (np.einsum('ki,h,j->khij', eye, n, n)
         + np.einsum('hi,k,j->khij', eye, n, n)
         + np.einsum('kj,h,i->khij', eye, n, n)
         + np.einsum('hj,k,i->khij', eye, n, n)) / (4.0 * mu0)
    g -= coeff * np.einsum('k,h,i,j->khij', n, n, n, n)
    return g


def _map66_to_full(M):
    """Expand a 6x6 tensor-component map into the full 3x3x3x3 tensor."""
    full = np.empty((3, 3, 3, 3))
    for I, (i, j) in enumerate(tensors.VOIGT_PAIRS):
        for J, (k, l) in enumerate(tensors.VOIGT_PAIRS):
            v = M[I, J] / tensors.VOIGT_WEIGHTS[J]
            full[i, j, k, l] = v
            full[j, i, k, l] = v
            full[i, j, l, k] = v
            full[j, i, l, k] = v
    return full


# ----------------------------------------------------------------------------
# Reference-medium presets
# ----------------------------------------------------------------------------

def reference_medium(rule, materials=None):
    """Resolve a reference-stiffness rule into a 6x6 matrix.

    ``rule`` is a mapping with a ``type`` key:

    - ``{"type": "scale_matrix", "alpha": a}``: a * stiffness of phase 0
    - ``{"type": "mean_phases"}``: arithmetic mean of the two phase stiffnesses
    - ``{"type": "bulk_interp", "alpha": a}``: isotropic medium with the
      matrix Poisson ratio and bulk modulus a*k_matrix + (1-a)*k_inclusion
    - ``{"type": "explicit", "C": 6x6}``: given directly
    """
    kind = rule["type"]
    if kind == "explicit":
        return np.asarray(rule["C"], dtype=float)
    if materials is None:
        raise ValueError(f"reference rule {kind!r} needs material fields")
    if kind == "scale_matrix":
        return rule["alpha"] * materials.stiffness[0]
    if kind == "mean_phases":
        if materials.n_phases != 2:
            raise ValueError("mean_phases expects exactly two phases")
        return 0.5 * (materials.stiffness[0] + materials.stiffness[1])
    if kind == "bulk_interp":
        if materials.n_phases != 2:
            raise ValueError("bulk_interp expects exactly two phases")
        k_m, mu_m = tensors.iso_moduli(materials.stiffness[0])
        k_i, _ = tensors.iso_moduli(materials.stiffness[1])
        nu_m = (3.0 * k_m - 2.0 * mu_m) / (2.0 * (3.0 * k_m + mu_m))
        k0 = rule["alpha"] * k_m + (1.0 - rule["alpha"]) * k_i
        e0 = 3.0 * k0 * (1.0 - 2.0 * nu_m)
        return tensors.isotropic_stiffness(E=e0, nu=nu_m)
    raise ValueError(f"unknown reference-medium rule {kind!r}")


def build_green(grid, scheme, lam0):
    """Convenience: stencil plus Omega table for a stencil scheme."""
    stencil = build_stencil(grid, scheme)
    return assemble_omega(stencil, lam0)
