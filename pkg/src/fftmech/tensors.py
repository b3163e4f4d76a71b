"""Symmetric tensor algebra in a fixed 6-component (Voigt) convention.

Component order is (11, 22, 33, 23, 13, 12) everywhere.  Second-order
tensors store *tensor* components (``v[3] = e_23``, not the engineering
shear ``2 e_23``); the factor of 2 on the off-diagonal pairs lives inside
the contraction routines, never in the stored fields.  Fourth-order
stiffnesses are stored as plain symmetric 6x6 matrices ``C[I, J] =
lambda_ijkl`` (units MPa).
"""

import numpy as np

# Voigt index -> (i, j) pair, 0-based, order (11, 22, 33, 23, 13, 12).
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

# Off-diagonal pairs appear twice in a full double contraction.
VOIGT_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

_FULL_TO_VOIGT = np.array([[0, 5, 4],
                           [5, 1, 3],
                           [4, 3, 2]])


# ----------------------------------------------------------------------------
# 2nd-order tensors
# ----------------------------------------------------------------------------

def to_matrix(v):
    """6-component vector -> symmetric 3x3 matrix (exact round trip)."""
    v = np.asarray(v)
    m = np.empty(v.shape[:-1] + (3, 3), dtype=v.dtype)
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        m[..., i, j] = v[..., I]
        m[..., j, i] = v[..., I]
    return m


def from_matrix(m):
    """Symmetric 3x3 matrix -> 6-component vector (exact round trip)."""
    m = np.asarray(m)
    v = np.empty(m.shape[:-2] + (6,), dtype=m.dtype)
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        v[..., I] = m[..., i, j]
    return v


def trace(v):
    return v[..., 0] + v[..., 1] + v[..., 2]


def deviator(v):
    d = np.array(v, dtype=float, copy=True)
    p = trace(v) / 3.0
    d[..., 0] -= p
    d[..., 1] -= p
    d[..., 2] -= p
    return d


def frobenius_norm(v):
    """Frobenius norm of the full 3x3 tensor (off-diagonals counted twice)."""
    v = np.asarray(v)
    return np.sqrt(np.sum(np.abs(v) ** 2 * VOIGT_WEIGHTS, axis=-1))


def von_mises(s):
    """Equivalent stress sqrt(3/2 dev(s):dev(s)); works on (..., 6) fields."""
    d = deviator(s)
    return np.sqrt(1.5 * np.sum(d * d * VOIGT_WEIGHTS, axis=-1))


# ----------------------------------------------------------------------------
# 4th-order stiffness tensors
# ----------------------------------------------------------------------------

def double_contract_42(C, e):
    """sigma_ij = lambda_ijkl e_kl for Voigt-stored C (6x6) and e (..., 6).

    The weight of 2 on off-diagonal strain components is applied here so
    the result matches the full 4-index contraction identically.
    """
    return np.einsum('IJ,...J->...I', np.asarray(C) * VOIGT_WEIGHTS, e)


def stiffness_map(C):
    """6x6 matrix mapping tensor-component strain -> stress (weights baked in)."""
    return np.asarray(C) * VOIGT_WEIGHTS


def compliance_map(C):
    """6x6 matrix mapping tensor-component stress -> strain.

    Raises ``numpy.linalg.LinAlgError`` for singular C (e.g. a void phase).
    """
    return np.linalg.inv(stiffness_map(C))


def voigt4_to_full(C):
    """6x6 Voigt stiffness -> full lambda_ijkl with all minor/major symmetries."""
    C = np.asarray(C)
    return C[_FULL_TO_VOIGT[:, :, None, None], _FULL_TO_VOIGT[None, None, :, :]]


def full_to_voigt4(lam):
    """Full 3x3x3x3 tensor -> 6x6 Voigt matrix (reads representative entries)."""
    lam = np.asarray(lam)
    C = np.empty((6, 6), dtype=lam.dtype)
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            C[I, J] = lam[i, j, k, l]
    return C


def isotropic_stiffness(mu=None, nu=None, E=None, k=None):
    """Isotropic stiffness from any of (mu, nu), (E, nu) or (k, mu).

    Inputs are validated: moduli must be positive and nu must lie in the
    open interval (-1, 0.5).  Use :func:`void_stiffness` for an empty phase.
    """
    given = {n for n, v in (('mu', mu), ('nu', nu), ('E', E), ('k', k))
             if v is not None}
    if given == {'mu', 'nu'}:
        pass
    elif given == {'E', 'nu'}:
        _check_positive('E', E)
        _check_nu(nu)
        mu = E / (2.0 * (1.0 + nu))
    elif given == {'k', 'mu'}:
        _check_positive('k', k)
        _check_positive('mu', mu)
        nu = (3.0 * k - 2.0 * mu) / (2.0 * (3.0 * k + mu))
    else:
        raise ValueError("specify exactly one of (mu, nu), (E, nu), (k, mu); "
                         f"got {sorted(given)}")
    _check_positive('mu', mu)
    _check_nu(nu)
    lam = 2.0 * mu * nu / (1.0 - 2.0 * nu)
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[0, 0] = C[1, 1] = C[2, 2] = lam + 2.0 * mu
    C[3, 3] = C[4, 4] = C[5, 5] = mu
    return C


def cubic_stiffness(c11, c12, c44):
    """Cubic stiffness from the three independent constants (tensor shear)."""
    C = np.zeros((6, 6))
    C[:3, :3] = c12
    C[0, 0] = C[1, 1] = C[2, 2] = c11
    C[3, 3] = C[4, 4] = C[5, 5] = c44
    return C


def void_stiffness():
    """Exact zero stiffness for an empty (infinite-contrast) phase."""
    return np.zeros((6, 6))


def iso_moduli(C):
    """Isotropic projection (k, mu) of a 6x6 stiffness."""
    C = np.asarray(C)
    k = (C[0, 0] + C[1, 1] + C[2, 2]
         + 2.0 * (C[0, 1] + C[0, 2] + C[1, 2])) / 9.0
    mu = (C[0, 0] + C[1, 1] + C[2, 2] - C[0, 1] - C[0, 2] - C[1, 2]
          + 3.0 * (C[3, 3] + C[4, 4] + C[5, 5])) / 15.0
    return k, mu


def is_isotropic(C, tol=1e-10):
    """True when C equals its isotropic projection to relative tolerance."""
    k, mu = iso_moduli(C)
    nu = (3.0 * k - 2.0 * mu) / (2.0 * (3.0 * k + mu))
    if not (-1.0 < nu < 0.5) or mu <= 0.0:
        return False
    ref = isotropic_stiffness(mu=mu, nu=nu)
    scale = np.linalg.norm(ref)
    return np.linalg.norm(np.asarray(C) - ref) <= tol * max(scale, 1.0)


def check_positive_definite(C, name="reference stiffness"):
    """Raise ValueError unless C is positive definite on symmetric tensors."""
    s = np.sqrt(VOIGT_WEIGHTS)
    mandel = np.asarray(C) * np.outer(s, s)
    w = np.linalg.eigvalsh(0.5 * (mandel + mandel.T))
    if w.min() <= 0.0:
        raise ValueError(f"{name} is not positive definite "
                         f"(min eigenvalue {w.min():.3e})")


def _check_positive(name, value):
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value}")


def _check_nu(nu):
    if not (-1.0 < nu < 0.5):
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
