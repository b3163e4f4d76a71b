"""Fixed-point equilibrium solvers.

Three schemes share one loop skeleton: evaluate strains from the iterated
spectral state, inverse transform, apply the voxel-wise constitutive law,
forward transform the stresses, measure the equilibrium residual, then
apply the per-frequency Green correction.  The tetrahedral stencil
iterates either on the collapsed displacement field (one complex vector
field) or on the pair of fluctuating strain fields; the two algorithms
produce identical iterates.  The rotated scheme iterates on its single
displacement field, and the Moulinec-Suquet baseline on a single strain
field with the continuum operator.

Convergence is monitored by the L2 norm of the q-space force residual
normalized by the Frobenius norm of the average stress; for loadings whose
average stress vanishes (pure eigenstrain under zero applied stress) the
normalization falls back to the loading stress scale, since the ratio is
otherwise indeterminate.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .grid import forward_fft, inverse_fft
from .green import (GreenTable, MSTables, assemble_omega, build_ms_tables,
                    ms_apply, reference_medium)
from .stencils import TETRAHEDRAL, ROTATED, build_stencil

MOULINEC_SUQUET = "moulinec_suquet"
SCHEMES = (TETRAHEDRAL, ROTATED, MOULINEC_SUQUET)


class DivergenceError(RuntimeError):
    """Raised when field values stop being finite."""

    def __init__(self, iteration):
        super().__init__(f"non-finite field values at iteration {iteration}")
        self.iteration = iteration


@dataclass
class Loading:
    """Either a prescribed average strain or a prescribed average stress (MPa)."""

    mode: str          # "strain" | "stress"
    tensor: np.ndarray

    def __post_init__(self):
        if self.mode not in ("strain", "stress"):
            raise ValueError(f"loading mode must be 'strain' or 'stress', "
                             f"got {self.mode!r}")
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.shape != (6,):
            raise ValueError("loading tensor must have 6 components")


def applied_strain(t):
    return Loading("strain", t)


def applied_stress(t):
    return Loading("stress", t)


@dataclass
class SolverState:
    """Iterated spectral fields plus the current average strain."""

    eps_bar: np.ndarray
    iteration: int = 0
    u: np.ndarray = None        # (n1,n2,n3,3) complex, displacement algorithms
    deps1_q: np.ndarray = None  # (n1,n2,n3,6) complex, strain algorithm
    deps2_q: np.ndarray = None
    deps_q: np.ndarray = None   # (n1,n2,n3,6) complex, Moulinec-Suquet


@dataclass
class IterationRecord:
    """Diagnostics of one residual evaluation (before the state update)."""

    l2: float
    epsilon: float
    sigma_mean: np.ndarray
    eps_bar: np.ndarray          # average strain used in this evaluation
    sigma_r: np.ndarray          # averaged real-space stress field
    deps_r: np.ndarray           # averaged real-space fluctuating strain


@dataclass
class ConvergenceReport:
    """Per-iteration residual history and the termination cause."""

    l2: np.ndarray
    epsilon: np.ndarray
    seconds: np.ndarray
    termination: str             # "converged" | "max_iter" | "stagnated"
    wall_time: float

    @property
    def iterations(self):
        return len(self.l2)

    def rows(self):
        for it in range(self.iterations):
            yield it + 1, self.l2[it], self.epsilon[it], self.seconds[it]


@dataclass
class SolveResult:
    scheme: str
    algorithm: str
    converged: bool
    iterations: int
    report: ConvergenceReport
    sigma: np.ndarray
    strain: np.ndarray
    mean_strain: np.ndarray
    sigma_mean: np.ndarray
    state: SolverState
    lam0: np.ndarray
    grid: object = None


# ----------------------------------------------------------------------------
# Small field algebra
# ----------------------------------------------------------------------------

def sym_outer(a, u):
    """Symmetrized outer product of two vector fields as 6-component tensors."""
    out = np.empty(u.shape[:-1] + (6,), dtype=np.result_type(a, u))
    out[..., 0] = a[..., 0] * u[..., 0]
    out[..., 1] = a[..., 1] * u[..., 1]
    out[..., 2] = a[..., 2] * u[..., 2]
    out[..., 3] = 0.5 * (a[..., 1] * u[..., 2] + a[..., 2] * u[..., 1])
    out[..., 4] = 0.5 * (a[..., 0] * u[..., 2] + a[..., 2] * u[..., 0])
    out[..., 5] = 0.5 * (a[..., 0] * u[..., 1] + a[..., 1] * u[..., 0])
    return out


def tensor_dot_vec(sig, a):
    """(sigma . a)_i = sigma_ij a_j for 6-component fields and vector fields."""
    out = np.empty(sig.shape[:-1] + (3,), dtype=np.result_type(sig, a))
    out[..., 0] = sig[..., 0] * a[..., 0] + sig[..., 5] * a[..., 1] + sig[..., 4] * a[..., 2]
    out[..., 1] = sig[..., 5] * a[..., 0] + sig[..., 1] * a[..., 1] + sig[..., 3] * a[..., 2]
    out[..., 2] = sig[..., 4] * a[..., 0] + sig[..., 3] * a[..., 1] + sig[..., 2] * a[..., 2]
    return out


def equilibrium_bracket(table, sig1_q, sig2_q):
    """Force residual sigma1.conj(D) - sigma2.D of the two-field formulation."""
    return (tensor_dot_vec(sig1_q, table.stencil.D_conj)
            - tensor_dot_vec(sig2_q, table.D))


def _epsilon_from(l2, sigma_mean):
    denom = tensors.frobenius_norm(sigma_mean)
    if denom == 0.0:
        warnings.warn("average stress is zero; residual criterion is +inf",
                      RuntimeWarning, stacklevel=2)
        return np.inf
    return l2 / denom


# ----------------------------------------------------------------------------
# Constitutive evaluation (phase palette)
# ----------------------------------------------------------------------------

class _Constitutive:
    """Cached palette data for sigma(r) = lambda(r):(eps_bar + deps - eps0)."""

    def __init__(self, materials):
        self.materials = materials
        self.masks = [materials.phase == p for p in range(materials.n_phases)]
        self.maps = [tensors.stiffness_map(C) for C in materials.stiffness]
        self.eig_stress = [m @ e0 for m, e0 in
                           zip(self.maps, materials.eigenstrain)]
        self.mean_map = tensors.stiffness_map(materials.mean_stiffness())
        self.mean_eigenstress = materials.mean_eigenstress()

    def stress(self, eps_bar, deps_r):
        out = np.empty_like(deps_r)
        for mask, W, se in zip(self.masks, self.maps, self.eig_stress):
            out[mask] = deps_r[mask] @ W.T + (W @ eps_bar - se)
        return out

    def mean_stress_of(self, deps_r):
        """<lambda(r) : deps(r)> over the grid."""
        total = np.zeros(6)
        for mask, W in zip(self.masks, self.maps):
            total += W @ deps_r[mask].sum(axis=0)
        return total / self.materials.grid.size


def update_mean_strain(eps_bar, materials, sigma_applied, deps_r, lam0,
                       ctx=None):
    """One sweep of the average-strain fixed point under applied stress."""
    if ctx is None:
        ctx = _Constitutive(materials)
    lam0_map = tensors.stiffness_map(lam0)
    rhs = (np.asarray(sigma_applied, dtype=float)
           + (lam0_map - ctx.mean_map) @ eps_bar
           - ctx.mean_stress_of(deps_r)
           + ctx.mean_eigenstress)
    return np.linalg.solve(lam0_map, rhs)


# ----------------------------------------------------------------------------
# Per-scheme steps
# ----------------------------------------------------------------------------

def step_displacement(state, table, materials, loading, ctx=None, workers=1):
    """One sweep of the collapsed displacement iteration (tetrahedral)."""
    if ctx is None:
        ctx = _Constitutive(materials)
    grid = table.grid
    D, Dc = table.D, table.stencil.D_conj

    deps1_q = sym_outer(D, state.u)
    deps2_q = -sym_outer(Dc, state.u)
    deps1_r = inverse_fft(grid, deps1_q, workers=workers).real
    deps2_r = inverse_fft(grid, deps2_q, workers=workers).real

    sig1_r = ctx.stress(state.eps_bar, deps1_r)
    sig2_r = ctx.stress(state.eps_bar, deps2_r)
    sig1_q = forward_fft(grid, sig1_r, workers=workers)
    sig2_q = forward_fft(grid, sig2_r, workers=workers)

    v = equilibrium_bracket(table, sig1_q, sig2_q)
    l2 = 0.5 * np.sqrt(np.sum(np.abs(v) ** 2))
    if not np.isfinite(l2):
        raise DivergenceError(state.iteration + 1)
    sigma_mean = 0.5 * (sig1_q[0, 0, 0] + sig2_q[0, 0, 0]).real
    record = IterationRecord(
        l2=l2, epsilon=_epsilon_from(l2, sigma_mean), sigma_mean=sigma_mean,
        eps_bar=state.eps_bar.copy(), sigma_r=0.5 * (sig1_r + sig2_r),
        deps_r=0.5 * (deps1_r + deps2_r))

    state.u = state.u - np.einsum('...ij,...j->...i', table.omega, v)
    if loading.mode == "stress":
        state.eps_bar = update_mean_strain(state.eps_bar, materials,
                                           loading.tensor, record.deps_r,
                                           table.lam0, ctx=ctx)
    state.iteration += 1
    return state, record


def step_strain(state, table, materials, loading, ctx=None, workers=1):
    """One sweep of the strain-pair iteration (tetrahedral).

    Algebraically identical, iterate for iterate, to
    :func:`step_displacement` started from u = 0: the correction applied to
    the strain pair is the symmetrized product of the stencil symbol with
    the same displacement correction.
    """
    if ctx is None:
        ctx = _Constitutive(materials)
    grid = table.grid
    D, Dc = table.D, table.stencil.D_conj

    deps1_r = inverse_fft(grid, state.deps1_q, workers=workers).real
    deps2_r = inverse_fft(grid, state.deps2_q, workers=workers).real
    sig1_r = ctx.stress(state.eps_bar, deps1_r)
    sig2_r = ctx.stress(state.eps_bar, deps2_r)
    sig1_q = forward_fft(grid, sig1_r, workers=workers)
    sig2_q = forward_fft(grid, sig2_r, workers=workers)

    v = equilibrium_bracket(table, sig1_q, sig2_q)
    l2 = 0.5 * np.sqrt(np.sum(np.abs(v) ** 2))
    if not np.isfinite(l2):
        raise DivergenceError(state.iteration + 1)
    sigma_mean = 0.5 * (sig1_q[0, 0, 0] + sig2_q[0, 0, 0]).real
    record = IterationRecord(
        l2=l2, epsilon=_epsilon_from(l2, sigma_mean), sigma_mean=sigma_mean,
        eps_bar=state.eps_bar.copy(), sigma_r=0.5 * (sig1_r + sig2_r),
        deps_r=0.5 * (deps1_r + deps2_r))

    w = np.einsum('...ij,...j->...i', table.omega, v)
    state.deps1_q = state.deps1_q - sym_outer(D, w)
    state.deps2_q = state.deps2_q + sym_outer(Dc, w)
    if loading.mode == "stress":
        state.eps_bar = update_mean_strain(state.eps_bar, materials,
                                           loading.tensor, record.deps_r,
                                           table.lam0, ctx=ctx)
    state.iteration += 1
    return state, record


def step_rotated(state, table, materials, loading, ctx=None, workers=1):
    """One sweep of the rotated-scheme displacement iteration."""
    if ctx is None:
        ctx = _Constitutive(materials)
    grid = table.grid

    deps_q = sym_outer(table.D, state.u)
    deps_r = inverse_fft(grid, deps_q, workers=workers).real
    sig_r = ctx.stress(state.eps_bar, deps_r)
    sig_q = forward_fft(grid, sig_r, workers=workers)

    v = tensor_dot_vec(sig_q, table.stencil.D_conj)
    l2 = np.sqrt(np.sum(np.abs(v) ** 2))
    if not np.isfinite(l2):
        raise DivergenceError(state.iteration + 1)
    sigma_mean = sig_q[0, 0, 0].real
    record = IterationRecord(
        l2=l2, epsilon=_epsilon_from(l2, sigma_mean), sigma_mean=sigma_mean,
        eps_bar=state.eps_bar.copy(), sigma_r=sig_r, deps_r=deps_r)

    state.u = state.u - np.einsum('...ij,...j->...i', table.omega, v)
    if loading.mode == "stress":
        state.eps_bar = update_mean_strain(state.eps_bar, materials,
                                           loading.tensor, record.deps_r,
                                           table.lam0, ctx=ctx)
    state.iteration += 1
    return state, record


def step_ms(state, tables, materials, loading, ctx=None, workers=1):
    """One sweep of the Moulinec-Suquet basic scheme."""
    if ctx is None:
        ctx = _Constitutive(materials)
    grid = tables.grid

    deps_r = inverse_fft(grid, state.deps_q, workers=workers).real
    sig_r = ctx.stress(state.eps_bar, deps_r)
    sig_q = forward_fft(grid, sig_r, workers=workers)

    x1, x2, x3 = tables.xi
    f1 = sig_q[..., 0] * x1 + sig_q[..., 5] * x2 + sig_q[..., 4] * x3
    f2 = sig_q[..., 5] * x1 + sig_q[..., 1] * x2 + sig_q[..., 3] * x3
    f3 = sig_q[..., 4] * x1 + sig_q[..., 3] * x2 + sig_q[..., 2] * x3
    l2 = np.sqrt(np.sum(np.abs(f1) ** 2 + np.abs(f2) ** 2 + np.abs(f3) ** 2))
    if not np.isfinite(l2):
        raise DivergenceError(state.iteration + 1)
    sigma_mean = sig_q[0, 0, 0].real
    record = IterationRecord(
        l2=l2, epsilon=_epsilon_from(l2, sigma_mean), sigma_mean=sigma_mean,
        eps_bar=state.eps_bar.copy(), sigma_r=sig_r, deps_r=deps_r)

    state.deps_q = state.deps_q - ms_apply(tables, sig_q)
    if loading.mode == "stress":
        state.eps_bar = update_mean_strain(state.eps_bar, materials,
                                           loading.tensor, record.deps_r,
                                           tables.lam0, ctx=ctx)
    state.iteration += 1
    return state, record


def state_residual(state, table, materials, loading=None, workers=1):
    """(L2, epsilon) of a tetrahedral state without advancing it."""
    ctx = _Constitutive(materials)
    grid = table.grid
    if state.u is not None:
        deps1_q = sym_outer(table.D, state.u)
        deps2_q = -sym_outer(table.stencil.D_conj, state.u)
    else:
        deps1_q, deps2_q = state.deps1_q, state.deps2_q
    deps1_r = inverse_fft(grid, deps1_q, workers=workers).real
    deps2_r = inverse_fft(grid, deps2_q, workers=workers).real
    sig1_q = forward_fft(grid, ctx.stress(state.eps_bar, deps1_r), workers=workers)
    sig2_q = forward_fft(grid, ctx.stress(state.eps_bar, deps2_r), workers=workers)
    v = equilibrium_bracket(table, sig1_q, sig2_q)
    l2 = 0.5 * np.sqrt(np.sum(np.abs(v) ** 2))
    sigma_mean = 0.5 * (sig1_q[0, 0, 0] + sig2_q[0, 0, 0]).real
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        eps = _epsilon_from(l2, sigma_mean)
    return l2, eps


# ----------------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------------

def init_state(scheme, algorithm, grid, loading, lam0):
    """Zero-fluctuation initial state; eps_bar from compliance under stress."""
    if loading.mode == "strain":
        eps_bar = loading.tensor.copy()
    else:
        eps_bar = tensors.compliance_map(lam0) @ loading.tensor
    state = SolverState(eps_bar=eps_bar)
    if scheme == MOULINEC_SUQUET:
        state.deps_q = np.zeros(grid.dims + (6,), dtype=complex)
    elif algorithm == "strain":
        state.deps1_q = np.zeros(grid.dims + (6,), dtype=complex)
        state.deps2_q = np.zeros(grid.dims + (6,), dtype=complex)
    else:
        state.u = np.zeros(grid.dims + (3,), dtype=complex)
    return state


def _stress_scale(materials, loading, lam0):
    """Loading stress scale used when the average stress vanishes."""
    candidates = [tensors.frobenius_norm(materials.mean_eigenstress())]
    if loading.mode == "stress":
        candidates.append(tensors.frobenius_norm(loading.tensor))
    else:
        candidates.append(tensors.frobenius_norm(
            tensors.double_contract_42(lam0, loading.tensor)))
    scale = max(candidates)
    return scale if scale > 0.0 else 1.0


def solve(materials, loading, scheme=TETRAHEDRAL, algorithm="displacement",
          lam0=None, tol=1e-8, max_iter=1000, workers=1, callback=None,
          stagnation_window=200, stagnation_rtol=0.01):
    """Iterate the chosen scheme until the residual criterion reaches ``tol``.

    ``lam0`` may be a 6x6 stiffness or a reference-medium rule mapping (see
    :func:`fftmech.green.reference_medium`).  The per-iteration ``callback``
    receives ``(iteration, record)`` with the averaged real-space stress of
    that iteration.  Termination is ``converged``, ``max_iter`` or
    ``stagnated`` (no 1% improvement of the criterion over
    ``stagnation_window`` iterations, the graceful exit for non-convergent
    baselines).  Non-finite fields raise :class:`DivergenceError`.
    """
    grid = materials.grid
    if isinstance(lam0, dict):
        lam0 = reference_medium(lam0, materials)
    elif lam0 is None:
        lam0 = reference_medium({"type": "scale_matrix", "alpha": 1.0},
                                materials)
    lam0 = np.asarray(lam0, dtype=float)

    if scheme == MOULINEC_SUQUET:
        tables = build_ms_tables(grid, lam0)
        step = step_ms
        algorithm = "strain"
    elif scheme == ROTATED:
        tables = assemble_omega(build_stencil(grid, ROTATED), lam0)
        step = step_rotated
        algorithm = "displacement"
    elif scheme == TETRAHEDRAL:
        tables = assemble_omega(build_stencil(grid, TETRAHEDRAL), lam0)
        if algorithm == "displacement":
            step = step_displacement
        elif algorithm == "strain":
            step = step_strain
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    ctx = _Constitutive(materials)
    state = init_state(scheme, algorithm, grid, loading, lam0)
    scale = _stress_scale(materials, loading, lam0)

    l2_hist, eps_hist, sec_hist, crit_hist = [], [], [], []
    best = []                      # running minimum of the criterion
    termination = "max_iter"
    record = None
    t0 = time.perf_counter()

    with warnings.catch_warnings():
        # the zero-average-stress guard would otherwise fire every iteration
        warnings.simplefilter("once", RuntimeWarning)
        for it in range(1, max_iter + 1):
            state, record = step(state, tables, materials, loading,
                                 ctx=ctx, workers=workers)
            l2_hist.append(record.l2)
            eps_hist.append(record.epsilon)
            sec_hist.append(time.perf_counter() - t0)

            denom = tensors.frobenius_norm(record.sigma_mean)
            criterion = record.l2 / (denom if denom > 1e-9 * scale else scale)
            crit_hist.append(criterion)
            best.append(min(criterion, best[-1]) if best else criterion)

            if callback is not None:
                callback(it, record)
            if criterion <= tol:
                termination = "converged"
                break
            if (it > stagnation_window
                    and best[-1] > (1.0 - stagnation_rtol)
                    * best[-1 - stagnation_window]):
                termination = "stagnated"
                break

    report = ConvergenceReport(l2=np.array(l2_hist),
                               epsilon=np.array(eps_hist),
                               seconds=np.array(sec_hist),
                               termination=termination,
                               wall_time=time.perf_counter() - t0)
    return SolveResult(
        scheme=scheme, algorithm=algorithm,
        converged=(termination == "converged"),
        iterations=report.iterations, report=report,
        sigma=record.sigma_r, strain=record.deps_r + record.eps_bar,
        mean_strain=record.eps_bar, sigma_mean=record.sigma_mean,
        state=state, lam0=lam0, grid=grid)


def corner_displacement(grid, u_q):
    """Real-space displacement on the corner grid from the spectral field.

    Corner sites sit at half-integer positions, so the spectral field picks
    up the half-shift phase before the inverse transform.  The output array
    entry [m1, m2, m3] is the displacement at position (m1+1/2, m2+1/2,
    m3+1/2) in voxel units.
    """
    q1, q2, q3 = grid.frequency_mesh()
    phase = np.exp(0.5j * (q1 + q2 + q3))
    return inverse_fft(grid, u_q * phase[..., None]).real


def spectral_displacement(grid, u_corner):
    """Inverse of :func:`corner_displacement`: corner field -> u(q)."""
    q1, q2, q3 = grid.frequency_mesh()
    phase = np.exp(-0.5j * (q1 + q2 + q3))
    return forward_fft(grid, u_corner.astype(complex)) * phase[..., None]
