"""Static spinor Hamiltonian: bound states, symmetry adaptation, well basis and
four-mode coefficients.

Spinor fields are complex arrays of shape ``(2, n)`` normalised so that
``sum(|psi|**2) * dx == 1``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import InsufficientBoundStates, SymmetryError
from .grid import Grid, GridSpec, PotentialPair, TrapParams, build_grid, double_well

log = logging.getLogger(__name__)

TOL_SYM = 1e-6
TOL_DEG = 1e-6  # relative to |Delta|
STRUCTURE_TOL = 1e-6


def odd_wavenumbers(grid: Grid) -> np.ndarray:
    """Wavenumbers for first derivatives, with the Nyquist mode zeroed.

    Zeroing the unpaired Nyquist entry keeps the discrete momentum operator
    odd under x -> -x, so parity-based symmetries hold to round-off.
    """
    k = np.array(grid.k)
    k[grid.n // 2] = 0.0
    return k


def _fourier_operator(grid: Grid, symbol: np.ndarray) -> np.ndarray:
    n = grid.n
    F = np.fft.fft(np.eye(n), axis=0)
    return np.fft.ifft(symbol[:, None] * F, axis=0)


def discretize_hamiltonian(grid: Grid, trap: TrapParams, potentials: PotentialPair | None = None) -> np.ndarray:
    """Dense spectral matrix of H0 = c p^2 - gamma sigma_z p + Omega sigma_x + V(x).

    Acts on vectors ``psi.reshape(-1)`` (component 1 first).
    """
    if potentials is None:
        potentials = double_well(grid, trap)
    n = grid.n
    kin = _fourier_operator(grid, trap.kinetic * grid.k**2)
    mom = _fourier_operator(grid, odd_wavenumbers(grid))
    diag_v = np.diag(potentials.v_static)
    eye = np.eye(n)
    H = np.empty((2 * n, 2 * n), dtype=complex)
    H[:n, :n] = kin - trap.gamma * mom + diag_v
    H[n:, n:] = kin + trap.gamma * mom + diag_v
    H[:n, n:] = trap.omega_rabi * eye
    H[n:, :n] = trap.omega_rabi * eye
    # symmetrise away the O(1e-15) FFT asymmetry
    return 0.5 * (H + H.conj().T)


def apply_hamiltonian(H: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return (H @ psi.reshape(-1)).reshape(psi.shape)


# -- symmetry operators -----------------------------------------------------

def alpha1(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """PT: psi(x) -> psi*(-x)."""
    return np.conj(psi[:, grid.parity_index])


def alpha2(psi: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """sigma_x T: psi(x) -> sigma_x psi*(x)."""
    return np.conj(psi[::-1])


def alpha3(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """sigma_x P: psi(x) -> sigma_x psi(-x)."""
    return psi[::-1][:, grid.parity_index]


def inner(a: np.ndarray, b: np.ndarray, dx: float) -> complex:
    return complex(np.vdot(a, b) * dx)


def norm(psi: np.ndarray, dx: float) -> float:
    return float(np.sqrt(np.sum(np.abs(psi) ** 2) * dx))


def spin_expectation(psi: np.ndarray, dx: float) -> tuple[float, float, float]:
    """Mean spin (<sigma_x>, <sigma_y>, <sigma_z>) / 2."""
    cross = np.vdot(psi[0], psi[1]) * dx
    sz = 0.5 * (np.sum(np.abs(psi[0]) ** 2) - np.sum(np.abs(psi[1]) ** 2)) * dx
    return float(cross.real), float(cross.imag), float(sz)


def left_mass(psi: np.ndarray, grid: Grid) -> float:
    return float(np.sum(np.abs(psi) ** 2, axis=0) @ grid.left_weights())


# -- data types -------------------------------------------------------------

@dataclass(eq=False)
class EigenState:
    energy: float
    field: np.ndarray = field(repr=False)
    i: int
    j: int
    # signatures <psi|alpha_n psi> after adaptation; alpha_2 is fixed to +1
    signatures: tuple[float, float, float] = (np.nan, np.nan, np.nan)


@dataclass(frozen=True)
class FourModeCoefficients:
    """Scalars of the reduced model.

    ``tunnel_signs`` are the signs multiplying ``delta_i sigma_x`` in the
    projected Hamiltonian for the basis conventions used here; the textbook
    form has both signs +1.
    """

    Delta: float
    delta1: float
    delta2: float
    v1: float
    v2: float
    u: float
    w: float
    E0: float
    structure_residual: float = 0.0
    tunnel_signs: tuple[int, int] = (1, 1)

    def as_dict(self) -> dict:
        return {
            "Delta": self.Delta,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "v1": self.v1,
            "v2": self.v2,
            "u": self.u,
            "w": self.w,
            "E0": self.E0,
            "structure_residual": self.structure_residual,
            "tunnel_signs": list(self.tunnel_signs),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FourModeCoefficients":
        data = dict(data)
        data["tunnel_signs"] = tuple(int(s) for s in data.get("tunnel_signs", (1, 1)))
        return cls(**data)


@dataclass(eq=False)
class StationarySet:
    grid: Grid
    trap: TrapParams
    potentials: PotentialPair
    states: list[EigenState]
    well_basis: np.ndarray | None = field(default=None, repr=False)  # (4, 2, n): 1-, 1+, 2-, 2+
    hamiltonian: np.ndarray | None = field(default=None, repr=False)
    tunnel_signs: tuple[int, int] = (1, 1)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.states])

    @property
    def E0(self) -> float:
        return float(self.energies.mean())

    @property
    def Delta(self) -> float:
        e = self.energies
        return float((e[3] + e[2] - e[1] - e[0]) / 4)

    def basis_labels(self) -> list[str]:
        return ["1-", "1+", "2-", "2+"]


# -- operations -------------------------------------------------------------

def continuum_edge(trap: TrapParams) -> float:
    """Bottom of the free lower band min_k [c k^2 - sqrt(gamma^2 k^2 + Omega^2)]."""
    c, g, om = trap.kinetic, trap.gamma, abs(trap.omega_rabi)
    if g**2 > 2 * c * om:
        return float(-(g**2) / (4 * c) - c * om**2 / g**2)
    return float(-om)


def bound_states(H: np.ndarray, grid: Grid, trap: TrapParams, potentials: PotentialPair | None = None,
                 count: int = 4) -> StationarySet:
    """The ``count`` lowest eigenpairs, all required to lie below the continuum edge.

    The Zeeman term pulls the free spectrum down to ``continuum_edge`` < 0, so
    a negative eigenvalue alone does not make a state bound.
    """
    evals, evecs = scipy.linalg.eigh(H, subset_by_index=[0, count - 1])
    edge = continuum_edge(trap)
    if np.any(evals >= edge):
        n_bound = int(np.sum(evals < edge))
        raise InsufficientBoundStates(
            f"insufficient bound states: {n_bound} eigenvalues below the continuum edge {edge:.4g}, "
            f"{count} required (gamma={trap.gamma}, U={trap.U}, a={trap.a})"
        )
    n = grid.n
    states = []
    for idx in range(count):
        psi = evecs[:, idx].reshape(2, n) / np.sqrt(grid.dx)
        res = np.linalg.norm(H @ evecs[:, idx] - evals[idx] * evecs[:, idx])
        if res > 1e-8:
            raise RuntimeError(f"eigenpair {idx} residual {res:.2e} exceeds 1e-8")
        states.append(EigenState(energy=float(evals[idx]), field=psi, i=idx // 2 + 1, j=idx % 2 + 1))
    if potentials is None:
        potentials = double_well(grid, trap)
    return StationarySet(grid=grid, trap=trap, potentials=potentials, states=states, hamiltonian=H)


def _fix_alpha2_phase(psi: np.ndarray, grid: Grid) -> np.ndarray:
    q = psi + alpha2(psi)
    if norm(q, grid.dx) < 1e-3:
        q = 1j * (psi - alpha2(psi))
    nq = norm(q, grid.dx)
    if nq < 1e-3:
        raise SymmetryError("symmetrisation null in both branches")
    return q / nq


def _canonical_sign(psi: np.ndarray) -> np.ndarray:
    # remaining real-sign freedom: largest-magnitude real entry of component 1 made positive
    idx = np.argmax(np.abs(psi[0].real))
    return psi if psi[0, idx].real >= 0 else -psi


def symmetry_adapt(sset: StationarySet, tol_deg: float = TOL_DEG) -> StationarySet:
    """Fix eigenvector phases using the antiunitary symmetry sigma_x T.

    After adaptation every state satisfies alpha_2 psi = psi; the unitary
    alpha_3 (and hence alpha_1 = alpha_3 alpha_2) then acts as +1 or -1, which
    is recorded in ``EigenState.signatures``.  A (near-)degenerate pair is
    first rotated onto alpha_3 eigenvectors.
    """
    grid = sset.grid
    dx = grid.dx
    e = sset.energies
    scale = abs((e[3] + e[2] - e[1] - e[0]) / 4) if len(e) >= 4 else 1.0
    fields = [s.field.copy() for s in sset.states]
    for p in range(0, len(fields) - 1, 2):
        if abs(e[p + 1] - e[p]) < tol_deg * scale:
            pair = [fields[p], fields[p + 1]]
            a3 = np.array([[inner(a, alpha3(b, grid), dx) for b in pair] for a in pair])
            _, rot = np.linalg.eigh(0.5 * (a3 + a3.conj().T))
            fields[p] = rot[0, 0] * pair[0] + rot[1, 0] * pair[1]
            fields[p + 1] = rot[0, 1] * pair[0] + rot[1, 1] * pair[1]
    adapted = []
    for s, psi in zip(sset.states, fields):
        q = _canonical_sign(_fix_alpha2_phase(psi, grid))
        sig = tuple(float(inner(q, op(q, grid), dx).real) for op in (alpha1, alpha2, alpha3))
        if abs(sig[1] - 1) > TOL_SYM:
            raise SymmetryError(f"state ({s.i}{s.j}): symmetry signature {sig[1]:+.3f} under alpha_2")
        for n_op, value in enumerate(sig, start=1):
            if abs(abs(value) - 1) > TOL_SYM:
                raise SymmetryError(f"state ({s.i}{s.j}) is not an alpha_{n_op} eigenstate (overlap {value:.3g})")
        adapted.append(EigenState(energy=s.energy, field=q, i=s.i, j=s.j, signatures=sig))
    return StationarySet(grid=grid, trap=sset.trap, potentials=sset.potentials, states=adapted,
                         hamiltonian=sset.hamiltonian)


def well_basis(sset: StationarySet) -> StationarySet:
    """Left/right localised combinations |i-> (left) and |i+> (right).

    |i-> = (|i1> + |i2>)/sqrt2, with |i2> re-signed when needed so that the
    combination sits in the left well; |i+> = alpha_3 |i->, which equals
    +-(|i1> - |i2>)/sqrt2.  The overall sign of the upper pair is chosen so
    that w >= 0.
    """
    grid = sset.grid
    states = [EigenState(s.energy, s.field.copy(), s.i, s.j, s.signatures) for s in sset.states]
    basis = []
    signs = []
    for p in (0, 2):
        s1, s2 = states[p], states[p + 1]
        minus = (s1.field + s2.field) / np.sqrt(2)
        m = left_mass(minus, grid)
        if m < 0.5:
            s2.field = -s2.field
            minus = (s1.field + s2.field) / np.sqrt(2)
            m = 1.0 - m
        if m < 0.6:
            warnings.warn(f"weak localization of pair {p // 2 + 1}: left mass {m:.3f}", stacklevel=2)
        plus = alpha3(minus, grid)
        # plus = eta (|i1> - |i2>)/sqrt2 with eta the alpha_3 signature of |i1>
        eta = 1 if s1.signatures[2] > 0 else -1
        signs.append(-eta)
        basis += [minus, plus]
    basis = np.array(basis)
    w = -inner(basis[0], sset.potentials.v_mod * basis[3], grid.dx).real
    if w < 0:
        basis[2:] *= -1
        states[2].field = -states[2].field
        states[3].field = -states[3].field
    return StationarySet(grid=grid, trap=sset.trap, potentials=sset.potentials, states=states,
                         well_basis=basis, hamiltonian=sset.hamiltonian, tunnel_signs=tuple(signs))


def overlap_matrix(basis: np.ndarray, profile: np.ndarray, dx: float) -> np.ndarray:
    """M[a, b] = <a|profile|b> for a scalar profile acting on both components."""
    weighted = profile * basis
    return np.einsum("aci,bci->ab", basis.conj(), weighted) * dx


def modulation_pattern(v1: float, v2: float, u: float, w: float) -> np.ndarray:
    """Matrix of <a|(V_+ - V_-)|b> in the ordering (1-, 1+, 2-, 2+).

    Blocks: v_i sigma_z on the diagonal, u sigma_z -+ i w sigma_y off the
    diagonal, where w is defined as <1-|(V_- - V_+)|2+>.
    """
    return np.array(
        [
            [v1, 0.0, u, -w],
            [0.0, -v1, w, -u],
            [u, w, v2, 0.0],
            [-w, -u, 0.0, -v2],
        ]
    )


def four_mode_coefficients(sset: StationarySet, structure_tol: float = STRUCTURE_TOL) -> FourModeCoefficients:
    if sset.well_basis is None:
        raise ValueError("well basis not built; call well_basis() first")
    M = overlap_matrix(sset.well_basis, sset.potentials.v_mod, sset.grid.dx)
    imag = np.abs(M.imag).max()
    if imag > 1e-8:
        raise SymmetryError(f"overlap matrix has imaginary part {imag:.2e}")
    M = M.real
    v1, v2 = M[0, 0], M[2, 2]
    u = M[0, 2]
    w = -M[0, 3]
    residual = float(np.abs(M - modulation_pattern(v1, v2, u, w)).max())
    scale = max(abs(v1), abs(v2), abs(u), abs(w))
    if residual > structure_tol * scale:
        raise SymmetryError(
            f"symmetry-structure violation: overlap matrix deviates by {residual:.2e} "
            f"(> {structure_tol:g} x {scale:.3g})"
        )
    e = sset.energies
    return FourModeCoefficients(
        Delta=float((e[3] + e[2] - e[1] - e[0]) / 4),
        delta1=float((e[1] - e[0]) / 2),
        delta2=float((e[3] - e[2]) / 2),
        v1=float(v1),
        v2=float(v2),
        u=float(u),
        w=float(w),
        E0=float(e.mean()),
        structure_residual=residual,
        tunnel_signs=sset.tunnel_signs,
    )


def solve_stationary(trap: TrapParams, grid: Grid | GridSpec | None = None) -> StationarySet:
    """Eigensolve, symmetry adaptation and well basis in one call."""
    if grid is None:
        grid = GridSpec()
    if isinstance(grid, GridSpec):
        grid = build_grid(grid)
    potentials = double_well(grid, trap)
    H = discretize_hamiltonian(grid, trap, potentials)
    sset = bound_states(H, grid, trap, potentials)
    return well_basis(symmetry_adapt(sset))


def pair_gaps(trap: TrapParams, grid: Grid) -> tuple[float, float]:
    H = discretize_hamiltonian(grid, trap)
    e = scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=[0, 3])
    return float(abs(e[1] - e[0])), float(abs(e[3] - e[2]))


def gap_scan(gamma_values, trap: TrapParams, grid: Grid | GridSpec | None = None) -> np.ndarray:
    """Rows (gamma, |e12 - e11|, |e22 - e21|)."""
    if grid is None:
        grid = GridSpec()
    if isinstance(grid, GridSpec):
        grid = build_grid(grid)
    rows = []
    for g in gamma_values:
        lo, up = pair_gaps(_with(trap, gamma=float(g)), grid)
        rows.append((float(g), lo, up))
    return np.array(rows)


def gap_minimum(trap: TrapParams, pair: int, bracket: tuple[float, float],
                grid: Grid | GridSpec | None = None, xatol: float = 1e-5) -> tuple[float, float]:
    """Refine the gamma minimising the gap of ``pair`` (1 lower, 2 upper) inside ``bracket``."""
    if grid is None:
        grid = GridSpec()
    if isinstance(grid, GridSpec):
        grid = build_grid(grid)
    res = minimize_scalar(
        lambda g: pair_gaps(_with(trap, gamma=float(g)), grid)[pair - 1],
        bounds=bracket,
        method="bounded",
        options={"xatol": xatol},
    )
    return float(res.x), float(res.fun)


def _with(trap: TrapParams, **changes) -> TrapParams:
    from dataclasses import replace

    return replace(trap, **changes)
