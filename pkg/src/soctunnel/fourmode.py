"""Reduced four-mode model of the driven double well and its Floquet analysis.

Amplitudes are ordered (c_1-, c_1+, c_2-, c_2+) and obey

    i dc/dt = (H_0 + H_delta) c + f sin(omega t) V c

with H_0 = Delta diag(-1, -1, 1, 1), H_delta block-diagonal delta_i sigma_x
and V the projected modulation matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .errors import StepSizeError
from .stationary import FourModeCoefficients, modulation_pattern

log = logging.getLogger(__name__)

UNITARITY_TOL = 1e-8
PHASE_STEP = 0.01  # max |H| h per RK4 substep
LEFT_MODES = (0, 2)


@dataclass(frozen=True, eq=False)
class FourModeSystem:
    H0_mat: np.ndarray
    Hdelta_mat: np.ndarray
    V_mat: np.ndarray
    f: float = 0.0
    omega: float = 1.0

    @property
    def static(self) -> np.ndarray:
        return np.diag(self.H0_mat) + self.Hdelta_mat

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.static + self.f * np.sin(self.omega * t) * self.V_mat

    def with_drive(self, f: float | None = None, omega: float | None = None) -> "FourModeSystem":
        return FourModeSystem(self.H0_mat, self.Hdelta_mat, self.V_mat,
                              self.f if f is None else f, self.omega if omega is None else omega)


@dataclass(eq=False)
class FloquetResult:
    phases: np.ndarray
    multipliers: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    unitarity_residual: float
    ambiguous: bool = False


@dataclass(frozen=True)
class Crossing:
    omega: float
    branch_a: int
    branch_b: int
    kind: str  # "lower-pair", "upper-pair" or "inter-pair"
    gap: float = 0.0


def assemble(coeffs: FourModeCoefficients, f: float = 0.0, omega: float = 1.0) -> FourModeSystem:
    D = coeffs.Delta
    s1, s2 = coeffs.tunnel_signs
    hdelta = np.zeros((4, 4))
    hdelta[0, 1] = hdelta[1, 0] = s1 * coeffs.delta1
    hdelta[2, 3] = hdelta[3, 2] = s2 * coeffs.delta2
    V = modulation_pattern(coeffs.v1, coeffs.v2, coeffs.u, coeffs.w)
    return FourModeSystem(np.array([-D, -D, D, D]), hdelta, V, float(f), float(omega))


def _substeps(system: FourModeSystem, omegas: np.ndarray, n_sub: int | None) -> int:
    if n_sub is not None:
        return int(n_sub)
    scale = np.linalg.norm(system.static, 2) + abs(system.f) * np.linalg.norm(system.V_mat, 2)
    T = 2 * np.pi / np.min(omegas)
    # at least 200 per period and per 2pi/Delta
    Delta = abs(system.H0_mat[-1]) or 1.0
    floor = 200 * max(1.0, np.max(2 * np.pi / omegas) / (2 * np.pi / Delta))
    return int(max(np.ceil(T * scale / PHASE_STEP), np.ceil(floor), 200))


def period_propagators(system: FourModeSystem, omegas, n_sub: int | None = None,
                       samples: int = 0) -> tuple[np.ndarray, np.ndarray | None]:
    """Classic RK4 over one drive period for each omega.

    Returns the monodromy matrices (B, 4, 4) and, if ``samples`` > 0, the
    propagators at ``samples + 1`` equally spaced phases (S+1, B, 4, 4)
    including t=0 and t=T.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n_sub = _substeps(system, omegas, n_sub)
    if samples:
        n_sub = int(np.ceil(n_sub / samples) * samples)
    B = omegas.size
    h = (2 * np.pi / omegas / n_sub)[:, None, None]
    A0 = -1j * system.static
    AV = -1j * system.f * system.V_mat
    U = np.broadcast_to(np.eye(4, dtype=complex), (B, 4, 4)).copy()
    out = [U.copy()] if samples else None
    stride = n_sub // samples if samples else 0

    def rhs(t_frac, X):
        # omega t = 2 pi t_frac for every batch member
        return (A0 + np.sin(2 * np.pi * t_frac) * AV) @ X

    for j in range(n_sub):
        tf0 = j / n_sub
        tfm = (j + 0.5) / n_sub
        tf1 = (j + 1) / n_sub
        k1 = rhs(tf0, U)
        k2 = rhs(tfm, U + 0.5 * h * k1)
        k3 = rhs(tfm, U + 0.5 * h * k2)
        k4 = rhs(tf1, U + h * k3)
        U = U + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if samples and (j + 1) % stride == 0:
            out.append(U.copy())
    return U, (np.array(out) if samples else None)


def unitarity_residual(M: np.ndarray) -> np.ndarray:
    eye = np.eye(M.shape[-1])
    return np.abs(np.conj(np.swapaxes(M, -1, -2)) @ M - eye).max(axis=(-1, -2))


def monodromy(system: FourModeSystem, n_sub: int | None = None) -> tuple[np.ndarray, float]:
    M, _ = period_propagators(system, [system.omega], n_sub)
    res = float(unitarity_residual(M)[0])
    if res > 1e-6:
        raise StepSizeError(f"monodromy unitarity residual {res:.2e} > 1e-6")
    return M[0], res


def floquet_phases(M: np.ndarray, previous: np.ndarray | None = None, degenerate_tol: float = 1e-6) -> FloquetResult:
    """Quasi-energy phases lambda = -arg(mu) in (-pi, pi].

    With ``previous`` eigenvectors (columns) the output is ordered to follow
    them by maximal overlap; otherwise by ascending phase.
    """
    mu, vecs = np.linalg.eig(M)
    lam = -np.angle(mu)
    lam[lam <= -np.pi] += 2 * np.pi
    if previous is None:
        order = np.argsort(lam)
    else:
        overlap = np.abs(previous.conj().T @ vecs)
        _, order = linear_sum_assignment(-overlap)
    lam, mu, vecs = lam[order], mu[order], vecs[:, order]
    gaps = np.abs(mu[:, None] - mu[None, :])[np.triu_indices(4, 1)]
    return FloquetResult(
        phases=lam,
        multipliers=mu,
        eigenvectors=vecs,
        unitarity_residual=float(unitarity_residual(M)),
        ambiguous=bool(gaps.min() < degenerate_tol),
    )


def floquet_scan(system: FourModeSystem, omegas, n_sub: int | None = None) -> dict:
    """Tracked quasi-energy branches versus omega.

    Returns arrays ``omega``, ``phases`` (B, 4), ``lower_weight`` (B, 4)
    (weight of each branch on the lower modes), ``residual`` and ``ambiguous``.
    """
    omegas = np.asarray(omegas, dtype=float)
    Ms, _ = period_propagators(system, omegas, n_sub)
    phases = np.empty((omegas.size, 4))
    lower = np.empty((omegas.size, 4))
    resid = unitarity_residual(Ms)
    amb = np.zeros(omegas.size, dtype=bool)
    vectors = np.empty((omegas.size, 4, 4), dtype=complex)
    prev = None
    for b, M in enumerate(Ms):
        fr = floquet_phases(M, prev)
        phases[b] = fr.phases
        lower[b] = np.sum(np.abs(fr.eigenvectors[:2]) ** 2, axis=0)
        amb[b] = fr.ambiguous
        vectors[b] = prev = fr.eigenvectors
    return {"omega": omegas, "phases": phases, "lower_weight": lower, "residual": resid,
            "ambiguous": amb, "vectors": vectors}


def _wrap(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


def _classify(weight_a: float, weight_b: float) -> str:
    a_low, b_low = weight_a > 0.5, weight_b > 0.5
    if a_low and b_low:
        return "lower-pair"
    if not a_low and not b_low:
        return "upper-pair"
    return "inter-pair"


def crossing_frequencies(coeffs: FourModeCoefficients, f: float, omega_range: tuple[float, float],
                         resolution: float = 5e-4, tol: float = 1e-6, gap_accept: float = 1e-4,
                         n_sub: int | None = None) -> list[Crossing]:
    """Frequencies where two tracked quasi-energy branches cross.

    A crossing is a sign change of a wrapped branch difference (through 0,
    not through pi) between adjacent samples, refined by bisection; near
    tangential encounters are refined to the minimum gap and kept if that gap
    is below ``gap_accept``.
    """
    lo, hi = omega_range
    omegas = np.arange(lo, hi + 0.5 * resolution, resolution)
    system = assemble(coeffs, f)
    scan = floquet_scan(system, omegas, n_sub)
    ph = scan["phases"]
    found: list[Crossing] = []
    for a in range(4):
        for b in range(a + 1, 4):
            diff = _wrap(ph[:, a] - ph[:, b])
            for i in range(len(omegas) - 1):
                d0, d1 = diff[i], diff[i + 1]
                if scan["ambiguous"][i] or scan["ambiguous"][i + 1]:
                    continue
                small = max(abs(d0), abs(d1)) < 0.5
                if small and d0 * d1 < 0:
                    om, gap = _bisect_crossing(system, omegas[i], omegas[i + 1], scan["vectors"][i], a, b, n_sub, tol)
                    kind = _classify(scan["lower_weight"][i, a], scan["lower_weight"][i, b])
                    found.append(Crossing(float(om), a, b, kind, float(gap)))
                elif (small and i > 0 and d0 * d1 > 0 and d0 * diff[i - 1] > 0
                      and abs(d0) < abs(diff[i - 1]) and abs(d0) < abs(d1) and abs(d0) < 10 * resolution):
                    om, gap = _minimize_gap(system, omegas[i - 1], omegas[i + 1], scan["vectors"][i - 1], a, b, n_sub, tol)
                    if gap < gap_accept:
                        kind = _classify(scan["lower_weight"][i, a], scan["lower_weight"][i, b])
                        found.append(Crossing(float(om), a, b, kind, float(gap)))
    found.sort(key=lambda c: c.omega)
    unique: list[Crossing] = []
    for c in found:
        if not any(abs(c.omega - k.omega) < 10 * tol and {c.branch_a, c.branch_b} == {k.branch_a, k.branch_b}
                   for k in unique):
            unique.append(c)
    return unique


def _tracked_pair(system, omega, ref_vecs, a, b, n_sub):
    M, _ = period_propagators(system, [omega], n_sub)
    fr = floquet_phases(M[0], ref_vecs)
    return float(_wrap(fr.phases[a] - fr.phases[b]))


def _bisect_crossing(system, w0, w1, ref, a, b, n_sub, tol):
    # ref: tracked eigenvectors at w0, so branch labels match the scan
    lo, hi = w0, w1
    d_lo = _tracked_pair(system, w0, ref, a, b, n_sub)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        d_mid = _tracked_pair(system, mid, ref, a, b, n_sub)
        if d_mid * d_lo <= 0:
            hi = mid
        else:
            lo, d_lo = mid, d_mid
    mid = 0.5 * (lo + hi)
    return mid, abs(_tracked_pair(system, mid, ref, a, b, n_sub))


def _minimize_gap(system, w0, w1, ref, a, b, n_sub, tol):
    res = minimize_scalar(lambda w: abs(_tracked_pair(system, w, ref, a, b, n_sub)),
                          bounds=(w0, w1), method="bounded", options={"xatol": tol})
    return float(res.x), float(res.fun)


def resonance_frequencies(coeffs: FourModeCoefficients, n_max: int = 5) -> np.ndarray:
    """Parametric resonances omega_n = 2 Delta / n, n = 1..n_max.

    2 Delta is the spacing between the lower and upper doublets; these
    frequencies do not depend on the drive amplitude.
    """
    if not coeffs.Delta > 0:
        raise ValueError("Delta must be positive")
    n = np.arange(1, n_max + 1)
    return 2 * coeffs.Delta / n


def averaged_spectrum(coeffs: FourModeCoefficients, f: float) -> np.ndarray:
    """Slow frequencies nu = +-[delta2 +- sqrt(delta2^2 + f^2 w^2)]/2 at the first resonance (u, delta1 neglected)."""
    d2 = coeffs.delta2
    root = np.sqrt(d2**2 + (f * coeffs.w) ** 2)
    return np.sort(np.array([d2 + root, -(d2 + root), d2 - root, root - d2]) / 2)


def averaged_hamiltonian(coeffs: FourModeCoefficients, f: float, keep_delta1: bool = True) -> np.ndarray:
    """Rotating-wave Hamiltonian at omega = 2 Delta (diagonal drive and u dropped)."""
    s1, s2 = coeffs.tunnel_signs
    H = np.zeros((4, 4), dtype=complex)
    d1 = coeffs.delta1 if keep_delta1 else 0.0
    H[0, 1] = H[1, 0] = s1 * d1
    H[2, 3] = H[3, 2] = s2 * coeffs.delta2
    block = modulation_pattern(0.0, 0.0, 0.0, coeffs.w)[:2, 2:]
    H[:2, 2:] = -0.5j * f * block
    H[2:, :2] = 0.5j * f * block.T
    return H


def integrate_modes(c0, system: FourModeSystem, t_final: float, samples_per_period: int = 64,
                    n_sub: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes c(t) sampled ``samples_per_period`` times per drive period up to ``t_final``.

    The RK4 propagators of one period are reused for every period (the
    Hamiltonian is T-periodic), so the cost is independent of ``t_final``.
    """
    c0 = np.asarray(c0, dtype=complex)
    if abs(np.linalg.norm(c0) - 1) > 1e-12:
        raise ValueError("c0 must be normalised")
    T = 2 * np.pi / system.omega
    M, U = period_propagators(system, [system.omega], n_sub, samples=samples_per_period)
    drift = float(unitarity_residual(M)[0])
    if drift > 1e-6:
        raise StepSizeError(f"norm drift per period {drift:.2e} > 1e-6")
    U = U[:, 0]
    n_periods = int(np.ceil(t_final / T))
    times, values = [], []
    c = c0
    for m in range(n_periods):
        block = U[:-1] @ c
        t = m * T + np.arange(samples_per_period) * T / samples_per_period
        times.append(t)
        values.append(block)
        c = M[0] @ c
    times.append([n_periods * T])
    values.append(c[None])
    times = np.concatenate(times)
    values = np.concatenate(values)
    keep = times <= t_final + 1e-12
    return times[keep], values[keep]


def p_left_fourmode(times: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Running time average of |c_1-|^2 + |c_2-|^2."""
    from .dynamics import time_averaged_left

    p = np.sum(np.abs(c[:, list(LEFT_MODES)]) ** 2, axis=1)
    return time_averaged_left(times, p)


def localization_scan(system: FourModeSystem, omegas, c0, t_final: float = 1000.0, samples: int = 64,
                      n_sub: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """P_<(t_final) of the four-mode model for each omega (batched).

    Returns (p_avg, unitarity residuals).
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    c0 = np.asarray(c0, dtype=complex)
    M, U = period_propagators(system, omegas, n_sub, samples=samples)
    resid = unitarity_residual(M)
    if resid.max() > 1e-6:
        raise StepSizeError(f"monodromy unitarity residual {resid.max():.2e} > 1e-6")
    B = omegas.size
    T = 2 * np.pi / omegas
    full = np.floor(t_final / T).astype(int)
    rem = t_final - full * T
    c = np.broadcast_to(c0, (B, 4)).copy()
    integral = np.zeros(B)
    dtau = T / samples
    weights = np.full(samples + 1, 1.0)
    weights[[0, -1]] = 0.5
    lm = list(LEFT_MODES)
    for m in range(full.max() + 1):
        vals = np.einsum("sbij,bj->sbi", U, c)
        p = np.sum(np.abs(vals[:, :, lm]) ** 2, axis=2)  # (S+1, B)
        active = m < full
        integral += np.where(active, (weights @ p) * dtau, 0.0)
        last = m == full
        if last.any():
            for b in np.flatnonzero(last):
                tau = np.arange(samples + 1) * dtau[b]
                grid_t = np.concatenate([tau[tau < rem[b]], [rem[b]]])
                integral[b] += np.trapezoid(np.interp(grid_t, tau, p[:, b]), grid_t)
        c = np.einsum("bij,bj->bi", M, c)
    return integral / t_final, resid
