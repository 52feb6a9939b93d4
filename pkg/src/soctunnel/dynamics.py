"""Split-step propagation of the driven spinor Schroedinger / Gross-Pitaevskii model.

    i dPsi/dt = [H0 + f sin(omega t) (V_+ - V_-)] Psi + g (Psi^dagger Psi) Psi

The propagator is batched: the leading axis of the wavefunction array
indexes independent runs that share the static Hamiltonian but may differ in
drive frequency, drive amplitude and interaction strength.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, PropagationError
from .grid import Grid, PotentialPair, TrapParams
from .stationary import StationarySet, odd_wavenumbers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.0025
    t_final: float = 1000.0
    sample_every: int = 40
    g: float = 0.0

    def validate(self, grid: Grid | None = None, trap: TrapParams | None = None) -> None:
        if not self.dt > 0 or not self.t_final > 0:
            raise ConfigError("propagation.dt and propagation.t_final must be > 0")
        if self.sample_every < 1:
            raise ConfigError("propagation.sample_every must be a positive integer")
        if grid is not None and trap is not None:
            phase = self.dt * np.max(trap.kinetic * grid.k**2 + trap.gamma * np.abs(grid.k))
            if phase >= np.pi:
                raise ConfigError(
                    f"kinetic phase per step dt*max(c k^2 + gamma|k|) = {phase:.3f} >= pi; "
                    "reduce propagation.dt or grid resolution"
                )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    norm: np.ndarray
    p_left: np.ndarray
    p_left_avg: np.ndarray
    spins: np.ndarray  # (n_samples, 3)
    mode_amplitudes: np.ndarray | None = field(default=None, repr=False)
    continuum_residual: np.ndarray | None = None
    failed_step: int | None = None

    @property
    def final_p_left_avg(self) -> float:
        return float(self.p_left_avg[-1])

    def columns(self) -> tuple[list[str], list[np.ndarray]]:
        header = ["t", "norm", "p_left", "p_left_avg", "Sx", "Sy", "Sz"]
        cols = [self.times, self.norm, self.p_left, self.p_left_avg, *self.spins.T]
        if self.mode_amplitudes is not None:
            header += ["|c1m|^2", "|c1p|^2", "|c2m|^2", "|c2p|^2", "residual"]
            cols += [*(np.abs(self.mode_amplitudes) ** 2).T, self.continuum_residual]
        return header, cols


# -- observables ------------------------------------------------------------

def left_probability(psi: np.ndarray, grid: Grid) -> float:
    """Probability on x < 0, trapezoidal with half weight at x = 0."""
    return float(np.sum(np.abs(psi) ** 2, axis=0) @ grid.left_weights())


def time_averaged_left(times: np.ndarray, p_left: np.ndarray) -> np.ndarray:
    """Running mean (1/t) int_0^t p(t') dt' by the trapezoidal rule; P(0) = p(0)."""
    times = np.asarray(times, dtype=float)
    p_left = np.asarray(p_left, dtype=float)
    incr = 0.5 * (p_left[1:] + p_left[:-1]) * np.diff(times)
    integral = np.concatenate([[0.0], np.cumsum(incr)])
    out = np.empty_like(p_left)
    out[0] = p_left[0]
    elapsed = times[1:] - times[0]
    out[1:] = integral[1:] / elapsed
    return out


def spin_trajectory(traj: Trajectory) -> np.ndarray:
    return traj.spins


def mode_amplitudes(psi: np.ndarray, basis: np.ndarray, t: float, E0: float, dx: float) -> tuple[np.ndarray, float]:
    """Amplitudes c = e^{i E0 t} <i alpha|psi> on (1-, 1+, 2-, 2+) and 1 - sum |c|^2."""
    c = np.exp(1j * E0 * t) * np.einsum("aci,ci->a", basis.conj(), psi) * dx
    residual = 1.0 - float(np.sum(np.abs(c) ** 2))
    return c, max(residual, 0.0)


def energy(psi: np.ndarray, grid: Grid, trap: TrapParams, potentials: PotentialPair) -> float:
    """<psi|H0|psi> evaluated spectrally."""
    psi_k = np.fft.fft(psi, axis=-1)
    k = grid.k
    kodd = odd_wavenumbers(grid)
    n = grid.n
    kin = trap.kinetic * k**2
    t_kin = (np.sum(np.abs(psi_k[0]) ** 2 * (kin - trap.gamma * kodd))
             + np.sum(np.abs(psi_k[1]) ** 2 * (kin + trap.gamma * kodd))) * grid.dx / n
    v = np.sum(np.abs(psi) ** 2 * potentials.v_static) * grid.dx
    s = 2 * trap.omega_rabi * np.real(np.vdot(psi[0], psi[1])) * grid.dx
    return float(t_kin + v + s)


# -- propagator ---------------------------------------------------------------

@numba.njit(cache=True)
def _position_kernel(psi, rot_diag, rot_off, theta, support, vmod_support, gdt):  # pragma: no cover
    # in place: nonlinear phase from the incoming density, Zeeman rotation
    # with the static phase, then the drive phase on its support
    B, _, n = psi.shape
    for b in range(B):
        for i in range(n):
            a = psi[b, 0, i]
            c = psi[b, 1, i]
            d = rot_diag[i]
            o = rot_off[i]
            if gdt[b] != 0.0:
                ph = gdt[b] * (a.real * a.real + a.imag * a.imag + c.real * c.real + c.imag * c.imag)
                e = complex(np.cos(ph), -np.sin(ph))
                d = d * e
                o = o * e
            psi[b, 0, i] = d * a + o * c
            psi[b, 1, i] = d * c + o * a
        if theta[b] != 0.0:
            for j in range(support.size):
                i = support[j]
                ph = theta[b] * vmod_support[j]
                e = complex(np.cos(ph), -np.sin(ph))
                psi[b, 0, i] *= e
                psi[b, 1, i] *= e


@numba.njit(cache=True)
def _multiply_components(psi, factor):  # pragma: no cover
    B, _, n = psi.shape
    for b in range(B):
        for s in range(2):
            for i in range(n):
                psi[b, s, i] *= factor[s, i]


class SplitStepPropagator:
    """Strang splitting: kinetic/SOC half-step, potential + Zeeman step, kinetic/SOC half-step.

    The kinetic factor exp(-i(c k^2 -+ gamma k) dt/2) is exact in Fourier space
    (upper sign for the first component).  The position-space factor
    exp(-i[V + f sin(omega t_mid) Vmod + g rho] dt) (cos(Omega dt) - i sin(Omega dt) sigma_x)
    is exact because the scalar phase commutes with sigma_x and rho is
    invariant under it.
    """

    def __init__(self, grid: Grid, trap: TrapParams, potentials: PotentialPair, dt: float,
                 omegas=None, fs=None, gs=None):
        self.grid = grid
        self.trap = trap
        self.potentials = potentials
        self.dt = float(dt)
        omegas = np.atleast_1d(np.asarray(trap.omega_mod if omegas is None else omegas, dtype=float))
        size = omegas.size
        for arr in (fs, gs):
            if arr is not None:
                size = max(size, np.atleast_1d(arr).size)
        self.omegas = np.broadcast_to(omegas, (size,)).copy()
        self.fs = np.broadcast_to(np.asarray(trap.f if fs is None else fs, dtype=float), (size,)).copy()
        self.gs = np.broadcast_to(np.asarray(0.0 if gs is None else gs, dtype=float), (size,)).copy()
        self.batch = size
        self.nonlinear = bool(np.any(self.gs != 0.0))

        kin = trap.kinetic * grid.k**2
        kodd = odd_wavenumbers(grid)
        disp = np.stack([kin - trap.gamma * kodd, kin + trap.gamma * kodd])
        self._kin_half = np.exp(-0.5j * dt * disp)
        self._kin_full = np.exp(-1j * dt * disp)
        static_phase = np.exp(-1j * dt * potentials.v_static)
        self._rot_diag = static_phase * np.cos(trap.omega_rabi * dt)
        self._rot_off = -1j * static_phase * np.sin(trap.omega_rabi * dt)
        # drive acts only where the modulation profile is representable
        vmod = np.asarray(potentials.v_mod)
        self._support = np.flatnonzero(np.abs(vmod) > 1e-18 * trap.U)
        self._vmod_support = np.ascontiguousarray(vmod[self._support])
        self._gdt = self.dt * self.gs

    def _kinetic(self, psi: np.ndarray, factor: np.ndarray) -> np.ndarray:
        psi = sfft.fft(psi, axis=-1, overwrite_x=True)
        _multiply_components(psi, factor)
        return sfft.ifft(psi, axis=-1, overwrite_x=True)

    def _position(self, psi: np.ndarray, t_mid: float) -> np.ndarray:
        theta = self.dt * self.fs * np.sin(self.omegas * t_mid)
        _position_kernel(psi, self._rot_diag, self._rot_off, theta, self._support,
                         self._vmod_support, self._gdt)
        return psi

    def step(self, psi: np.ndarray, t: float) -> np.ndarray:
        """One full Strang step from t to t + dt; ``psi`` has shape (batch, 2, n) or (2, n)."""
        single = psi.ndim == 2
        if single:
            psi = psi[None]
        psi = np.array(psi, dtype=complex, copy=True)
        psi = self._kinetic(psi, self._kin_half)
        psi = self._position(psi, t + 0.5 * self.dt)
        psi = self._kinetic(psi, self._kin_half)
        return psi[0] if single else psi

    def run(self, psi0: np.ndarray, n_steps: int, sample_every: int, observer, t0: float = 0.0) -> np.ndarray:
        """Advance ``n_steps`` steps, calling ``observer(step, t, psi)`` at every sample.

        Interior kinetic half-steps are fused; the state handed to the observer
        is the exact Strang iterate.
        """
        psi = np.array(psi0, dtype=complex, copy=True)
        if psi.ndim == 2:
            psi = np.broadcast_to(psi, (self.batch,) + psi.shape).copy()
        observer(0, t0, psi)
        step = 0
        while step < n_steps:
            chunk = min(sample_every, n_steps - step)
            psi = self._kinetic(psi, self._kin_half)
            for j in range(chunk):
                t_mid = t0 + (step + j + 0.5) * self.dt
                psi = self._position(psi, t_mid)
                psi = self._kinetic(psi, self._kin_full if j < chunk - 1 else self._kin_half)
            step += chunk
            observer(step, t0 + step * self.dt, psi)
        return psi


class _Recorder:
    def __init__(self, grid: Grid, batch: int, n_samples: int, basis=None, E0: float = 0.0):
        self.grid = grid
        self.weights = grid.left_weights()
        self.basis = basis
        self.E0 = E0
        self.times = np.empty(n_samples)
        self.norm = np.empty((batch, n_samples))
        self.p_left = np.empty((batch, n_samples))
        self.spins = np.empty((batch, n_samples, 3))
        self.modes = None if basis is None else np.empty((batch, n_samples, 4), dtype=complex)
        self.failed = np.full(batch, -1)
        self.i = 0

    def __call__(self, step: int, t: float, psi: np.ndarray) -> None:
        i = self.i
        dx = self.grid.dx
        dens = psi.real**2 + psi.imag**2
        finite = np.isfinite(dens).all(axis=(1, 2))
        if not finite.all():
            for b in np.flatnonzero(~finite & (self.failed < 0)):
                log.warning("batch member %d became non-finite at step %d", b, step)
                self.failed[b] = step
            psi[~finite] = 0.0
            dens[~finite] = 0.0
        total = dens[:, 0] + dens[:, 1]
        self.times[i] = t
        self.norm[:, i] = total.sum(axis=1) * dx
        self.p_left[:, i] = total @ self.weights
        cross = np.einsum("bi,bi->b", psi[:, 0].conj(), psi[:, 1]) * dx
        self.spins[:, i, 0] = cross.real
        self.spins[:, i, 1] = cross.imag
        self.spins[:, i, 2] = 0.5 * (dens[:, 0].sum(axis=1) - dens[:, 1].sum(axis=1)) * dx
        if self.basis is not None:
            self.modes[:, i] = np.exp(1j * self.E0 * t) * np.einsum("aci,bci->ba", self.basis.conj(), psi) * dx
        self.i += 1

    def trajectories(self) -> list[Trajectory]:
        out = []
        for b in range(self.norm.shape[0]):
            p = self.p_left[b]
            modes = None if self.modes is None else self.modes[b]
            resid = None if modes is None else np.maximum(1.0 - np.sum(np.abs(modes) ** 2, axis=1), 0.0)
            out.append(
                Trajectory(
                    times=self.times.copy(),
                    norm=self.norm[b].copy(),
                    p_left=p.copy(),
                    p_left_avg=time_averaged_left(self.times, p),
                    spins=self.spins[b].copy(),
                    mode_amplitudes=modes,
                    continuum_residual=resid,
                    failed_step=None if self.failed[b] < 0 else int(self.failed[b]),
                )
            )
        return out


def evolve_batch(psi0: np.ndarray, cfg: PropagationConfig, stationary: StationarySet, omegas=None, fs=None,
                 gs=None, record_modes: bool = False) -> list[Trajectory]:
    """Propagate ``psi0`` once per batch member (omega, f, g combinations)."""
    grid, trap = stationary.grid, stationary.trap
    cfg.validate(grid, trap)
    prop = SplitStepPropagator(grid, trap, stationary.potentials, cfg.dt, omegas=omegas, fs=fs,
                               gs=cfg.g if gs is None else gs)
    n_steps = cfg.n_steps
    n_samples = -(-n_steps // cfg.sample_every) + 1
    basis = stationary.well_basis if record_modes else None
    rec = _Recorder(grid, prop.batch, n_samples, basis=basis, E0=stationary.E0)
    prop.run(psi0, n_steps, cfg.sample_every, rec)
    return rec.trajectories()


def evolve(psi0: np.ndarray, cfg: PropagationConfig, stationary: StationarySet, record_modes: bool = True) -> Trajectory:
    """Single propagation with the trap's own (f, omega_mod) and ``cfg.g``."""
    traj = evolve_batch(psi0, cfg, stationary, record_modes=record_modes)[0]
    if traj.failed_step is not None:
        raise PropagationError(traj.failed_step)
    return traj


def initial_state(stationary: StationarySet, c1: complex = 1.0, c2: complex = 0.0, side: str = "-") -> np.ndarray:
    """Normalised c1 |1 side> + c2 |2 side> from the well basis."""
    if stationary.well_basis is None:
        raise ValueError("stationary set has no well basis")
    offset = 0 if side == "-" else 1
    psi = c1 * stationary.well_basis[offset] + c2 * stationary.well_basis[2 + offset]
    nrm = np.sqrt(np.sum(np.abs(psi) ** 2) * stationary.grid.dx)
    if nrm == 0:
        raise ConfigError("initial-state coefficients are both zero")
    return psi / nrm
