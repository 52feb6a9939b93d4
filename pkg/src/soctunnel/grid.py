"""Spatial grid, momentum grid and the double-well potential profiles."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Sampling used for propagation. Energies on this grid agree with the finer
# analysis grid to ~1e-6 and dt=0.0025 keeps the kinetic phase per step below pi.
PROPAGATION_POINTS = 256


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -12.0
    x_max: float = 12.0
    n_points: int = 512

    def validate(self) -> None:
        if self.n_points <= 0 or self.n_points % 2:
            raise ConfigError(f"grid.n_points must be a positive even integer, got {self.n_points}")
        if not np.isclose(self.x_min, -self.x_max, rtol=0.0, atol=1e-12 * max(1.0, abs(self.x_max))):
            raise ConfigError(
                f"grid must be symmetric about the origin (x_min = -x_max), got [{self.x_min}, {self.x_max}]"
            )
        if self.x_max <= 0:
            raise ConfigError("grid.x_max must be positive")


@dataclass(frozen=True)
class TrapParams:
    """Double-well trap, spin-orbit coupling and drive parameters.

    ``kinetic`` is the coefficient multiplying p**2 in the static Hamiltonian.
    The default 1.0 is the normalisation under which the published spin
    projections and level-collapse points are recovered; set 0.5 for the
    textbook p**2/2 form.
    """

    U: float = 12.0
    a: float = 0.5
    d: float = 2.5
    omega_rabi: float = 1.0
    gamma: float = 0.8
    f: float = 0.0
    omega_mod: float = 1.0
    kinetic: float = 1.0

    def validate(self) -> None:
        for name in ("U", "a", "d", "omega_mod", "kinetic"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"trap.{name} must be > 0, got {getattr(self, name)}")
        if self.gamma < 0:
            raise ConfigError(f"trap.gamma must be >= 0, got {self.gamma}")
        if self.f < 0:
            raise ConfigError(f"trap.f must be >= 0, got {self.f}")
        if self.f > 0.3:
            warnings.warn(
                f"modulation amplitude f={self.f} is not small; four-mode comparisons degrade",
                stacklevel=2,
            )


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid; ``k`` follows the numpy FFT ordering."""

    spec: GridSpec
    x: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)
    dx: float

    @property
    def n(self) -> int:
        return self.spec.n_points

    @property
    def parity_index(self) -> np.ndarray:
        """Index map j -> j' with x[j'] = -x[j] (x_min maps to itself by periodicity)."""
        return (-np.arange(self.n)) % self.n

    def left_weights(self) -> np.ndarray:
        """Quadrature weights of the x<0 half-line; x=0 gets half weight."""
        w = np.where(self.x < 0, 1.0, 0.0)
        w[np.isclose(self.x, 0.0, atol=1e-12 * self.dx)] = 0.5
        return w * self.dx


def build_grid(spec: GridSpec) -> Grid:
    spec.validate()
    n = spec.n_points
    dx = (spec.x_max - spec.x_min) / n
    x = spec.x_min + dx * np.arange(n)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    x.setflags(write=False)
    k.setflags(write=False)
    return Grid(spec=spec, x=x, k=k, dx=dx)


def single_well(x, U: float, a: float):
    """Super-Gaussian well -U exp(-x^6/a^6)."""
    return -U * np.exp(-((np.asarray(x, dtype=float) / a) ** 6))


@dataclass(frozen=True, eq=False)
class PotentialPair:
    v_static: np.ndarray
    v_mod: np.ndarray
    v_left: np.ndarray
    v_right: np.ndarray

    def total(self, t: float, f: float, omega: float) -> np.ndarray:
        return self.v_static + f * np.sin(omega * t) * self.v_mod


def double_well(grid: Grid, trap: TrapParams) -> PotentialPair:
    """Static trap V = V_- + V_+ and the out-of-phase modulation profile V_+ - V_-."""
    trap.validate()
    v_left = single_well(grid.x + trap.d / 2, trap.U, trap.a)
    v_right = single_well(grid.x - trap.d / 2, trap.U, trap.a)
    v_static = v_left + v_right
    if v_static[grid.n // 2] < -trap.U * (1 + 1e-12):
        raise ConfigError(
            f"wells overlap so strongly that V(0) < -U (d={trap.d}, a={trap.a}); degenerate configuration"
        )
    if abs(v_static[0]) > 1e-12 * trap.U:
        raise ConfigError(f"potential not negligible at the grid boundary: |V(x_min)|/U = {abs(v_static[0]) / trap.U:.3g}")
    v_mod = v_right - v_left
    for arr in (v_left, v_right, v_static, v_mod):
        arr.setflags(write=False)
    return PotentialPair(v_static=v_static, v_mod=v_mod, v_left=v_left, v_right=v_right)


def write_potential_csv(path, grid: Grid, potentials: PotentialPair) -> None:
    from .io import write_csv

    write_csv(path, ["x", "v_static", "v_mod"], [grid.x, potentials.v_static, potentials.v_mod])
