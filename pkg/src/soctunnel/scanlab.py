"""Frequency, gamma and interaction sweeps with peak/dip/width extraction.

Both backends report the time-averaged left-well probability P_<(t_final)
for each drive frequency. Features are measured at a fixed probability level
(0.7 by default):

* a peak is a maximal run of scan points with P >= level; its width is the
  distance between the linearly interpolated level crossings. Runs touching
  either end of the scan are kept but flagged ``complete=False`` and are not
  used for width measurements.
* a dip is a narrow run of points below the level enclosed by two peaks
  (center = midpoint of the interpolated crossings), or a local minimum inside
  a peak with prominence >= ``dip_prominence`` (center = the minimum).
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dynamics import PropagationConfig, evolve_batch, initial_state
from .errors import ConfigError, NoFeatureError
from .fourmode import assemble, localization_scan
from .grid import PROPAGATION_POINTS, GridSpec, TrapParams
from .stationary import four_mode_coefficients, solve_stationary

log = logging.getLogger(__name__)

LEVEL = 0.7
WIDTH_STEP = 0.005
BACKENDS = ("continuous", "fourmode")


@dataclass(frozen=True)
class ScanConfig:
    """One frequency sweep.

    ``grid`` is the continuous-model propagation grid; the four-mode
    coefficients are always taken from ``analysis_grid``. ``omegas`` overrides
    the uniform grid built from ``omega_min/omega_max/omega_step``.
    """

    backend: str = "continuous"
    omega_min: float = 0.6
    omega_max: float = 0.7
    omega_step: float = 0.002
    c1: complex = 1.0
    c2: complex = 0.0
    trap: TrapParams = field(default_factory=TrapParams)
    grid: GridSpec = field(default_factory=lambda: GridSpec(n_points=PROPAGATION_POINTS))
    analysis_grid: GridSpec = field(default_factory=GridSpec)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    omegas: tuple[float, ...] | None = None
    workers: int = 1
    batch: int = 16

    @property
    def t_final(self) -> float:
        return self.propagation.t_final

    def omega_grid(self) -> np.ndarray:
        if self.omegas is not None:
            return np.unique(np.asarray(self.omegas, dtype=float))
        n = int(np.floor((self.omega_max - self.omega_min) / self.omega_step + 1e-9)) + 1
        return self.omega_min + self.omega_step * np.arange(n)

    def input_coefficients(self) -> tuple[complex, complex]:
        nrm = np.hypot(abs(self.c1), abs(self.c2))
        return complex(self.c1) / nrm, complex(self.c2) / nrm

    def validate(self, for_width: bool = False) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"scan.backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.omegas is None:
            if not (0 < self.omega_min <= self.omega_max) or not self.omega_step > 0:
                raise ConfigError("scan requires 0 < omega_min <= omega_max and omega_step > 0")
            if for_width and self.omega_step > WIDTH_STEP:
                raise ConfigError(f"scan.omega_step must be <= {WIDTH_STEP} for width measurements")
        elif len(self.omegas) == 0 or min(self.omegas) <= 0:
            raise ConfigError("explicit scan frequencies must be positive and non-empty")
        if abs(self.c1) == 0 and abs(self.c2) == 0:
            raise ConfigError("input state needs a non-zero amplitude")
        if self.workers < 1 or self.batch < 1:
            raise ConfigError("scan.workers and scan.batch must be >= 1")
        self.trap.validate()
        self.grid.validate()
        self.analysis_grid.validate()


@dataclass(frozen=True)
class Feature:
    kind: str  # "peak" or "dip"
    center: float
    value: float
    level: float
    width: float | None = None
    lo: float | None = None
    hi: float | None = None
    complete: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class ScanResult:
    omegas: np.ndarray
    p: np.ndarray
    features: list[Feature]
    t_final: float
    backend: str
    failures: dict[float, str] = field(default_factory=dict)
    level: float = LEVEL

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.omegas.tolist(), self.p.tolist()))

    def peaks(self, complete_only: bool = False) -> list[Feature]:
        return [f for f in self.features if f.kind == "peak" and (f.complete or not complete_only)]

    def dips(self) -> list[Feature]:
        return [f for f in self.features if f.kind == "dip"]


def _crossing(w0, p0, w1, p1, level):
    return w0 + (level - p0) * (w1 - w0) / (p1 - p0)


def _parabolic_center(w: np.ndarray, p: np.ndarray, i: int) -> float:
    if i == 0 or i == len(w) - 1:
        return float(w[i])
    x, y = w[i - 1:i + 2], p[i - 1:i + 2]
    denom = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
    A = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / denom
    Bc = (x[2] ** 2 * (y[0] - y[1]) + x[1] ** 2 * (y[2] - y[0]) + x[0] ** 2 * (y[1] - y[2])) / denom
    if A >= 0:
        return float(w[i])
    return float(np.clip(-Bc / (2 * A), x[0], x[2]))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of consecutive True entries."""
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def detect_features(omegas, p, level: float = LEVEL, dip_prominence: float = 0.1,
                    max_dip_rel_width: float = 0.15) -> list[Feature]:
    """Peaks and dips of a P_<(omega) curve sorted by center."""
    w = np.asarray(omegas, dtype=float)
    p = np.asarray(p, dtype=float)
    ok = np.isfinite(p)
    w, p = w[ok], p[ok]
    features: list[Feature] = []
    if w.size == 0:
        return features
    above = p >= level
    peak_runs = _runs(above)
    n = len(w)
    for i0, i1 in peak_runs:
        lo = _crossing(w[i0 - 1], p[i0 - 1], w[i0], p[i0], level) if i0 > 0 else float(w[0])
        hi = _crossing(w[i1], p[i1], w[i1 + 1], p[i1 + 1], level) if i1 < n - 1 else float(w[-1])
        complete = bool(i0 > 0 and i1 < n - 1)
        k = i0 + int(np.argmax(p[i0:i1 + 1]))
        features.append(Feature("peak", _parabolic_center(w, p, k), float(p[k]), level,
                                width=float(hi - lo), lo=float(lo), hi=float(hi), complete=complete))
        # shallow dips that stay above the level
        for j in range(i0 + 1, i1):
            if p[j] < p[j - 1] and p[j] <= p[j + 1]:
                left, right = p[i0:j].max(), p[j + 1:i1 + 1].max()
                if min(left, right) - p[j] >= dip_prominence:
                    features.append(Feature("dip", float(w[j]), float(p[j]), level))
    for (a0, a1), (b0, b1) in zip(peak_runs[:-1], peak_runs[1:]):
        g0, g1 = a1 + 1, b0 - 1  # sub-level run between two peaks
        lo = _crossing(w[a1], p[a1], w[g0], p[g0], level)
        hi = _crossing(w[g1], p[g1], w[b0], p[b0], level)
        center = 0.5 * (lo + hi)
        if hi - lo <= max_dip_rel_width * center:
            features.append(Feature("dip", float(center), float(p[g0:g1 + 1].min()), level,
                                    width=float(hi - lo), lo=float(lo), hi=float(hi)))
    features.sort(key=lambda f: f.center)
    return features


def width_at_level(scan, level: float = LEVEL, which: str = "rightmost",
                   max_spacing: float | None = None) -> float:
    """Full width of a complete region with P >= level.

    ``scan`` is a ScanResult or an (omegas, p) pair; ``which`` is
    "rightmost", "leftmost" or "widest". With ``max_spacing`` the scan
    spacing next to both level crossings is checked.
    """
    w, p = (scan.omegas, scan.p) if isinstance(scan, ScanResult) else map(np.asarray, scan)
    peaks = [f for f in detect_features(w, p, level) if f.kind == "peak" and f.complete]
    if not peaks:
        raise NoFeatureError(f"no suppression feature: no complete region with P >= {level}")
    if which == "rightmost":
        feat = max(peaks, key=lambda f: f.hi)
    elif which == "leftmost":
        feat = min(peaks, key=lambda f: f.lo)
    elif which == "widest":
        feat = max(peaks, key=lambda f: f.width)
    else:
        raise ValueError(f"unknown selector {which!r}")
    if max_spacing is not None:
        w = np.asarray(w, dtype=float)
        for edge in (feat.lo, feat.hi):
            j = np.searchsorted(w, edge)
            if w[j] - w[j - 1] > max_spacing * (1 + 1e-9):
                raise ConfigError(f"scan spacing {w[j] - w[j - 1]:.4g} at omega={edge:.4f} exceeds {max_spacing}")
    return float(feat.width)


def _continuous_chunk(args) -> tuple[np.ndarray, list[int | None]]:
    cfg, omegas = args
    stat = solve_stationary(cfg.trap, cfg.grid)
    c1, c2 = cfg.input_coefficients()
    psi0 = initial_state(stat, c1, c2)
    trajs = evolve_batch(psi0, cfg.propagation, stat, omegas=omegas, fs=cfg.trap.f, gs=cfg.propagation.g,
                         record_modes=False)
    return np.array([t.final_p_left_avg for t in trajs]), [t.failed_step for t in trajs]


def _scan_continuous(cfg: ScanConfig, omegas: np.ndarray) -> tuple[np.ndarray, dict]:
    chunks = [omegas[i:i + cfg.batch] for i in range(0, omegas.size, cfg.batch)]
    jobs = [(cfg, c) for c in chunks]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_continuous_chunk, jobs))
    else:
        results = [_continuous_chunk(j) for j in jobs]
    p = np.concatenate([r[0] for r in results])
    failed = [s for r in results for s in r[1]]
    failures = {}
    for w, s in zip(omegas, failed):
        if s is not None:
            failures[float(w)] = f"non-finite wavefunction at step {s}"
    p[[s is not None for s in failed]] = np.nan
    return p, failures


def _scan_fourmode(cfg: ScanConfig, omegas: np.ndarray) -> tuple[np.ndarray, dict]:
    coeffs = four_mode_coefficients(solve_stationary(cfg.trap, cfg.analysis_grid))
    c1, c2 = cfg.input_coefficients()
    system = assemble(coeffs, cfg.trap.f)
    # moderate batches keep the RK4 substep count tied to the local period
    p = np.empty(omegas.size)
    for i in range(0, omegas.size, 64):
        p[i:i + 64], _ = localization_scan(system, omegas[i:i + 64], [c1, 0, c2, 0], cfg.t_final)
    return p, {}


def frequency_scan(cfg: ScanConfig, level: float = LEVEL) -> ScanResult:
    """P_<(t_final) on the scan frequencies with features extracted."""
    cfg.validate()
    omegas = cfg.omega_grid()
    if cfg.backend == "continuous":
        p, failures = _scan_continuous(cfg, omegas)
    else:
        p, failures = _scan_fourmode(cfg, omegas)
    for w, msg in failures.items():
        log.warning("scan point omega=%.6f failed: %s", w, msg)
    return ScanResult(omegas, p, detect_features(omegas, p, level), cfg.t_final, cfg.backend, failures, level)


def merge_scans(*scans: ScanResult) -> ScanResult:
    """Union of scans of the same configuration (later scans win on duplicates)."""
    w = np.concatenate([s.omegas for s in scans])
    p = np.concatenate([s.p for s in scans])
    rounded = np.round(w, 12)
    _, idx = np.unique(rounded[::-1], return_index=True)
    idx = len(w) - 1 - idx
    order = np.argsort(w[idx])
    w, p = w[idx][order], p[idx][order]
    failures = {}
    for s in scans:
        failures.update(s.failures)
    level = scans[0].level
    return ScanResult(w, p, detect_features(w, p, level), scans[0].t_final, scans[0].backend, failures, level)


def refine_edges(cfg: ScanConfig, scan: ScanResult, step: float = WIDTH_STEP,
                 which: str = "rightmost") -> ScanResult:
    """Rescan around both level crossings of the selected peak at spacing ``step``."""
    peaks = scan.peaks(complete_only=True)
    if not peaks:
        raise NoFeatureError("no complete peak to refine")
    feat = max(peaks, key=lambda f: f.hi) if which == "rightmost" else max(peaks, key=lambda f: f.width)
    w = scan.omegas
    extra = []
    for edge in (feat.lo, feat.hi):
        j = int(np.searchsorted(w, edge))
        a, b = w[max(j - 1, 0)], w[min(j, len(w) - 1)]
        n = max(int(np.ceil((b - a) / step - 1e-9)), 1)
        extra.extend(a + (b - a) * np.arange(1, n) / n)
    if not extra:
        return scan
    sub = frequency_scan(replace(cfg, omegas=tuple(extra)), scan.level)
    return merge_scans(scan, sub)


def gamma_width_scan(gamma_list, f: float, backend: str = "fourmode", base: ScanConfig | None = None,
                     level: float = LEVEL) -> list[tuple[float, float]]:
    """Rightmost-peak width at ``level`` versus gamma; NaN where no feature exists."""
    base = base or ScanConfig(backend=backend, omega_min=0.3, omega_max=2.6, omega_step=0.002)
    rows = []
    for gamma in gamma_list:
        cfg = replace(base, backend=backend, trap=replace(base.trap, gamma=float(gamma), f=float(f)))
        scan = frequency_scan(cfg, level)
        try:
            width = width_at_level(scan, level)
        except NoFeatureError:
            width = float("nan")
        rows.append((float(gamma), width))
    return rows


def nonlinear_scan(cfg: ScanConfig, g_list, level: float = LEVEL) -> dict[float, ScanResult]:
    """Continuous scans for each interaction strength; g = 0 is always included."""
    if cfg.backend != "continuous":
        raise ConfigError("nonlinear_scan requires the continuous backend")
    gs = sorted(set(float(g) for g in g_list) | {0.0})
    return {g: frequency_scan(replace(cfg, propagation=replace(cfg.propagation, g=g)), level) for g in gs}


def compare_backends(cfg: ScanConfig, scans: tuple[ScanResult, ScanResult] | None = None,
                     max_rel: float = 0.1) -> dict:
    """Pair peaks of the two backends by proximity and report relative mismatch.

    ``scans`` may hold precomputed (fourmode, continuous) results on the same
    frequencies. Mismatch is (continuous - fourmode) / fourmode.
    """
    if scans is None:
        four = frequency_scan(replace(cfg, backend="fourmode"))
        cont = frequency_scan(replace(cfg, backend="continuous"))
    else:
        four, cont = scans
    fp, cp = four.peaks(), cont.peaks()
    pairs, used = [], set()
    for a in fp:
        best = None
        for j, b in enumerate(cp):
            rel = (b.center - a.center) / a.center
            if j not in used and abs(rel) <= max_rel and (best is None or abs(rel) < abs(best[1])):
                best = (j, rel)
        if best is not None:
            used.add(best[0])
            pairs.append({"fourmode": a.center, "continuous": cp[best[0]].center, "mismatch": best[1]})
    matched_four = {p["fourmode"] for p in pairs}
    return {
        "pairs": pairs,
        "unmatched_fourmode": [a.center for a in fp if a.center not in matched_four],
        "unmatched_continuous": [b.center for j, b in enumerate(cp) if j not in used],
        "fourmode_max": float(four.omegas[np.nanargmax(four.p)]),
        "continuous_max": float(cont.omegas[np.nanargmax(cont.p)]),
    }


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SOCTUNNEL_WORKERS", "1")))
    except ValueError:
        return 1
