from dataclasses import replace

import numpy as np
import pytest

from soctunnel.dynamics import PropagationConfig
from soctunnel.errors import ConfigError, NoFeatureError
from soctunnel.grid import TrapParams
from soctunnel.scanlab import (
    ScanConfig,
    ScanResult,
    compare_backends,
    detect_features,
    frequency_scan,
    gamma_width_scan,
    merge_scans,
    nonlinear_scan,
    refine_edges,
    width_at_level,
)


def _triangle(w, center=1.0, half_base=0.05, top=1.0, floor=0.4):
    return floor + (top - floor) * np.clip(1 - np.abs(w - center) / half_base, 0, None)


def test_width_of_triangular_peak():
    w = np.arange(0.8, 1.2 + 1e-9, 0.001)
    # level 0.7 sits half way up: full width = half_base
    assert width_at_level((w, _triangle(w)), 0.7) == pytest.approx(0.05, abs=1e-9)
    assert width_at_level((w, _triangle(w, half_base=0.03)), 0.7) == pytest.approx(0.03, abs=1e-9)


def test_flat_curve_has_no_feature():
    w = np.linspace(0.5, 1.5, 101)
    with pytest.raises(NoFeatureError):
        width_at_level((w, np.full_like(w, 0.5)), 0.7)
    # a region that runs off the scan is not measurable either
    with pytest.raises(NoFeatureError):
        width_at_level((w, np.where(w > 1.2, 0.9, 0.5)), 0.7)


def test_rightmost_and_widest_selection():
    w = np.arange(0.0, 3.0, 0.001)
    p = np.maximum(_triangle(w, 1.0, 0.2), _triangle(w, 2.0, 0.05))
    assert width_at_level((w, p), which="rightmost") == pytest.approx(0.05, abs=1e-6)
    assert width_at_level((w, p), which="widest") == pytest.approx(0.2, abs=1e-6)
    assert width_at_level((w, p), which="leftmost") == pytest.approx(0.2, abs=1e-6)


def test_spacing_check():
    w = np.arange(0.8, 1.2 + 1e-9, 0.01)
    with pytest.raises(ConfigError):
        width_at_level((w, _triangle(w)), max_spacing=0.005)


def test_detects_gap_dip_and_interior_dip():
    w = np.arange(0.5, 1.5, 0.002)
    p = np.full_like(w, 0.95)
    p[np.abs(w - 1.0) < 0.01] = 0.5  # narrow gap between two peaks
    p = np.where(w < 0.6, 0.3, p)
    p = np.where(w > 1.4, 0.3, p)
    p -= 0.2 * np.exp(-(((w - 0.8) / 0.004) ** 2))  # shallow dip that stays above level
    feats = detect_features(w, p)
    dips = sorted(f.center for f in feats if f.kind == "dip")
    assert len(dips) == 2
    assert dips[0] == pytest.approx(0.8, abs=0.002)
    assert dips[1] == pytest.approx(1.0, abs=0.002)
    peaks = [f for f in feats if f.kind == "peak"]
    assert len(peaks) == 2 and all(f.complete for f in peaks)


def test_wide_gap_is_not_a_dip():
    w = np.arange(0.5, 1.5, 0.002)
    p = np.where((w < 0.7) | (w > 1.2), 0.9, 0.5)
    p[[0, -1]] = 0.3
    assert not [f for f in detect_features(w, p) if f.kind == "dip"]


def test_peak_center_is_refined():
    w = np.arange(0.9, 1.1, 0.01)
    p = 1 - 50 * (w - 1.003) ** 2
    peak = [f for f in detect_features(w, p) if f.kind == "peak"][0]
    assert peak.center == pytest.approx(1.003, abs=1e-9)
    assert peak.complete
    assert peak.width == pytest.approx(2 * np.sqrt(0.3 / 50), abs=2e-3)


def test_nan_points_are_skipped():
    w = np.arange(0.8, 1.2 + 1e-9, 0.001)
    p = _triangle(w)
    p[5] = np.nan
    assert width_at_level((w, p)) == pytest.approx(0.05, abs=1e-9)


def _fourmode_cfg(**kw):
    base = ScanConfig(backend="fourmode", omega_min=1.0, omega_max=1.4, omega_step=0.005,
                      trap=TrapParams(gamma=0.8, f=0.143), propagation=PropagationConfig(t_final=1000.0))
    return replace(base, **kw)


def test_fourmode_scan_is_deterministic():
    cfg = _fourmode_cfg()
    a, b = frequency_scan(cfg), frequency_scan(cfg)
    np.testing.assert_array_equal(a.p, b.p)
    assert a.backend == "fourmode" and a.t_final == 1000.0
    assert np.all((a.p >= 0) & (a.p <= 1))


def test_merge_and_refine():
    cfg = _fourmode_cfg(omega_step=0.02)
    coarse = frequency_scan(cfg)
    fine = refine_edges(cfg, coarse, step=0.005)
    assert set(np.round(coarse.omegas, 9)) <= set(np.round(fine.omegas, 9))
    assert np.all(np.diff(fine.omegas) > 0)
    width_at_level(fine, max_spacing=0.005)
    again = merge_scans(fine, coarse)
    np.testing.assert_array_equal(again.omegas, fine.omegas)


def test_compare_backends_self_is_exact():
    scan = frequency_scan(_fourmode_cfg())
    rep = compare_backends(_fourmode_cfg(), scans=(scan, scan))
    assert rep["pairs"]
    assert all(p["mismatch"] == 0.0 for p in rep["pairs"])
    assert not rep["unmatched_fourmode"] and not rep["unmatched_continuous"]


def test_gamma_width_scan_returns_rows():
    base = _fourmode_cfg()
    rows = gamma_width_scan([0.8], 0.143, base=base)
    assert rows[0][0] == 0.8
    assert 0.05 < rows[0][1] < 0.2


def test_continuous_scan_small():
    cfg = ScanConfig(omegas=(0.6, 1.2), trap=TrapParams(gamma=0.8, f=0.143),
                     propagation=PropagationConfig(t_final=10.0))
    res = frequency_scan(cfg)
    assert res.omegas.tolist() == [0.6, 1.2]
    assert np.all((res.p > 0) & (res.p <= 1))
    assert not res.failures


def test_nonlinear_scan_needs_continuous_backend():
    with pytest.raises(ConfigError):
        nonlinear_scan(_fourmode_cfg(), [0.02])


@pytest.mark.parametrize("changes", [
    {"backend": "spectral"},
    {"omega_min": 0.0},
    {"omega_step": -1.0},
    {"c1": 0, "c2": 0},
    {"batch": 0},
    {"omegas": ()},
])
def test_scan_config_validation(changes):
    with pytest.raises(ConfigError):
        replace(_fourmode_cfg(), **changes).validate()


def test_width_requires_fine_spacing():
    with pytest.raises(ConfigError):
        _fourmode_cfg(omega_step=0.01).validate(for_width=True)


def test_scan_result_accessors():
    w = np.arange(0.8, 1.2 + 1e-9, 0.001)
    p = _triangle(w)
    res = ScanResult(w, p, detect_features(w, p), 1000.0, "fourmode")
    assert len(res.points) == len(w)
    assert len(res.peaks(complete_only=True)) == 1
    assert res.dips() == []
