import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimlab.oracles import gaussian_curve
from dimlab.process_models import ContinuousSpec, ProcessSpec, discrete_spec, uniform_spec
from dimlab.rd_solver import RDCurve, RDPoint, log_s_grid, rd_curve
from dimlab.rdd_estimator import (FitWindow, WindowError, fit_rdd, fit_report, increment_curve,
                                  rdd_of_process, report_json, select_window)


def curve_from(D, R, m=1, cell=0.0, var=math.inf):
    pts = [RDPoint(-1.0, float(d), float(r), 0, 0.0) for d, r in zip(D, R)]
    return RDCurve(pts, m, 0, math.inf, cell_width=cell, variance=var)


def dyadic(k=range(3, 13)):
    k = np.array(list(k))
    return np.ldexp(1.0, -k), k


def test_exact_line_any_window():
    D, k = dyadic()
    curve = curve_from(D, 0.5 * k + 3)
    win = select_window(curve)
    assert win.D_min == D.min() and win.D_max == D.max()
    est = fit_rdd(curve, win)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert est.method == "rdd_fit"


def test_flat_curve_gives_zero():
    D, _ = dyadic()
    curve = curve_from(D, np.full(len(D), 2.0))
    assert fit_rdd(curve, select_window(curve)).value == pytest.approx(0.0, abs=1e-12)


def test_window_respects_discretization_floor():
    D, k = dyadic(range(2, 20))
    curve = curve_from(D, 0.5 * k, cell=2.0**-8)
    win = select_window(curve, safety_factor=100)
    assert win.D_min >= 100 * 2.0**-16
    assert win.excluded_points > 0


def test_window_stops_at_slope_change():
    D, k = dyadic(range(2, 14))
    R = np.where(k >= 8, 0.5 * k, 0.5 * 8 + 0.1 * (k - 8))
    win = select_window(curve_from(D, R))
    # slope is 0.5 up to D = 2**-8, then bends
    assert win.D_max <= 2.0**-7


def test_window_failures():
    D, k = dyadic(range(3, 6))
    with pytest.raises(WindowError):
        select_window(curve_from(D, 0.5 * k))
    D, k = dyadic(range(2, 10))
    with pytest.raises(WindowError):
        select_window(curve_from(D, 0.5 * k, cell=0.5))
    with pytest.raises(WindowError):
        fit_rdd(curve_from(D, 0.5 * k), FitWindow(1e-9, 2e-9))
    with pytest.raises(ValueError):
        FitWindow(0.1, 0.01)


@settings(max_examples=40, deadline=None)
@given(shift=st.integers(-64, 64), scale_exp=st.integers(-10, 10),
       noise=st.lists(st.integers(0, 31), min_size=8, max_size=8))
def test_intercept_and_rescaling_are_exact(shift, scale_exp, noise):
    D, k = dyadic(range(4, 12))
    R = 0.5 * k + np.array(noise) / 32.0
    win = FitWindow(float(D.min()), float(D.max()), "manual")
    ref = fit_rdd(curve_from(D, R), win).value
    assert fit_rdd(curve_from(D, R + shift / 4.0), win).value == ref
    a = 2.0**scale_exp
    win_a = FitWindow(win.D_min * a, win.D_max * a, "manual")
    assert fit_rdd(curve_from(D * a, R), win_a).value == ref


def test_gaussian_oracle_curve_has_dimension_one():
    D = np.geomspace(1e-5, 1e-2, 12)
    oc = gaussian_curve(1.0)
    curve = curve_from(D, oc.evaluate(D))
    assert fit_rdd(curve, select_window(curve)).value == pytest.approx(1.0, abs=1e-10)


def test_increment_of_parallel_lines():
    D, k = dyadic(range(3, 12))
    two = curve_from(D, 0.3 * k + 1, m=2)
    one = curve_from(D, 0.5 * k, m=1)
    inc = increment_curve(two, one)
    # 2 * 0.3 - 0.5 = 0.1 bits per halving of D
    assert fit_rdd(inc, select_window(inc)).value == pytest.approx(0.2, abs=1e-12)
    with pytest.raises(ValueError):
        increment_curve(two, two)


def test_gaussian_window_within_expected_band():
    spec = ProcessSpec("iid_continuous", continuous=ContinuousSpec(
        "truncated_gaussian", -4.0, 4.0, {"mean": 0.0, "std": 1.0}))
    curve = rd_curve(spec, 1, 512, log_s_grid(2.0, 0.5, 16))
    win = select_window(curve)
    assert win.D_min >= 100 * (8 / 512) ** 2
    assert win.D_max <= 0.1 * 1.0


def test_uniform_process_dimension_one():
    est = rdd_of_process(uniform_spec(), 1, 256, log_s_grid(4.0, 1.0, 19))
    assert abs(est.value - 1.0) <= 0.1
    assert est.window["m"] == 1 and est.window["N"] == 256


def test_discrete_process_dimension_zero():
    spec = discrete_spec([(0.1, 0.1), (0.35, 0.2), (0.6, 0.3), (0.85, 0.4)])
    est = rdd_of_process(spec, 1, 1, log_s_grid(4.0, 1.0, 19))
    assert abs(est.value) <= 0.02


def test_block_and_increment_agree_for_m1():
    s = log_s_grid(4.0, 1.0, 19)
    a = rdd_of_process(uniform_spec("iid_mixture", 0.5), 1, 256, s, form="block")
    b = rdd_of_process(uniform_spec("iid_mixture", 0.5), 1, 256, s, form="increment")
    assert a.value == b.value


def test_fit_report_fields():
    D, k = dyadic()
    est = fit_rdd(curve_from(D, 0.5 * k), FitWindow(float(D.min()), float(D.max())))
    est.window.update({"m": 2, "N": 64})
    rep = json.loads(report_json(est))
    assert set(rep) == {"value", "stderr", "window", "points_used", "residual_max", "m", "N"}
    assert rep["m"] == 2 and rep["points_used"] == len(D)
    assert fit_report(est, 2, 64)["window"] == {"D_min": D.min(), "D_max": D.max()}
