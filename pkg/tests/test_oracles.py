import math

import numpy as np
import pytest

from dimlab import oracles
from dimlab.rd_solver import RDCurve, RDPoint


def test_gaussian_values():
    assert oracles.gaussian_rd(1.0, 1.0) == 0.0
    assert oracles.gaussian_rd(1.0, 0.25) == pytest.approx(1.0)
    assert oracles.gaussian_rd(2.0, 0.5) == pytest.approx(1.0)
    assert oracles.gaussian_rd(1.0, 4.0) == 0.0
    with pytest.raises(ValueError):
        oracles.gaussian_rd(1.0, 0.0)


def test_binary_entropy():
    assert oracles.binary_entropy(0.5) == 1.0
    assert oracles.binary_entropy(0.0) == 0.0
    assert oracles.binary_entropy(0.2) == pytest.approx(0.7219, abs=1e-4)
    assert oracles.binary_entropy(0.2) == pytest.approx(oracles.binary_entropy(0.8))


def test_uniform_slb():
    assert oracles.uniform_slb(1 / (2 * math.pi * math.e)) == 0.0
    assert oracles.uniform_slb(1 / (8 * math.pi * math.e)) == pytest.approx(1.0)
    assert oracles.uniform_slb(1.0) == 0.0


def test_mixture_bounds_structure():
    base = oracles.uniform_slb_curve()
    for D in (1e-4, 1e-3, 1e-2):
        lo, hi = oracles.mixture_bounds(0.2, base, D)
        assert hi - lo == pytest.approx(oracles.binary_entropy(0.2), abs=1e-12)
        assert lo == pytest.approx(0.2 * base(D))
    assert oracles.mixture_bounds(0.0, base, 1e-3) == (0.0, 0.0)
    lo, hi = oracles.mixture_bounds(1.0, base, 1e-3)
    assert lo == hi == pytest.approx(base(1e-3))


def test_mixture_bound_slopes_are_p_times_base():
    p = 0.3
    base = oracles.gaussian_curve(1.0)
    lower, upper = oracles.mixture_curves(p, base)
    D = np.array([2.0**-k for k in range(4, 12)])
    x = np.log2(1 / D)
    base_slope = np.polyfit(x, base.evaluate(D), 1)[0]
    for curve in (lower, upper):
        assert np.polyfit(x, curve.evaluate(D), 1)[0] == pytest.approx(p * base_slope, abs=1e-12)


def test_out_of_range_raises():
    with pytest.raises(ValueError):
        oracles.gaussian_curve(1.0)(2.0)
    with pytest.raises(ValueError):
        oracles.mixture_bounds(1.2, oracles.gaussian_curve(1.0), 0.1)


def test_oracle_curves_pass_validators():
    Ds = np.geomspace(1e-4, 0.05, 20)
    lower, upper = oracles.mixture_curves(0.2, oracles.uniform_slb_curve())
    for oc in (oracles.gaussian_curve(1.0), oracles.uniform_slb_curve(), lower, upper):
        pts = [RDPoint(0.0, float(d), oc(float(d)), 0, 0.0) for d in Ds]
        assert RDCurve(pts, 1, 0, math.inf).validate() == []


def test_csv_rows_zero_solver_columns():
    rows = oracles.gaussian_curve(1.0).csv_rows([0.25, 0.5])
    assert rows[0] == {"s": 0.0, "D": 0.25, "R_bits": 1.0, "iterations": 0, "gap": 0.0, "m": 1, "N": 0}
