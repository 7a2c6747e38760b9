import json

import numpy as np
import pytest

from dimlab.id_estimator import DimensionEstimate, IDSweep, SweepRow, fit_dk, fit_do, id_sweep
from dimlab.oracles import binary_entropy, mixture_bbit_entropy
from dimlab.process_models import discrete_spec, uniform_spec


def synthetic(rows_by_k, scheme="bbit"):
    rows = [SweepRow(k, b, h) for k, pairs in rows_by_k.items() for b, h in pairs]
    return IDSweep(rows=rows, spec=None, n=0, seed=0, scheme=scheme)


def test_exact_line_gives_exact_slope():
    sweep = synthetic({0: [(b, 0.5 * b + 2) for b in (2, 4, 6, 8)]})
    est = fit_dk(sweep, 0)
    assert est.value == pytest.approx(0.5, abs=1e-12)
    assert est.stderr == pytest.approx(0.0, abs=1e-12)
    assert est.method == "slope_fit"


def test_fit_needs_three_resolutions():
    with pytest.raises(ValueError):
        fit_dk(synthetic({0: [(2, 1.0), (4, 2.0)]}), 0)


def test_fair_coin_is_constant_in_b():
    sweep = id_sweep(discrete_spec([(0.0, 0.5), (0.75, 0.5)]), 1, [2, 4, 6, 8], 100_000, 3)
    for r in sweep.rows:
        assert abs(r.H_cond - 1.0) < 0.01
    assert fit_do(sweep).value < 0.005


def test_uniform_rows_track_b():
    sweep = id_sweep(uniform_spec(), 0, [2, 4, 6], 1_000_000, 4)
    for r in sweep.rows:
        assert abs(r.H_cond - r.b) < 0.01


def test_mixture_rows_match_exact_entropy():
    p = 0.3
    sweep = id_sweep(uniform_spec("iid_mixture", p), 0, [4, 6, 8], 1_000_000, 5)
    for r in sweep.rows:
        exact = mixture_bbit_entropy(p, r.b)
        assert abs(r.H_cond - exact) < 0.01
    # the exact value approaches H(p) + p b as b grows
    assert abs(mixture_bbit_entropy(p, 8) - (binary_entropy(p) + 0.3 * 8)) < 0.02
    assert abs(mixture_bbit_entropy(p, 16) - (binary_entropy(p) + 0.3 * 16)) < 1e-3


def test_memoryless_orders_agree():
    sweep = id_sweep(uniform_spec("iid_mixture", 0.5), 1, [4, 6, 8, 10], 1_000_000, 6)
    d0, d1 = fit_dk(sweep, 0), fit_dk(sweep, 1)
    assert abs(d1.value - d0.value) <= 2 * np.hypot(d0.stderr, d1.stderr) + 0.01
    assert fit_do(sweep).diagnostics["monotone"]


def test_constant_process_has_zero_dimension():
    sweep = id_sweep(uniform_spec("piecewise_constant_markov", 0.0), 1, [2, 4, 6], 10_000, 7)
    assert fit_do(sweep).value == pytest.approx(0.0, abs=1e-12)


def test_monotonicity_flag():
    rising = synthetic({0: [(b, 0.2 * b) for b in (2, 4, 6)], 1: [(b, 0.9 * b) for b in (2, 4, 6)]})
    assert not fit_do(rising).diagnostics["monotone"]


def test_blevel_scheme_agrees_with_bbit():
    spec = uniform_spec("iid_mixture", 0.5)
    bbit = fit_dk(id_sweep(spec, 0, [4, 6, 8, 10], 1_000_000, 8), 0).value
    blevel = fit_dk(id_sweep(spec, 0, [16, 64, 256, 1024], 1_000_000, 8, scheme="blevel"), 0).value
    assert abs(bbit - blevel) <= 0.03


def test_estimate_json():
    est = DimensionEstimate(0.25, 0.01, "slope_fit", {"k": 0}, {"residual_max": 0.0})
    assert set(json.loads(est.to_json())) == {"value", "stderr", "method", "window", "diagnostics"}
    with pytest.raises(ValueError):
        DimensionEstimate(0.0, 0.0, "guess")
