import io
import math

import numpy as np
import pytest
from scipy import integrate

from gsr_fns import GridSpec, build_table, likelihood_slice, mean_curve, p_b0, posterior_slice
from gsr_fns.grid_model import HIT_THRESHOLD, MISS_THRESHOLD
from gsr_fns.likelihood import build_table_on, dense_threshold_grid, draw_offsets, read_table, write_table
from oracles import lattice_counts

# exhaustive 2048 x 2048 cell-centred offset lattice, computed by oracles.lattice_probs
LATTICE_P0_A3 = 0.730839729309082


def test_rows_are_distributions(unit_table):
    assert np.max(np.abs(unit_table.row_sums() - 1.0)) < 1e-9
    assert unit_table.dense().min() >= 0


def test_miss_column_monotone_and_thresholds(unit_table):
    p0 = unit_table.column(0)
    assert np.all(np.diff(p0) <= 0)
    a = unit_table.a_grid
    assert np.all(p0[a < MISS_THRESHOLD] == 1.0)
    assert np.all(p0[a > HIT_THRESHOLD] == 0.0)


def test_small_area_row_is_certain_miss():
    t = build_table_on(GridSpec(1.0), [0.5, 1.0, 2.0], 1000, seed=2)
    assert t.dense()[1, 0] == 1.0


def test_a3_against_lattice_oracle():
    n = 10**6
    t = build_table_on(GridSpec(1.0), [1.0, 3.0], n, seed=17)
    p = t.dense()[1, 0]
    se = math.sqrt(LATTICE_P0_A3 * (1 - LATTICE_P0_A3) / n)
    assert abs(p - LATTICE_P0_A3) < 3 * se


def test_pseudo_random_scheme_against_oracle():
    h = lattice_counts(4.5, k=512)
    ref = h / h.sum()
    n = 200_000
    t = build_table_on(GridSpec(1.0), [1.0, 4.5], n, seed=4, scheme="pseudo-random")
    row = t.dense()[1]
    for b in range(min(row.size, ref.size)):
        se = math.sqrt(max(ref[b] * (1 - ref[b]), 1e-12) / n)
        assert abs(row[b] - ref[b]) < 3 * se + 1e-5


def test_offsets_fill_unit_square():
    for scheme in ("quasi-lattice", "pseudo-random"):
        u, v = draw_offsets(1000, 3, scheme)
        assert u.size == v.size == 1000
        assert u.min() >= 0 and u.max() < 1 and v.min() >= 0 and v.max() < 1
    u, v = draw_offsets(64, 3)
    # one point per lattice cell
    cells = set(zip((u * 8).astype(int), (v * 8).astype(int)))
    assert len(cells) == 64


def test_build_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_table(GridSpec(1.0), a_max=0.0)
    with pytest.raises(ValueError):
        build_table(GridSpec(1.0), a_steps=1)
    with pytest.raises(ValueError):
        build_table(GridSpec(1.0), offsets_per_a=0)
    with pytest.raises(ValueError):
        build_table_on(GridSpec(1.0), [1.0, 1.0], 10, 0)
    with pytest.raises(ValueError):
        build_table(GridSpec(1.0), scheme="sobol")


def test_scale_collapse():
    tables = [build_table(GridSpec(px), 12.0, 200, 2048, seed=9) for px in (0.04, 0.09, 0.16)]
    for t in tables[1:]:
        assert np.array_equal(t.a_grid, tables[0].a_grid)
        assert np.array_equal(t.dense(), tables[0].dense())


def test_workers_do_not_change_result():
    one = build_table(GridSpec(1.0), 12.0, 60, 3000, seed=8, workers=1)
    many = build_table(GridSpec(1.0), 12.0, 60, 3000, seed=8, workers=8)
    assert np.array_equal(one.dense(), many.dense())


def test_p_b0_examples(unit_table):
    assert p_b0(unit_table, 0.5) == 1.0
    assert p_b0(unit_table, 10.0) == 0.0
    assert p_b0(unit_table, 50.0) == 0.0
    assert abs(p_b0(unit_table, 3.0) - LATTICE_P0_A3) < 1e-3
    with pytest.raises(ValueError):
        p_b0(unit_table, -0.1)


def test_p_b0_interpolation_monotone(unit_table):
    a = np.linspace(0, 13, 5001)
    assert np.all(np.diff(p_b0(unit_table, a)) <= 0)


def test_likelihood_slices(unit_table):
    zero = likelihood_slice(unit_table, 0)
    assert zero(1.0) == 1.0
    a = unit_table.a_grid
    assert np.all(zero(a[a > HIT_THRESHOLD]) == 0)
    for b in range(unit_table.max_b + 1):
        assert likelihood_slice(unit_table, b)(a).max() > 0
    with pytest.raises(ValueError):
        likelihood_slice(unit_table, unit_table.max_b + 1)


def test_mean_curve(unit_table):
    curve = mean_curve(unit_table)
    assert curve.mean_b[0] == 0
    assert np.interp(0.5, curve.a_values, curve.mean_b) == 0
    assert np.all(np.diff(curve.mean_b) >= 0)
    assert np.all((curve.mean_b_over_a >= 0) & (curve.mean_b_over_a <= 1))


def test_mean_curve_large_area():
    t = build_table_on(GridSpec(1.0), [9990.0, 10000.0], 512, seed=1)
    ratio = mean_curve(t).mean_b_over_a[-1]
    assert 0.97 <= ratio <= 1.0


def test_posterior_slice_b0():
    table = build_table(GridSpec(1.0), 20.0, 1001, 8192, seed=3)
    post = posterior_slice(table, 0)
    # the slice is piecewise linear between table nodes, so the trapezoid rule
    # on a grid containing every node is exact up to rounding
    x = np.union1d(table.a_grid, np.linspace(0, 20, 40001))
    total = integrate.trapezoid(post(x), x)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert post(HIT_THRESHOLD + 0.1) == 0
    assert np.all(post(np.linspace(0, 20, 2001)) >= 0)


def test_posterior_slice_large_b():
    a = np.linspace(380.0, 460.0, 161)
    table = build_table_on(GridSpec(1.0), np.r_[0.0, a], 1024, seed=2)
    post = posterior_slice(table, 400)
    # uniform prior: the mean area given 400 covered pixels sits a few
    # boundary widths above 400
    assert 400 < post.mean() < 400 * 1.15


def test_posterior_slice_unreachable():
    table = build_table_on(GridSpec(1.0), [0.0, 1.0, 2.0], 100, seed=2)
    with pytest.raises(ValueError, match="zero posterior mass"):
        posterior_slice(table, 0, prior=lambda a: np.where(np.asarray(a) > 3.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        posterior_slice(table, table.max_b + 1)
    with pytest.raises(ValueError):
        posterior_slice(build_table_on(GridSpec(1.0), [0.0, 1.0], 100, 0), 0, prior=lambda a: -np.ones_like(a))


def test_dense_threshold_grid():
    g = dense_threshold_grid(12.0, 600, 4)
    assert np.all(np.diff(g) > 0)
    between = (g > MISS_THRESHOLD) & (g < HIT_THRESHOLD)
    assert between.sum() > 3 * ((np.linspace(0, 12, 600) > MISS_THRESHOLD) & (np.linspace(0, 12, 600) < HIT_THRESHOLD)).sum()


def test_serialization_round_trip(small_table):
    buf = io.StringIO()
    write_table(small_table, buf, ["tool = test"])
    text = buf.getvalue()
    assert text.startswith("# tool = test\n")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert lines[0] == "pixel_area,a_max,a_steps,offsets_per_a,seed,scheme"
    assert lines[2].startswith("a_value,p_b0,p_b1")
    back = read_table(io.StringIO(text))
    assert np.array_equal(back.a_grid, small_table.a_grid)
    assert np.array_equal(back.dense(), small_table.dense())
    assert (back.offsets_per_a, back.seed, back.offset_scheme) == (4096, 5, "quasi-lattice")
    buf2 = io.StringIO()
    write_table(back, buf2, ["tool = test"])
    assert buf2.getvalue() == text


def test_worker_count_env(monkeypatch):
    from gsr_fns._random import worker_count

    monkeypatch.setenv("GSR_FNS_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(8) == 3
    assert worker_count(2) == 2
    monkeypatch.delenv("GSR_FNS_THREADS")
    assert worker_count(8) == 8
    assert worker_count(0) == 1
