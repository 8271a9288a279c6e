import math

import numpy as np
import pytest
from scipy import stats

from ranklab.coefficients import InitialDistribution
from ranklab.errors import ConfigError
from ranklab.measures import (
    EmpiricalCdf,
    GridCdf,
    GridCdfPath,
    ball_contains,
    bounded_lipschitz_distance,
    empirical_cdf_eval,
    ks_distance,
    levy_distance,
    path_distance,
    quantile_init,
    read_empirical_path_csv,
    write_empirical_path_csv,
)

GAUSS_SHIFT_KS = 0.03987761167674224  # 2 Phi(0.05) - 1, shift 0.1 of a standard gaussian


def brute_levy(pos_f: np.ndarray, pos_g: np.ndarray, step: float = 1e-6) -> float:
    """Independent scan oracle: first epsilon on a grid where the sandwich holds.

    The sandwich is checked straight from its definition on nudged
    breakpoints of both step functions; coarse scan first, then a fine
    scan inside the coarse bracket.
    """
    pos_f = np.sort(pos_f)
    pos_g = np.sort(pos_g)

    def cdf_f(x):
        return np.searchsorted(pos_f, x, side="right") / pos_f.size

    def cdf_g(x):
        return np.searchsorted(pos_g, x, side="right") / pos_g.size

    def ok(eps):
        xs = np.concatenate([pos_f, pos_g, pos_f - eps, pos_f + eps, pos_g - eps, pos_g + eps])
        xs = np.unique(np.concatenate([xs - 1e-9, xs, xs + 1e-9]))
        lower = cdf_f(xs - eps) - eps <= cdf_g(xs)
        upper = cdf_g(xs) <= cdf_f(xs + eps) + eps
        return bool(np.all(lower) and np.all(upper))

    coarse = 1e-3
    eps = 0.0
    while not ok(eps):
        eps += coarse
    lo = max(eps - coarse, 0.0)
    eps = lo
    while not ok(eps):
        eps += step
    return eps


def test_empirical_eval_right_continuous():
    cdf = EmpiricalCdf(np.array([2.0, 1.0, 1.0]))
    np.testing.assert_array_equal(cdf.positions, [1.0, 1.0, 2.0])
    assert cdf.eval(1.0) == pytest.approx(2.0 / 3.0)
    assert cdf.eval_left(1.0) == 0.0
    assert cdf.eval(0.99) == 0.0
    assert cdf.eval(2.0) == 1.0
    assert empirical_cdf_eval(np.array([1.0, 1.0, 2.0]), 1.0) == pytest.approx(2.0 / 3.0)


def test_quantile_init_levels():
    init = InitialDistribution("gaussian")
    cloud = quantile_init(init, 2)
    np.testing.assert_allclose(cloud.positions, [-0.6744897501960817, 0.6744897501960817], rtol=1e-12)
    cloud = quantile_init(init, 101)
    levels = (np.arange(101) + 0.5) / 101
    np.testing.assert_allclose(cloud.positions, stats.norm.ppf(levels), rtol=1e-12)
    assert cloud.t == 0.0
    with pytest.raises(ValueError):
        quantile_init(init, 0)


def test_grid_cdf_eval_and_extension():
    g = GridCdf(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.25, 1.0]))
    assert g.eval(0.5) == pytest.approx(0.125)
    assert g.eval(-3.0) == 0.0
    assert g.eval(5.0) == 1.0
    assert g.eval_left(0.5) == g.eval(0.5)


def test_atom_distances_closed_form():
    zero = EmpiricalCdf(np.array([0.0]))
    for a in (0.25, 0.5, 1.0, 2.0):
        atom = EmpiricalCdf(np.array([a]))
        assert levy_distance(zero, atom) == pytest.approx(min(a, 1.0), abs=1e-6)
        assert ks_distance(zero, atom) == 1.0
        assert bounded_lipschitz_distance(zero, atom) == pytest.approx(
            2.0 * a / (2.0 + a), abs=1e-9
        )
    assert levy_distance(zero, zero) == 0.0
    assert bounded_lipschitz_distance(zero, zero) == pytest.approx(0.0, abs=1e-12)


def test_levy_matches_brute_scan():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        nf = int(rng.integers(5, 60))
        ng = int(rng.integers(5, 60))
        pf = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), nf)
        pg = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), ng)
        f, g = EmpiricalCdf(pf), EmpiricalCdf(pg)
        val = levy_distance(f, g)
        ref = brute_levy(pf, pg)
        assert abs(val - ref) <= 1e-6
        assert val == levy_distance(g, f)
        assert val <= ks_distance(f, g) + 1e-9


def test_ks_gaussian_shift_on_fine_grid():
    xs = np.arange(-8.0, 8.0 + 1e-12, 0.002)
    f = GridCdf(xs, stats.norm.cdf(xs))
    g = GridCdf(xs, stats.norm.cdf(xs - 0.1))
    assert ks_distance(f, g) == pytest.approx(GAUSS_SHIFT_KS, abs=1e-6)
    assert levy_distance(f, g) <= ks_distance(f, g) + 1e-9


def test_levy_uniform_shift_closed_form():
    # slope-1 CDF shifted by s has Levy distance s/2
    xs = np.linspace(0.0, 1.0, 201)
    f = GridCdf(xs, xs)
    g = GridCdf(xs + 0.1, xs)
    assert levy_distance(f, g) == pytest.approx(0.05, abs=1e-6)


def test_bl_adjacent_gap_reduction_matches_all_pairs():
    from scipy.optimize import linprog

    rng = np.random.default_rng(5)
    for _ in range(6):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(2, 9))
        f = EmpiricalCdf(rng.normal(size=n))
        g = EmpiricalCdf(rng.normal(0.5, 1.3, size=m))
        fast = bounded_lipschitz_distance(f, g)

        xs = np.concatenate([np.sort(f.positions), np.sort(g.positions)])
        d = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
        order = np.argsort(xs, kind="stable")
        xs, d = xs[order], d[order]
        k = xs.size
        rows, rhs = [], []
        for i in range(k):
            row = np.zeros(k + 2)
            row[i], row[k] = 1.0, -1.0
            rows.append(row)
            rhs.append(0.0)
            row = np.zeros(k + 2)
            row[i], row[k] = -1.0, -1.0
            rows.append(row)
            rhs.append(0.0)
        for i in range(k):
            for j in range(i + 1, k):
                gap = abs(xs[j] - xs[i])
                for sign in (1.0, -1.0):
                    row = np.zeros(k + 2)
                    row[i], row[j], row[k + 1] = sign, -sign, -gap
                    rows.append(row)
                    rhs.append(0.0)
        budget = np.zeros(k + 2)
        budget[k] = budget[k + 1] = 1.0
        rows.append(budget)
        rhs.append(1.0)
        res = linprog(
            np.concatenate([-d, [0.0, 0.0]]),
            A_ub=np.array(rows),
            b_ub=np.array(rhs),
            bounds=[(None, None)] * k + [(0, None), (0, None)],
            method="highs",
        )
        assert res.success
        assert fast == pytest.approx(-res.fun, abs=1e-9)


def test_bl_symmetry_and_triangle():
    rng = np.random.default_rng(17)
    clouds = [EmpiricalCdf(rng.normal(rng.uniform(-1, 1), 1.0, rng.integers(3, 12))) for _ in range(3)]
    a, b, c = clouds
    dab = bounded_lipschitz_distance(a, b)
    assert dab == pytest.approx(bounded_lipschitz_distance(b, a), abs=1e-9)
    dac = bounded_lipschitz_distance(a, c)
    dcb = bounded_lipschitz_distance(c, b)
    assert dab <= dac + dcb + 1e-9


def test_grid_atoms_warn_on_edge_mass():
    g = GridCdf(np.array([0.0, 1.0]), np.array([0.2, 0.9]))
    h = GridCdf(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    with pytest.warns(UserWarning, match="mass beyond its window"):
        bounded_lipschitz_distance(g, h)


def make_uniform_path(shift_rate: float, nt: int = 11, nx: int = 201) -> GridCdfPath:
    t = np.linspace(0.0, 1.0, nt)
    x = np.linspace(-1.0, 3.0, nx)
    R = np.clip(x[None, :] - shift_rate * t[:, None], 0.0, 1.0)
    return GridCdfPath(t, x, R)


def test_path_distance_grid_grid():
    a = make_uniform_path(0.0)
    b = make_uniform_path(0.1)
    out = path_distance(a, b)
    assert out.sup_distance == pytest.approx(0.05, abs=1e-6)
    assert out.argmax_time == pytest.approx(1.0)
    assert out.times.size == 11
    assert np.all(np.diff(out.distances) > 0)


def test_path_distance_grid_empirical_uses_snapshot_times():
    grid = make_uniform_path(0.0)
    snaps = [EmpiricalCdf(np.linspace(0.005, 0.995, 100), t=tv) for tv in (0.25, 0.75)]
    out = path_distance(grid, snaps)
    np.testing.assert_array_equal(out.times, [0.25, 0.75])
    assert out.sup_distance < 0.02
    bad = [EmpiricalCdf(np.array([0.0]), t=1.5)]
    with pytest.raises(ValueError):
        path_distance(grid, bad)


def test_path_distance_empirical_intersection():
    a = [EmpiricalCdf(np.array([0.0]), t=0.0), EmpiricalCdf(np.array([0.0]), t=0.5)]
    b = [EmpiricalCdf(np.array([0.3]), t=0.5), EmpiricalCdf(np.array([0.3]), t=1.0)]
    out = path_distance(a, b)
    np.testing.assert_array_equal(out.times, [0.5])
    assert out.sup_distance == pytest.approx(0.3, abs=1e-6)
    c = [EmpiricalCdf(np.array([0.3]), t=2.0)]
    with pytest.raises(ValueError):
        path_distance(a, c)


def test_ball_contains_is_strict():
    center = [EmpiricalCdf(np.array([0.0]), t=0.0)]
    sample = [EmpiricalCdf(np.array([0.5]), t=0.0)]
    inside, dist = ball_contains(center, 0.51, sample)
    assert inside
    assert dist.sup_distance == pytest.approx(0.5, abs=1e-6)
    inside, _ = ball_contains(center, 0.5, sample)
    assert not inside
    with pytest.raises(ValueError):
        ball_contains(center, 0.0, sample)


def test_grid_path_invariants_report():
    path = make_uniform_path(0.1)
    rep = path.invariants_report(eps_bc=1e-12)
    assert rep["value_range_ok"]
    assert rep["monotone_ok"]
    assert rep["boundary_ok"]
    assert rep["time_continuity_max_jump"] == pytest.approx(0.01, abs=1e-12)
    bent = GridCdfPath(
        np.array([0.0, 1.0]),
        np.array([0.0, 1.0, 2.0]),
        np.array([[0.0, 0.6, 1.0], [0.0, 0.59, 1.0]]),
    )
    rep = bent.invariants_report()
    assert rep["monotone_ok"]
    assert rep["time_continuity_max_jump"] == pytest.approx(0.01)


def test_grid_path_at_time_interpolates():
    path = make_uniform_path(0.2, nt=3)
    mid = path.at_time(0.25)
    ref = 0.5 * (path.values[0] + path.values[1])
    np.testing.assert_allclose(mid.values, ref, atol=1e-15)
    with pytest.raises(ValueError):
        path.at_time(1.5)


def test_grid_path_csv_round_trip(tmp_path):
    path = make_uniform_path(0.1, nt=4, nx=7)
    file = tmp_path / "path.csv"
    path.to_csv(file)
    lines = file.read_text().splitlines()
    assert lines[0] == "t,x,R"
    assert len(lines) == 1 + 4 * 7
    back = GridCdfPath.from_csv(file)
    np.testing.assert_array_equal(back.t_grid, path.t_grid)
    np.testing.assert_array_equal(back.x_grid, path.x_grid)
    np.testing.assert_array_equal(back.values, path.values)


def test_grid_path_csv_rejects_bad_tables(tmp_path):
    file = tmp_path / "bad.csv"
    file.write_text("time,x,R\n0,0,0\n")
    with pytest.raises(ConfigError):
        GridCdfPath.from_csv(file)
    file.write_text("t,x,R\n0.0,0.0,0.0\n0.0,1.0,1.0\n1.0,0.0,0.0\n")
    with pytest.raises(ConfigError):
        GridCdfPath.from_csv(file)


def test_empirical_path_csv_round_trip(tmp_path):
    snaps = [
        EmpiricalCdf(np.array([0.1, -0.4, 2.0]), t=0.0),
        EmpiricalCdf(np.array([0.2, 0.3, 0.4]), t=0.5),
    ]
    file = tmp_path / "cloud.csv"
    write_empirical_path_csv(snaps, file)
    lines = file.read_text().splitlines()
    assert lines[0] == "t,rank,x"
    assert lines[1].split(",")[1] == "1"
    back = read_empirical_path_csv(file)
    assert len(back) == 2
    np.testing.assert_array_equal(back[0].positions, np.sort(snaps[0].positions))
    assert back[1].t == 0.5
