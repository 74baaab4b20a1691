import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraccyl.grid import (CrossSection, CylinderDomain, GeometryError, GridFunction, SubdomainMask, build_grid,
                          cylinder_mask, end_slabs_mask, extrude, full_mask, l2_norm_sq_on, read_profile_csv,
                          restrict_extend)


def ones(grid):
    return GridFunction(grid, np.ones(grid.shape))


def test_interior_counts():
    assert build_grid(CylinderDomain(1.0), 0.5).interior_shape == (3, 3)
    assert build_grid(CylinderDomain(2.0), 0.5).interior_shape == (7, 3)
    assert build_grid(CrossSection(), 0.25).interior_shape == (7,)


def test_non_divisible_rejected_with_axis_name():
    with pytest.raises(GeometryError, match="x1"):
        build_grid(CylinderDomain(1.0, CrossSection(1.0)), 0.3)
    with pytest.raises(GeometryError, match="x2"):
        build_grid(CylinderDomain(1.5, CrossSection(0.7)), 0.5)
    with pytest.raises(GeometryError):
        build_grid(CrossSection(), -0.1)


def test_nodes_on_corners_and_nested():
    g4 = build_grid(CylinderDomain(4.0), 0.125)
    g8 = build_grid(CylinderDomain(8.0), 0.125)
    assert g4.axis(0)[0] == -4.0 and g4.axis(0)[-1] == 4.0
    off = g4.offset_in(g8)
    assert off == (32, 0)
    assert np.allclose(g8.axis(0)[off[0]:off[0] + g4.shape[0]], g4.axis(0))


def test_unit_norms():
    g = build_grid(CylinderDomain(4.0), 0.125)
    assert l2_norm_sq_on(ones(g), cylinder_mask(1.0)) == pytest.approx(4.0, abs=1e-13)
    assert l2_norm_sq_on(ones(g), end_slabs_mask(4.0)) == pytest.approx(4.0, abs=1e-13)
    assert l2_norm_sq_on(GridFunction.zeros(g), cylinder_mask(1.0)) == 0.0


def test_mask_off_grid_rejected():
    g = build_grid(CylinderDomain(2.0), 0.25)
    with pytest.raises(GeometryError):
        l2_norm_sq_on(ones(g), cylinder_mask(0.3))
    with pytest.raises(GeometryError):
        l2_norm_sq_on(ones(g), cylinder_mask(1.0, dim=1))


@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_norm_additive_and_monotone(k, seed):
    g = build_grid(CylinderDomain(2.0), 0.25)
    u = GridFunction(g, np.random.default_rng(seed).normal(size=g.shape))
    a = 0.25 * k
    omega = (-1.0, 1.0)
    inner = cylinder_mask(a)
    outer = SubdomainMask((((-2.0, -a), omega), ((a, 2.0), omega)))
    total = l2_norm_sq_on(u)
    assert l2_norm_sq_on(u, inner) + l2_norm_sq_on(u, outer) == pytest.approx(total, rel=1e-12)
    assert l2_norm_sq_on(u, inner) <= total + 1e-12
    assert l2_norm_sq_on(u, inner) >= 0.0


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_sub_cylinder_strictly_inside(alpha):
    ell = 4.0
    g = build_grid(CylinderDomain(ell), 0.125)
    small = cylinder_mask(alpha * ell).nodes(g)
    big = full_mask(g).nodes(g)
    assert np.all(big[small]) and small.sum() < big.sum()


def test_quadrature_second_order():
    fn = lambda x1, x2: np.cos(0.7 * x1) * np.exp(x2)  # noqa: E731
    vals = [l2_norm_sq_on(GridFunction.from_callable(build_grid(CylinderDomain(2.0), 2.0**-k), fn,
                                                     zero_boundary=False)) for k in range(1, 6)]
    diffs = np.abs(np.diff(vals))
    ratios = diffs[:-1] / diffs[1:]
    assert len(ratios) >= 3
    assert np.all((ratios >= 2) & (ratios <= 6)), ratios


def test_restrict_extend_roundtrip(rng):
    g4 = build_grid(CylinderDomain(4.0), 0.25)
    g8 = build_grid(CylinderDomain(8.0), 0.25)
    u = GridFunction.from_interior(g4, rng.normal(size=g4.interior_shape))
    big = restrict_extend(u, g8)
    ox, _ = g4.offset_in(g8)
    assert np.array_equal(big.values[ox:ox + g4.shape[0]], u.values)
    assert np.all(big.values[:ox] == 0) and np.all(big.values[ox + g4.shape[0]:] == 0)
    assert np.array_equal(restrict_extend(big, g4).values, u.values)


def test_restrict_extend_non_nested():
    g = build_grid(CylinderDomain(2.0), 0.25)
    other = build_grid(CylinderDomain(2.0), 0.5)
    with pytest.raises(GeometryError):
        restrict_extend(ones(g), other)


def test_extrusion_rows_identical():
    cross = build_grid(CrossSection(), 0.125)
    prof = GridFunction.from_callable(cross, lambda x: 1 - x**2)
    g = build_grid(CylinderDomain(3.0), 0.125)
    v = extrude(prof, g).values
    assert np.all(v == v[0][None, :])
    assert np.array_equal(v[5], prof.values)


def test_grid_function_immutable_and_finite(grid2d):
    u = ones(grid2d)
    with pytest.raises(ValueError):
        u.values[0, 0] = 2.0
    with pytest.raises(ValueError):
        GridFunction(grid2d, np.full(grid2d.shape, np.nan))


def test_csv_format(grid2d, tmp_path):
    u = GridFunction.from_callable(grid2d, lambda a, b: a + b / 3, zero_boundary=False)
    text = u.to_csv()
    lines = text.split("\n")
    assert lines[0] == "x1,x2,value"
    assert len(lines) == grid2d.shape[0] * grid2d.shape[1] + 2 and lines[-1] == ""
    x1, x2, v = lines[2].split(",")
    assert float(x1) == -2.0 and float(x2) == -0.75
    assert v == f"{-2.0 - 0.25:.17g}"


def test_profile_csv_roundtrip(grid1d, tmp_path):
    u = GridFunction.from_callable(grid1d, lambda x: np.cos(x))
    path = tmp_path / "p.csv"
    u.to_csv(path)
    back = read_profile_csv(path, grid1d)
    assert np.allclose(back.values, u.values, atol=1e-15)
