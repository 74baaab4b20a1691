import math

import numpy as np
import pytest

from fraccyl.grid import GeometryError, GridFunction, cylinder_mask, l2_norm_sq_on
from fraccyl.experiments import (ConvergenceTable, LadderSpec, appendix_transform, cross_section_run,
                                 extrusion_residual, far_support_force, fit_rate, force_profile, poincare_ladder,
                                 psi_decay, run_cross_section, run_far_support, run_linear_growth,
                                 weighted_estimate_check)

H = 0.125


@pytest.fixture(scope="module")
def run():
    return cross_section_run(LadderSpec(0.75, H, (4, 8, 16)))


def test_table_rates_and_csv():
    t = ConvergenceTable((4, 8, 16), (1.0, 0.25, 0.0625))
    assert t.local_rates[:2] == pytest.approx((2.0, 2.0)) and math.isnan(t.local_rates[2])
    text = t.to_csv()
    assert text.splitlines()[0] == "ell,value,local_rate"
    assert text.splitlines()[-1].endswith(",")
    assert t.strictly_decreasing() and t.spread() == 16.0
    with pytest.raises(ValueError):
        ConvergenceTable((8, 4), (1.0, 2.0))


def test_fit_rate_examples():
    ells = (4.0, 8.0, 16.0, 32.0)
    fit = fit_rate(ConvergenceTable(ells, [1 / e for e in ells]))
    assert fit.exponent == pytest.approx(-1.0) and fit.r2 == pytest.approx(1.0)
    assert fit_rate(ConvergenceTable(ells, [3.0] * 4)).exponent == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate(ConvergenceTable(ells[:2], [1.0, 0.5]))
    with pytest.raises(ValueError):
        fit_rate(ConvergenceTable(ells, [1.0, 0.0, 1.0, 1.0]))


def test_geometry_checks():
    with pytest.raises(GeometryError):
        LadderSpec(0.75, 0.25, (4.0, 8.0), alpha=0.3).check_geometry()
    with pytest.raises(GeometryError):
        LadderSpec(0.75, 0.3, (3.0,)).check_geometry()
    with pytest.raises(GeometryError):
        LadderSpec(0.75, 0.25, (0.5, 4.0)).check_geometry(far_support=True)
    with pytest.raises(ValueError):
        LadderSpec(0.75, 0.25, (8.0, 4.0))


def test_cross_section_energy_decreases(run):
    e = run.energy_table()
    assert e.strictly_decreasing()
    assert all(r >= (2 * 0.75 - 1) - 0.3 for r in e.local_rates[:-1])
    # a smaller window never holds more energy
    small = run.energy_table(alpha=0.25)
    assert all(a <= b for a, b in zip(small.values, e.values))
    assert run.omega1_table().strictly_decreasing()


def test_nested_nodes_and_exact_shared_values(run):
    # u_l on Omega_{alpha l} is read at grid nodes only
    u = run.u_ell[8.0]
    mask = cylinder_mask(4.0)
    w = mask.weights(u.grid)
    assert np.all(w[mask.nodes(u.grid) == False] == 0)  # noqa: E712


def test_appendix_transform_identity(run):
    for ell in run.spec.ells:
        w, gap = appendix_transform(run, ell)
        assert gap <= 1e-12
        assert w.grid == run.u_ell[ell].grid


def test_solutions_even(run):
    for u in run.u_ell.values():
        v = u.values
        tol = 1e-9 * np.abs(v).max()
        assert np.allclose(v, v[::-1], atol=tol) and np.allclose(v, v[:, ::-1], atol=tol)


def test_determinism():
    spec = LadderSpec(0.6, H, (2, 4))
    assert run_cross_section(spec).values == run_cross_section(spec).values


def test_linear_growth_and_linearity(run):
    g = run.growth_table()
    assert min(g.values) > 0 and g.spread() <= 2.0
    spec = LadderSpec(0.75, H, (4,))
    f = force_profile("one", spec.cross_grid())
    one = run_linear_growth(spec, f).values[0]
    two = run_linear_growth(spec, f * 2.0).values[0]
    assert math.sqrt(two) == pytest.approx(2 * math.sqrt(one), rel=1e-9)


def test_profile_force(tmp_path):
    spec = LadderSpec(0.75, H, (2, 4))
    cross = spec.cross_grid()
    prof = GridFunction.from_callable(cross, lambda x: np.ones_like(x))
    path = tmp_path / "f.csv"
    prof.to_csv(path)
    f = force_profile(f"profile:{path}", cross)
    assert np.allclose(f.interior, 1.0) and np.all(f.values[[0, -1]] == 0)
    assert run_cross_section(spec, f).values == pytest.approx(run_cross_section(spec).values, rel=1e-12)
    with pytest.raises(ValueError):
        force_profile("slab", cross)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_far_support_decay(s):
    spec = LadderSpec(s, H, (4, 8, 16))
    t = run_far_support(spec)
    assert t.strictly_decreasing()
    assert fit_rate(t).exponent <= -(2 * s - 0.3)


def test_far_support_force_norm():
    spec = LadderSpec(0.5, H, (8,))
    g = spec.grid(8.0)
    f = far_support_force(g, 8.0)
    # interior nodes only, so the trapezoid mass sits just below 4
    assert l2_norm_sq_on(f) == pytest.approx(4.0, abs=4 * H)
    assert np.all(f.values[np.abs(g.mesh()[0]) < 7.0 - 1e-12] == 0)


def test_weighted_estimate():
    chk = weighted_estimate_check(LadderSpec(0.75, H, (4, 8, 16)))
    assert len(chk.lams) == 2 and chk.lams[1] > chk.lams[0]
    for t in chk.tables:
        assert min(t.values) > 0
    assert chk.bounded and chk.violations == (0, 0)
    with pytest.raises(ValueError):
        weighted_estimate_check(LadderSpec(0.4, H, (4,), eps=0.9))


def test_extrusion_residual():
    rows = extrusion_residual(0.75, 4.0, (0.25, 0.125, 0.0625))
    common = [r.common for r in rows]
    assert common[0] > common[1] > common[2]
    assert all(r.plateau_spread <= 1e-10 for r in rows)
    zero = extrusion_residual(0.75, 4.0, (0.25,), f=lambda x: np.zeros_like(x))
    assert zero[0].common == 0.0 and zero[0].all_nodes == 0.0
    with pytest.raises(GeometryError):
        extrusion_residual(0.75, 4.0, (0.25, 0.1))
    with pytest.raises(ValueError):
        extrusion_residual(0.75, 4.0, (0.125, 0.25))


def test_poincare_ladder_monotone():
    t = poincare_ladder(0.5, 0.25, (1.0, 2.0, 4.0))
    assert all(b <= a for a, b in zip(t.values, t.values[1:]))


def test_psi_decay():
    t = psi_decay(LadderSpec(0.75, H, (4, 8, 16)))
    assert t.strictly_decreasing()
    assert fit_rate(t).exponent <= -(1 + 2 * 0.75) + 0.5
