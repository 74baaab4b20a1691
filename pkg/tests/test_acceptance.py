"""Acceptance criteria 1-11, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s -m acceptance``.
"""

import itertools
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fraccyl.constants import Normalization, verify_reduction_identity
from fraccyl.experiments import (LadderSpec, cross_section_run, extrusion_residual, fit_rate, poincare_ladder,
                                 psi_decay, run_far_support)
from fraccyl.grid import CrossSection, CylinderDomain, GridFunction, build_grid
from fraccyl.operator import apply_operator, assemble_weights, gagliardo_seminorm_sq, operator_matrix
from fraccyl.solver import solve_with_weights
from fraccyl.weights import s_s_direct, s_s_of_rho, scaled_s_s_max, sup_ratio

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nacceptance {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return _report


@pytest.fixture(scope="module")
def rate_run():
    t0 = time.perf_counter()
    run = cross_section_run(LadderSpec(0.75, 1 / 16, (4, 8, 16, 32), alpha=0.5))
    return run, time.perf_counter() - t0


def test_01_constant_identity(report):
    t0 = time.perf_counter()
    worst = max(verify_reduction_identity(n, s, norm)
                for n, s, norm in itertools.product((2, 3, 4), (0.1, 0.25, 0.5, 0.75, 0.9), Normalization))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-12 and dt < 1.0, f"max residual {worst:.2e}, {dt:.2f} s")


def test_02_ball_oracle(report):
    t0 = time.perf_counter()
    errs = []
    for k in (5, 6, 7):
        g = build_grid(CrossSection(), 2.0**-k)
        f = GridFunction.from_callable(g, lambda x: np.ones_like(x))
        u = solve_with_weights(assemble_weights(g, 0.5, Normalization.StandardFourPow), f).solution
        exact = np.sqrt(np.clip(1 - g.axis(0) ** 2, 0, None))
        errs.append(np.linalg.norm(u.values - exact) / np.linalg.norm(exact))
    dt = time.perf_counter() - t0
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 0.02 and dt < 10
    report(2, ok, "rel L2 errors " + ", ".join(f"{e:.3e}" for e in errs) + f", {dt:.1f} s")


def test_03_extrusion_consistency(report):
    t0 = time.perf_counter()
    rows = extrusion_residual(0.75, 4.0, (1 / 8, 1 / 16, 1 / 32))
    res = [r.common for r in rows]
    dt = time.perf_counter() - t0
    ok = all(b < a for a, b in zip(res, res[1:])) and dt < 120
    report(3, ok, "interior residual " + ", ".join(f"{v:.3e}" for v in res) + f", {dt:.1f} s")


def test_04_cross_section_rate(report, rate_run):
    run, dt = rate_run
    table = run.energy_table()
    fit = fit_rate(table)
    ok = table.strictly_decreasing() and fit.exponent <= -0.2 and fit.r2 >= 0.9
    vals = ", ".join(f"{v:.3e}" for v in table.values)
    report(4, ok, f"E = {vals}; exponent {fit.exponent:.3f}, R2 {fit.r2:.4f}, {dt:.1f} s")


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_05_far_support_decay(report, s):
    t0 = time.perf_counter()
    table = run_far_support(LadderSpec(s, 1 / 16, (4, 8, 16)))
    fit = fit_rate(table)
    dt = time.perf_counter() - t0
    ok = table.strictly_decreasing() and fit.exponent <= -(2 * s - 0.3)
    vals = ", ".join(f"{v:.3e}" for v in table.values)
    report(5, ok, f"s={s}: D = {vals}; exponent {fit.exponent:.3f} (bound {-(2 * s - 0.3):.2f}), {dt:.1f} s")


def test_06_linear_growth(report, rate_run):
    run, _ = rate_run
    table = run.growth_table()
    vals = ", ".join(f"{v:.4f}" for v in table.values)
    report(6, table.spread() <= 2.0, f"G = {vals}; max/min {table.spread():.3f}")


def test_07_poincare_uniformity(report):
    t0 = time.perf_counter()
    table = poincare_ladder(0.5, 1 / 16, (2, 4, 8, 16))
    lam = dict(zip(table.ells, table.values))
    dt = time.perf_counter() - t0
    mono = all(b <= a for a, b in zip(table.values, table.values[1:]))
    ratio = lam[16.0] / lam[8.0]
    ok = mono and ratio >= 0.9 and dt < 300
    vals = ", ".join(f"{v:.5f}" for v in table.values)
    report(7, ok, f"lambda_min = {vals}; ratio(16/8) {ratio:.4f}, {dt:.1f} s")


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_08_weight_scaling(report, s):
    t0 = time.perf_counter()
    x = np.arange(0.0, 64.0 + 0.125, 0.25)
    a, b = scaled_s_s_max(s, 8.0, s, x), scaled_s_s_max(s, 16.0, s, x)
    agree = abs(a - b) / max(a, b)
    pts = (0.0, 3.0, 8.0, 13.5, 40.0)
    direct = max(abs(s_s_direct(v, s, 8.0, s) / s_s_of_rho(v, s, 8.0, s) - 1.0) for v in pts)
    dt = time.perf_counter() - t0
    ok = agree <= 0.05 and direct <= 1e-6 and dt < 30
    report(8, ok, f"eps=s={s}: max {a:.6f} vs {b:.6f} (rel {agree:.2e}); direct/reduced {direct:.1e}, {dt:.1f} s")


def test_09_sup_ratio(report):
    t0 = time.perf_counter()
    out = {eps: sup_ratio(eps) for eps in (0.5, 1.0, 1.5)}
    dt = time.perf_counter() - t0
    ok = all(v <= 2**eps + 1 + 1e-9 for eps, v in out.items()) and dt < 10
    report(9, ok, ", ".join(f"eps={e}: {v:.6f} <= {2**e + 1:.6f}" for e, v in out.items()) + f", {dt:.1f} s")


def test_10_psi_decay(report):
    t0 = time.perf_counter()
    table = psi_decay(LadderSpec(0.75, 1 / 16, (4, 8, 16)))
    fit = fit_rate(table)
    dt = time.perf_counter() - t0
    vals = ", ".join(f"{v:.3e}" for v in table.values)
    ok = fit.exponent <= -2.0 and dt < 300
    report(10, ok, f"sup|Psi| = {vals}; exponent {fit.exponent:.3f}, {dt:.1f} s")


_GRIDS = [build_grid(CrossSection(), 0.125), build_grid(CrossSection(), 1 / 32),
          build_grid(CylinderDomain(1.0), 0.25), build_grid(CylinderDomain(1.5), 0.25),
          build_grid(CylinderDomain(1.0, CrossSection(0.5)), 0.125)]


def _structural_case(grid, s, seed):
    rng = np.random.default_rng(seed)
    w = assemble_weights(grid, s)
    u = GridFunction.from_interior(grid, rng.normal(size=grid.interior_shape))
    v = GridFunction.from_interior(grid, rng.normal(size=grid.interior_shape))
    au, av = apply_operator(w, u), apply_operator(w, v)
    uau = u.dot(au)
    # SPD
    assert abs(v.dot(au) - u.dot(av)) <= 1e-12 * max(uau, abs(v.dot(au)))
    assert uau > 0
    # seminorm and operator
    assert abs(gagliardo_seminorm_sq(u, w) - uau) <= 1e-11 * uau
    # M-matrix
    A = operator_matrix(w)
    off = A - np.diag(np.diag(A))
    assert np.all(np.diag(A) > 0) and np.all(off <= 0)
    assert np.all(np.linalg.inv(A) >= -1e-13 * np.abs(np.linalg.inv(A)).max())
    # maximum principle and energy identity of the solve
    f = GridFunction.from_interior(grid, rng.uniform(0.0, 1.0, grid.interior_shape))
    rep = solve_with_weights(w, f, 1e-12)
    sol = rep.solution
    assert np.all(sol.values >= -1e-10 * np.abs(sol.values).max())
    sas = sol.dot(apply_operator(w, sol))
    assert abs(sol.dot(f) - sas) <= 1e-9 * sas
    # evenness
    e = u.values
    for a in range(grid.dim):
        e = e + np.flip(e, axis=a)
    ae = apply_operator(w, GridFunction(grid, e)).values
    for a in range(grid.dim):
        assert np.allclose(ae, np.flip(ae, axis=a), rtol=0, atol=1e-11 * np.abs(ae).max())


def test_11_structural_suite(report):
    t0 = time.perf_counter()
    count = []

    @settings(max_examples=120, deadline=None, database=None, suppress_health_check=[HealthCheck.too_slow])
    @given(st.sampled_from(_GRIDS), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
    def check(grid, s, seed):
        count.append(1)
        _structural_case(grid, s, seed)

    failure = None
    try:
        check()
    except AssertionError as exc:
        failure = exc
    dt = time.perf_counter() - t0
    ok = failure is None and len(count) >= 100 and dt < 60
    report(11, ok, f"{len(count)} randomized cases, {dt:.1f} s" + ("" if failure is None else f"; {failure!r}"))
