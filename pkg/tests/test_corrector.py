import json
import math

import numpy as np
import pytest

from aphomog.apfield import field_from_dict, scalar_field
from aphomog.corrector import (
    FluxTensor,
    cauchy_distance,
    compute_Ahat,
    compute_flux,
    corrector_grid,
    corrector_mean,
    corrector_norm_profile,
    dual_skew_defect,
    export_corrector_set,
    flux_divergence_check,
    local_energy_profile,
    mean_zero_ratio,
    solve_approx_corrector,
    solve_dual_corrector,
    translation_sensitivity,
)
from aphomog.discrete import SolverConfig, TorusGrid
from aphomog.errors import InadmissibleField

from conftest import SQRT3, constant_field, periodic_field, quasi_field


@pytest.mark.parametrize("d,m", [(1, 1), (1, 2), (2, 1)])
def test_constant_field_degenerates(d, m):
    f = constant_field(d=d, m=m)
    g = TorusGrid(d, 2.0, 16)
    cs = solve_approx_corrector(f, 4.0, g)
    assert all(np.all(c.values == 0) for c in cs.chi.values())
    assert np.all(corrector_mean(cs) == 0)
    Ah = compute_Ahat(f, cs)
    assert np.max(np.abs(Ah.Ahat - f.constant_part)) <= 1e-14
    fl = compute_flux(f, cs, Ah)
    assert np.max(np.abs(fl.B)) <= 1e-14
    assert flux_divergence_check(fl, cs) == 0.0
    dual = solve_dual_corrector(fl, 4.0, g)
    assert all(np.all(p == 0) for p in dual.phi.values())
    assert all(np.all(h == 0) for h in dual.h.values())
    assert all(v == 0 for v in corrector_norm_profile(cs, m, [0.5, 1.0]))
    assert cauchy_distance(f, 4.0, 8.0, g).grad_m == 0.0


def test_rejects_inadmissible():
    bad = scalar_field(0.0, [(1.0, 1.0)], mu=0.5)
    with pytest.raises(InadmissibleField):
        solve_approx_corrector(bad, 4.0, TorusGrid(1, 1.0, 16))


@pytest.mark.parametrize("m,tol", [(1, 0.02), (2, 0.05)])
def test_harmonic_mean_oracle(m, tol):
    f = periodic_field(m=m)
    g = corrector_grid(f, 64.0, 1 / 256)
    cs = solve_approx_corrector(f, 64.0, g, SolverConfig(rel_tol=1e-8))
    Ah = compute_Ahat(f, cs).Ahat[0, 0, 0, 0]
    assert abs(Ah - SQRT3) <= tol
    # pointwise a (1 + D^m chi) is close to the harmonic mean
    a = cs.A.values[0, 0, 0, 0]
    flux = a * (1 + cs.grad((m,), 0, (m,))[0])
    assert np.max(np.abs(flux - SQRT3)) < 1e-3


def test_corrector_derivative_closed_form():
    f = periodic_field()
    g = corrector_grid(f, 64.0, 1 / 256)
    cs = solve_approx_corrector(f, 64.0, g)
    a = cs.A.values[0, 0, 0, 0]
    dchi = cs.grad((1,), 0, (1,))[0]
    assert np.max(np.abs(dchi - (SQRT3 / a - 1))) < 5e-3


@pytest.mark.parametrize("m", [1, 2])
def test_mean_zero(m):
    f = periodic_field(m=m)
    g = corrector_grid(f, 16.0, 1 / 64)
    assert mean_zero_ratio(solve_approx_corrector(f, 16.0, g)) <= 1e-7
    q = quasi_field(m=m)
    gq = corrector_grid(q, 4.0, 1 / 16)
    assert mean_zero_ratio(solve_approx_corrector(q, 4.0, gq)) <= 1e-7


def test_mean_zero_without_projection():
    # the constant mode is left to the solver: the mean is still tiny
    f = quasi_field()
    g = corrector_grid(f, 4.0, 1 / 16)
    cs = solve_approx_corrector(f, 4.0, g, exact_mean=False)
    assert mean_zero_ratio(cs) <= 1e-7


def test_mean_deterministic():
    f = quasi_field()
    g = corrector_grid(f, 4.0, 1 / 16)
    a = corrector_mean(solve_approx_corrector(f, 4.0, g))
    b = corrector_mean(solve_approx_corrector(f, 4.0, g))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("m", [1, 2])
def test_flux_identity_and_negative_control(m):
    f = periodic_field(m=m)
    g = corrector_grid(f, 32.0, 1 / 64)
    cfg = SolverConfig(rel_tol=1e-9)
    cs = solve_approx_corrector(f, 32.0, g, cfg)
    Ah = compute_Ahat(f, cs)
    fl = compute_flux(f, cs, Ah)
    assert np.max(np.abs(fl.mean_B)) <= 1e-6
    res = flux_divergence_check(fl, cs)
    assert res <= 10 * cfg.rel_tol
    if m == 1:
        assert flux_divergence_check(fl, cs, variant="forward") > 1e3 * max(res, 1e-15)


def test_flux_sup_decreases_with_T():
    f = periodic_field()
    sups = []
    for T in (4.0, 16.0, 64.0):
        g = corrector_grid(f, T, 1 / 128)
        cs = solve_approx_corrector(f, T, g)
        sups.append(np.max(np.abs(compute_flux(f, cs, compute_Ahat(f, cs)).B)))
    assert sups[0] > sups[1] > sups[2]


def test_dual_single_cosine_oracle():
    g = TorusGrid(1, 2.0, 64)
    T, m, k = 3.0, 2, 3
    x = g.coords()
    B = np.cos(2 * math.pi * k * x / g.extent).reshape(1, 1, 1, 1, -1)
    fl = FluxTensor(B, np.zeros((1, 1, 1, 1)), g, m)
    dual = solve_dual_corrector(fl, T, g, SolverConfig(rel_tol=1e-12))
    lam = ((2 / g.h) ** 2 * math.sin(math.pi * g.h * k / g.extent) ** 2) ** m
    phi = dual.phi[((2,), (2,), 0, 0)]
    assert np.max(np.abs(phi - B.ravel() / (lam + T ** (-2 * m)))) < 1e-12
    assert abs(phi.mean()) < 1e-14


def test_dual_skew_exact_2d():
    f = field_from_dict({"d": 2, "m": 1, "mu": 0.2, "constant": 3.0,
                         "modes": [{"wavenumber": [1, 0], "amplitude": 1.0}, {"wavenumber": [1, 1], "amplitude": 1.0}]})
    g = corrector_grid(f, 4.0, 1 / 16)
    cs = solve_approx_corrector(f, 4.0, g)
    Ah = compute_Ahat(f, cs)
    assert Ah.symmetry_defect() <= 1e-6
    assert Ah.min_eigen() > 0
    dual = solve_dual_corrector(compute_flux(f, cs, Ah), 4.0, g)
    assert dual_skew_defect(dual) <= 1e-12
    assert all(abs(p.mean()) < 1e-12 for p in dual.phi.values())


def test_two_component_smoke():
    f = scalar_field(2.0, [(1.0, 1.0)], n=2, mu=1 / 3, name="pair")
    g = corrector_grid(f, 16.0, 1 / 128)
    cs = solve_approx_corrector(f, 16.0, g)
    Ah = compute_Ahat(f, cs).Ahat[0, 0]
    assert np.allclose(Ah, SQRT3 * np.eye(2), atol=1e-3)
    assert mean_zero_ratio(cs) <= 1e-7


def test_cauchy_distance_properties():
    f = periodic_field()
    g = corrector_grid(f, 32.0, 1 / 64)
    a = cauchy_distance(f, 16.0, 32.0, g)
    b = cauchy_distance(f, 32.0, 16.0, g)
    assert a.grad_m == b.grad_m and a.value == b.value
    c = cauchy_distance(f, 8.0, 16.0, corrector_grid(f, 16.0, 1 / 64))
    assert c.grad_m > a.grad_m > 0
    with pytest.raises(ValueError):
        cauchy_distance(f, 4.0, 16.0, g)


def test_norm_profile_plateau_and_covering():
    f = periodic_field()
    vals = []
    for T in (8.0, 16.0, 32.0):
        cs = solve_approx_corrector(f, T, corrector_grid(f, T, 1 / 64))
        vals.append(corrector_norm_profile(cs, 1, [1.0])[0])
    assert max(vals) / min(vals) < 1.01
    q = quasi_field()
    cs = solve_approx_corrector(q, 4.0, corrector_grid(q, 4.0, 1 / 16))
    prof = corrector_norm_profile(cs, 1, [0.5, 1.0, 2.0, 4.0])
    assert all(b <= 2 * a for a, b in zip(prof, prof[1:]))


def test_translation_sensitivity_skips_and_ratios():
    q = quasi_field()
    g = corrector_grid(q, 4.0, 1 / 16)
    res = translation_sensitivity(q, 4.0, g, [(0.3, 0.3), (0.0, 0.5), (1.0, 2.7)])
    assert res[0].skipped and not res[1].skipped and not res[2].skipped
    assert all(r.ratio > 0 for r in res[1:])
    p = periodic_field()
    gp = TorusGrid(1, 8.0, 128)
    res = translation_sensitivity(p, 4.0, gp, [(1.25, 0.25)])
    assert res[0].skipped


def test_local_energy_profile_periodic_flat():
    f = periodic_field()
    g = TorusGrid(1, 16.0, 256)
    cs = solve_approx_corrector(f, 8.0, g)
    prof = local_energy_profile(cs, [1.0, 2.0, 4.0], [(0,), (64,), (128,)])
    assert prof.shape == (3, 3)
    assert np.allclose(prof, prof[0], rtol=1e-9)
    assert np.ptp(prof) < 0.01 * prof.max()


def test_export(tmp_path):
    f = periodic_field()
    cs = solve_approx_corrector(f, 8.0, corrector_grid(f, 8.0, 1 / 32))
    path = export_corrector_set(cs, tmp_path, dumps=True, Ahat=compute_Ahat(f, cs))
    meta = json.loads(path.read_text())
    assert meta["T"] == 8.0 and meta["grid"]["n_per_dim"] == 32
    assert meta["Ahat"]["m"] == 1 and meta["multi_index_order"] == [[1]]
    assert (tmp_path / meta["dumps"]["1,0"]).exists()
