import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aphomog.apfield import multi_indices
from aphomog.discrete import (
    GridField,
    SolverConfig,
    TorusGrid,
    apply_Dalpha,
    apply_operator,
    assemble_operator,
    diff_matrix,
    grid_norm,
    laplacian_power_operator,
    linear_operator,
    sample_on_grid,
    solve_spd,
)
from aphomog.errors import IndefiniteDetected, NonConvergence, ShapeMismatch

from conftest import constant_field, periodic_field, quasi_field


def inner(g, u, v):
    return g.h**g.d * float(np.sum(u.values * v.values))


def test_grid_basics():
    g = TorusGrid(2, 4.0, 8)
    assert g.h == 0.5 and g.shape == (8, 8) and g.origin == -2.0
    assert g.points().shape == (8, 8, 2)
    assert g.core_mask(0.5).sum() == 25
    with pytest.raises(ValueError):
        TorusGrid(1, 1.0, 3)
    with pytest.raises(ValueError):
        TorusGrid(1, 1.0, 4).check_order(2)


def test_gridfield_immutable_and_dump(tmp_path):
    g = TorusGrid(2, 1.0, 4, 0.0)
    u = GridField(g, np.arange(32.0).reshape(2, 4, 4))
    with pytest.raises(ValueError):
        u.values[0, 0, 0] = 1.0
    flat = u.to_flat()
    assert flat[0] == 0.0 and flat[1] == 16.0  # component innermost
    u.dump_binary(tmp_path / "u.bin")
    assert np.array_equal(np.fromfile(tmp_path / "u.bin", "<f8"), flat)
    u.dump_csv(tmp_path / "u.csv")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,u0,u1" and len(lines) == 17
    with pytest.raises(ShapeMismatch):
        GridField(g, np.zeros((3, 3)))


def test_constant_field_derivatives_vanish():
    g = TorusGrid(2, 2.0, 8)
    u = GridField(g, np.full(g.shape, 3.0))
    for a in [(1, 0), (0, 2), (1, 1), (2, 2)]:
        assert np.all(apply_Dalpha(u, a).values == 0)


def test_first_difference_order():
    errs = []
    for n in (32, 64, 128, 256):
        g = TorusGrid(1, 2.0, n)
        x = g.coords()
        u = GridField(g, np.sin(2 * math.pi * x / 2.0))
        du = apply_Dalpha(u, (1,)).values[0]
        errs.append(np.max(np.abs(du - (math.pi) * np.cos(math.pi * x))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 0.9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]))
def test_forward_backward_adjoint(seed, alpha):
    rng = np.random.default_rng(seed)
    g = TorusGrid(2, 1.0, 6)
    u = GridField(g, rng.standard_normal(g.shape))
    v = GridField(g, rng.standard_normal(g.shape))
    lhs = inner(g, apply_Dalpha(u, alpha, "forward"), v)
    rhs = (-1) ** sum(alpha) * inner(g, u, apply_Dalpha(v, alpha, "backward"))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_operator_discrete_symbol():
    n, ext, k = 64, 3.0, 5
    g = TorusGrid(1, ext, n)
    A = sample_on_grid(constant_field(value=1.0), g)
    x = g.coords()
    u = GridField(g, np.sin(2 * math.pi * k * x / ext))
    lam = (2 / g.h) ** 2 * math.sin(math.pi * g.h * k / ext) ** 2
    out = apply_operator(A, math.inf, u)
    assert np.max(np.abs(out.values - lam * u.values)) < 1e-9 * lam
    out_T = apply_operator(A, 2.0, u)
    assert np.max(np.abs(out_T.values - (lam + 0.25) * u.values)) < 1e-9 * lam


def test_operator_kills_constants():
    g = TorusGrid(2, 2.0, 8)
    A = sample_on_grid(periodic_field(d=2, m=2), g)
    u = GridField(g, np.ones(g.shape))
    assert np.max(np.abs(apply_operator(A, math.inf, u).values)) < 1e-10


@pytest.mark.parametrize("m,d", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_assembly_matches_matrix_free_and_symmetric(m, d, rng):
    g = TorusGrid(d, 2.0, 8 if d == 2 else 16)
    field = periodic_field(m=m, d=d)
    A = sample_on_grid(field, g)
    op = assemble_operator(A, 3.0)
    u = GridField(g, rng.standard_normal(g.shape))
    v = GridField(g, rng.standard_normal(g.shape))
    mf = apply_operator(A, 3.0, u).values.ravel()
    assert np.max(np.abs(op.matvec(u.values.ravel()) - mf)) <= 1e-10 * np.max(np.abs(mf))
    Au, Av = apply_operator(A, 3.0, u), apply_operator(A, 3.0, v)
    a, b = inner(g, Au, v), inner(g, u, Av)
    assert abs(a - b) <= 1e-10 * abs(a)
    assert op.symmetric


def test_coercivity_on_mean_zero_fields(rng):
    g = TorusGrid(1, 4.0, 64)
    field = quasi_field()
    A = sample_on_grid(field, g)
    op = assemble_operator(A, math.inf)
    lap = laplacian_power_operator(g, 1, math.inf)
    for _ in range(5):
        u = rng.standard_normal(g.size)
        u -= u.mean()
        ratio = (u @ op.matvec(u)) / (u @ lap.matvec(u))
        assert ratio >= field.mu * (1 - 1e-12)


def test_diff_matrix_matches_arrays(rng):
    g = TorusGrid(2, 1.0, 6)
    u = rng.standard_normal(g.shape)
    for a in multi_indices(2, 2):
        for var in ("forward", "backward"):
            D = diff_matrix(g, a, var)
            ref = apply_Dalpha(GridField(g, u), a, var).values[0]
            assert np.allclose((D @ u.ravel()).reshape(g.shape), ref, atol=1e-9)


def test_solve_identity_and_zero():
    op = linear_operator(np.eye(5), 5)
    b = np.arange(1.0, 6.0)
    for method in ("direct", "cg"):
        u, rep = solve_spd(op, b, SolverConfig(method=method))
        assert np.allclose(u, b)
        assert rep.iterations == 1
        z, rep = solve_spd(op, np.zeros(5), SolverConfig(method=method))
        assert np.all(z == 0) and rep.residual == 0.0


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_solve_symbol_oracle(method):
    n, k = 128, 3
    g = TorusGrid(1, 1.0, n, 0.0)
    A = sample_on_grid(constant_field(value=1.0), g)
    op = assemble_operator(A, 1.0)
    x = g.coords()
    mode = np.sin(2 * math.pi * k * x)
    lam = (2 / g.h) ** 2 * math.sin(math.pi * g.h * k) ** 2
    cfg = SolverConfig(method=method, rel_tol=1e-10)
    u, rep = solve_spd(op, GridField(g, (lam + 1) * mode), cfg)
    assert rep.residual <= 1e-10
    assert np.max(np.abs(u.values[0] - mode)) < 1e-8


def test_solve_nonconvergence_and_indefinite():
    g = TorusGrid(1, 1.0, 64, 0.0)
    A = sample_on_grid(quasi_field(), g)
    op = assemble_operator(A, 1.0)
    b = np.random.default_rng(0).standard_normal(g.size)
    with pytest.raises(NonConvergence) as err:
        solve_spd(op, b, SolverConfig(method="cg", max_iter=2, rel_tol=1e-12))
    assert err.value.residual > 0
    bad = linear_operator(np.diag([1.0, -1.0]), 2)
    with pytest.raises(IndefiniteDetected):
        solve_spd(bad, np.array([1.0, 1.0]), SolverConfig(method="cg", preconditioner="none"))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(method="gmres")


def test_grid_norms():
    g = TorusGrid(2, 2.0, 16)
    c = GridField(g, np.full(g.shape, -3.0))
    assert grid_norm(c, "L2") == pytest.approx(3.0 * 2.0)
    assert grid_norm(c, "SR2", R=0.5) == pytest.approx(3.0)
    assert grid_norm(c, "Hk", k=2) == pytest.approx(6.0)
    z = GridField.zeros(g)
    assert grid_norm(z, "L2") == grid_norm(z, "SR2", R=0.5) == grid_norm(z, "Hk", k=1) == 0.0
    g1 = TorusGrid(1, 3.0, 96)
    s = GridField(g1, np.sin(2 * math.pi * g1.coords() / 3.0))
    assert grid_norm(s, "L2") == pytest.approx(math.sqrt(3.0) / math.sqrt(2), rel=1e-12)
    with pytest.raises(ValueError):
        grid_norm(s, "SR2")


def test_sample_on_grid_examples():
    g = TorusGrid(1, 2.0, 16)
    A = sample_on_grid(constant_field(value=2.0), g)
    assert A.is_constant()
    P = sample_on_grid(periodic_field(), g).values[0, 0, 0, 0]
    # integer extent: wrap-consistent with the next node past the seam
    nxt = periodic_field()(g.origin + g.extent)[0, 0, 0, 0]
    assert abs(nxt - P[0]) < 1e-12
    q1 = sample_on_grid(quasi_field(), g, offset=0.3).values
    q2 = sample_on_grid(quasi_field(), g, offset=0.3).values
    assert np.array_equal(q1, q2)
    s = sample_on_grid(periodic_field(), g, scale=0.5, offset=0.0).values[0, 0, 0, 0]
    assert np.allclose(s, 2 + np.cos(2 * math.pi * g.coords() / 0.5))
