"""Approximate correctors, homogenized tensor, fluxes and dual correctors.

For each multi-index ``gamma`` with ``|gamma| = m`` and column ``l`` the
approximate corrector solves

    (-1)^m sum B^alpha(A^{alpha beta} F^beta chi) + T^{-2m} chi = -(-1)^m sum_alpha B^alpha(A^{alpha gamma} e_l)

on a periodic box.  The right-hand side uses ``D^beta P = delta e_l`` for the
monomial ``P = x^gamma/gamma! e_l``, so no polynomial is ever sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .apfield import CoeffField, check_admissible, legendre_matrix, multi_indices
from .discrete import (
    GridField,
    Operator,
    SampledCoeff,
    SolveReport,
    SolverConfig,
    TorusGrid,
    assemble_operator,
    diff_array,
    grad_sq,
    laplacian_power_operator,
    mass_coefficient,
    sample_on_grid,
    solve_spd,
    window_average,
    windowed_norm,
)
from .errors import InadmissibleField

DEFAULT_C_BOX = 8.0


def corrector_grid(field, T: float, h: float, c_box: float = DEFAULT_C_BOX, extent: float | None = None,
                   reduce_periodic: bool = True) -> TorusGrid:
    """Box for a corrector solve at scale ``T`` with spacing close to ``h``.

    The default side is ``c_box * T``.  For a 1-periodic field the discrete
    solution on any integer box is the periodic extension of the one on the
    unit box (uniqueness), so ``reduce_periodic`` solves on the unit box.
    """
    if extent is None:
        periodic = reduce_periodic and getattr(field, "period", lambda: None)() == 1.0
        extent = 1.0 if periodic else c_box * T
    n = max(int(round(extent / h)), 4 * field.m)
    return TorusGrid(field.d, float(extent), n)


@dataclass
class CorrectorSet:
    field: object
    T: float
    grid: TorusGrid
    A: SampledCoeff
    chi: dict
    reports: dict
    solver: SolverConfig
    offset: tuple | None = None

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def n(self) -> int:
        return self.A.n

    def keys(self):
        return [(g, l) for g in multi_indices(self.grid.d, self.m) for l in range(self.n)]

    def max_residual(self) -> float:
        return max((r.residual for r in self.reports.values()), default=0.0)

    def grad(self, gamma, l: int, beta) -> np.ndarray:
        """``F^beta chi^gamma_{.l}``, shape ``(n, *grid)``."""
        return diff_array(self.chi[(tuple(gamma), l)].values, tuple(beta), self.grid.h, "forward")

    def density(self, l: int) -> np.ndarray:
        """``|nabla^l chi|^2`` summed over all corrector indices and components."""
        g = self.grid
        return sum(grad_sq(self.chi[k].values, l, g.h, g.d) for k in self.keys())

    def metadata(self) -> dict:
        return {
            "field": getattr(self.field, "name", "field"),
            "T": self.T,
            "grid": self.grid.describe(),
            "offset": list(self.offset) if self.offset is not None else None,
            "rel_tol": self.solver.rel_tol,
            "method": self.solver.method,
            "residuals": {_key_str(k): r.residual for k, r in self.reports.items()},
            "iterations": {_key_str(k): r.iterations for k, r in self.reports.items()},
        }


def _key_str(k) -> str:
    return ",".join(str(v) for v in (*k[0], k[1])) if isinstance(k[0], tuple) else str(k)


def _require_admissible(field):
    if isinstance(field, CoeffField):
        rep = check_admissible(field)
        if not rep.ok:
            raise InadmissibleField(f"field {field.name!r} fails admissibility: {rep}")


def corrector_rhs(A: SampledCoeff, gamma, l: int) -> np.ndarray:
    """``-(-1)^m sum_alpha B^alpha(A^{alpha gamma}_{. l})``, shape ``(n, *grid)``."""
    alphas = multi_indices(A.grid.d, A.m)
    ig = alphas.index(tuple(gamma))
    out = np.zeros((A.n,) + A.grid.shape)
    for ia, a in enumerate(alphas):
        out += diff_array(A.values[ia, ig, :, l], a, A.grid.h, "backward")
    return -((-1) ** A.m) * out


def solve_approx_corrector(field, T: float, grid: TorusGrid, cfg: SolverConfig | None = None, *,
                           offset=None, exact_mean: bool = True, check: bool = True,
                           samples: SampledCoeff | None = None, op: Operator | None = None) -> CorrectorSet:
    """Solve all ``(gamma, l)`` approximate correctors at scale ``T``.

    ``exact_mean`` tells the solver the right-hand sides are discrete
    divergences (zero mean in exact arithmetic), so the constant mode is set
    to zero instead of to the rounding residue divided by ``T^{-2m}``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    cfg = cfg or SolverConfig()
    if check:
        _require_admissible(field)
    A = samples if samples is not None else sample_on_grid(field, grid, offset=offset)
    op = op or assemble_operator(A, T)
    chi, reports = {}, {}
    for g in multi_indices(grid.d, A.m):
        for l in range(A.n):
            rhs = GridField(grid, corrector_rhs(A, g, l))
            chi[(g, l)], reports[(g, l)] = solve_spd(op, rhs, cfg, mean_free=exact_mean)
    off = tuple(np.broadcast_to(np.asarray(offset, float), (grid.d,)).tolist()) if offset is not None else None
    return CorrectorSet(field, float(T), grid, A, chi, reports, cfg, off)


def corrector_mean(cs: CorrectorSet) -> np.ndarray:
    """Grid averages, shape ``(M, n, n)`` indexed by ``(gamma, l, component)``."""
    alphas = multi_indices(cs.grid.d, cs.m)
    out = np.zeros((len(alphas), cs.n, cs.n))
    for ig, g in enumerate(alphas):
        for l in range(cs.n):
            v = cs.chi[(g, l)].values
            out[ig, l] = v.reshape(cs.n, -1).mean(axis=1)
    return out


def mean_zero_ratio(cs: CorrectorSet) -> float:
    """``max |<chi>| / ||chi||_{L2}`` over corrector indices (0 for vanishing correctors)."""
    worst = 0.0
    g = cs.grid
    for k in cs.keys():
        v = cs.chi[k].values
        norm = math.sqrt(g.h**g.d * np.sum(v * v))
        if norm > 0:
            worst = max(worst, float(np.max(np.abs(v.reshape(cs.n, -1).mean(axis=1)))) / norm)
    return worst


def corrector_norm_profile(cs: CorrectorSet, l: int, R_list, core_fraction: float = 0.5) -> list:
    """``||nabla^l chi_T||_{S^2_R}`` for each ``R``; windows centred in the core."""
    if not 0 <= l <= cs.m:
        raise ValueError("l must lie in 0..m")
    dens = cs.density(l)
    core = cs.grid.core_mask(core_fraction)
    return [windowed_norm(dens, cs.grid, R, 2.0, core) for R in R_list]


# ---------------------------------------------------------------------------
# homogenized tensor and flux


@dataclass
class HomogenizedTensor:
    Ahat: np.ndarray
    m: int
    T: float
    grid: dict
    field_name: str
    averaging: str = "uniform"

    def symmetry_defect(self) -> float:
        At = self.Ahat.transpose(1, 0, 3, 2)
        scale = max(np.max(np.abs(self.Ahat)), 1e-300)
        return float(np.max(np.abs(self.Ahat - At)) / scale)

    def min_eigen(self) -> float:
        return float(np.linalg.eigvalsh(legendre_matrix(self.Ahat)).min())

    def as_field(self, name: str | None = None) -> CoeffField:
        d = self.grid["d"]
        m = self.m
        mu = max(min(self.min_eigen(), 1.0 / max(np.max(np.abs(self.Ahat)), 1e-300)), 1e-12)
        return CoeffField(d, m, self.Ahat.shape[2], self.Ahat.copy(), (), mu, name or f"hom({self.field_name})")

    def to_json(self) -> dict:
        return {
            "Ahat": self.Ahat.tolist(),
            "m": self.m,
            "multi_index_order": [list(a) for a in multi_indices(self.grid["d"], self.m)],
            "T": self.T,
            "grid": self.grid,
            "field": self.field_name,
            "averaging": self.averaging,
        }


def averaging_weights(grid: TorusGrid, averaging: str) -> np.ndarray:
    """Normalized weights for grid means: uniform, or a smooth bump on the central box."""
    if averaging == "uniform":
        return np.full(grid.shape, 1.0 / grid.size)
    if averaging != "filtered":
        raise ValueError("averaging must be 'uniform' or 'filtered'")
    s = (grid.coords() - (grid.origin + 0.5 * grid.extent)) / (0.375 * grid.extent)
    w1 = np.zeros_like(s)
    inside = np.abs(s) < 1
    w1[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    w = w1
    for _ in range(grid.d - 1):
        w = np.multiply.outer(w, w1)
    return w / w.sum()


def _full_flux(cs: CorrectorSet) -> np.ndarray:
    """``A + A nabla^m chi`` sampled on the grid, shape ``(M, M, n, n, *grid)``."""
    alphas = multi_indices(cs.grid.d, cs.m)
    A = cs.A.values
    out = A.copy()
    for ib, b in enumerate(alphas):
        for j in range(cs.n):
            for ig, g in enumerate(alphas):
                Dchi = cs.grad(b, j, g)  # F^g chi^b_{.j}, components k
                out[:, ib, :, j] += np.einsum("aik...,k...->ai...", A[:, ig], Dchi)
    return out


def compute_Ahat(field, cs: CorrectorSet, averaging: str = "uniform") -> HomogenizedTensor:
    """Grid mean of ``A + A nabla^m chi_T``.

    ``uniform`` is the plain box average (exact for integer-period boxes);
    ``filtered`` uses a smooth compactly supported weight, which suppresses
    the box-edge error for quasi-periodic fields.
    """
    w = averaging_weights(cs.grid, averaging)
    full = _full_flux(cs)
    axes = tuple(range(4, 4 + cs.grid.d))
    Ahat = np.tensordot(full, w, axes=(axes, tuple(range(cs.grid.d))))
    return HomogenizedTensor(Ahat, cs.m, cs.T, cs.grid.describe(), getattr(field, "name", "field"), averaging)


@dataclass
class FluxTensor:
    B: np.ndarray
    mean_B: np.ndarray
    grid: TorusGrid
    m: int


def compute_flux(field, cs: CorrectorSet, Ahat: HomogenizedTensor) -> FluxTensor:
    full = _full_flux(cs)
    B = full - Ahat.Ahat[(...,) + (None,) * cs.grid.d]
    mean_B = B.reshape(B.shape[:4] + (-1,)).mean(axis=-1)
    return FluxTensor(B, mean_B, cs.grid, cs.m)


def flux_divergence_check(flux: FluxTensor, cs: CorrectorSet, T: float | None = None,
                          variant: str = "backward") -> float:
    """Relative residual of ``sum_alpha D^alpha B^{alpha beta} = (-1)^{m+1} T^{-2m} chi^beta``.

    The scale is the L2 norm of ``sum_alpha B^alpha A^{alpha beta}``, the
    corrector right-hand side.  ``variant='forward'`` breaks the adjoint
    pairing and serves as a negative control.
    """
    T = cs.T if T is None else T
    g, m = cs.grid, cs.m
    alphas = multi_indices(g.d, m)
    mass = mass_coefficient(T, m)
    worst = 0.0
    for ib, b in enumerate(alphas):
        for j in range(cs.n):
            lhs = sum(diff_array(flux.B[ia, ib, :, j], a, g.h, variant) for ia, a in enumerate(alphas))
            rhs = (-1) ** (m + 1) * mass * cs.chi[(b, j)].values
            scale = np.linalg.norm(corrector_rhs(cs.A, b, j))
            if scale == 0:
                continue
            worst = max(worst, float(np.linalg.norm(lhs - rhs) / scale))
    return worst


# ---------------------------------------------------------------------------
# dual correctors


@dataclass
class DualCorrectorSet:
    phi: dict
    h: dict
    grid: TorusGrid
    m: int
    T: float
    reports: dict = dc_field(default_factory=dict)

    def skew(self, gamma, alpha, beta, i, j) -> np.ndarray:
        """``F^gamma phi^{alpha beta}_{ij} - F^alpha phi^{gamma beta}_{ij}``."""
        hh = self.grid.h
        a = diff_array(self.phi[(tuple(alpha), tuple(beta), i, j)][None], tuple(gamma), hh, "forward")[0]
        c = diff_array(self.phi[(tuple(gamma), tuple(beta), i, j)][None], tuple(alpha), hh, "forward")[0]
        return a - c

    def max_residual(self) -> float:
        return max((r.residual for r in self.reports.values()), default=0.0)


def solve_dual_corrector(flux: FluxTensor, T: float, grid: TorusGrid | None = None,
                         cfg: SolverConfig | None = None) -> DualCorrectorSet:
    """Solve ``(-Delta_h)^m phi + T^{-2m} phi = B - <B>`` entrywise.

    ``-Delta_h = sum_k F_k^T F_k`` so the operator is exactly self-adjoint.
    Then ``h^beta_{ij} = sum_alpha B^alpha phi^{alpha beta}_{ij}`` (backward
    composition, matching the divergence in the flux identity).
    """
    grid = grid or flux.grid
    cfg = cfg or SolverConfig()
    m = flux.m
    alphas = multi_indices(grid.d, m)
    n = flux.B.shape[2]
    op = laplacian_power_operator(grid, m, T)
    phi, reports = {}, {}
    for ia, a in enumerate(alphas):
        for ib, b in enumerate(alphas):
            for i in range(n):
                for j in range(n):
                    rhs = flux.B[ia, ib, i, j] - flux.B[ia, ib, i, j].mean()
                    u, rep = solve_spd(op, GridField(grid, rhs), cfg, mean_free=True)
                    phi[(a, b, i, j)] = u.values[0]
                    reports[(a, b, i, j)] = rep
    hmap = {}
    for b in alphas:
        for i in range(n):
            for j in range(n):
                hmap[(b, i, j)] = sum(
                    diff_array(phi[(a, b, i, j)][None], a, grid.h, "backward")[0] for a in alphas
                )
    return DualCorrectorSet(phi, hmap, grid, m, float(T), reports)


def dual_skew_defect(dual: DualCorrectorSet) -> float:
    """Max of ``|skew(gamma, alpha) + skew(alpha, gamma)|`` (exactly 0 by construction)."""
    alphas = multi_indices(dual.grid.d, dual.m)
    n = max(k[2] for k in dual.phi) + 1
    worst = 0.0
    for g in alphas:
        for a in alphas:
            for b in alphas:
                for i in range(n):
                    for j in range(n):
                        s = dual.skew(g, a, b, i, j) + dual.skew(a, g, b, i, j)
                        worst = max(worst, float(np.max(np.abs(s))))
    return worst


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class CauchyDistance:
    grad_m: float
    value: float
    T1: float
    T2: float
    residual: float


def cauchy_distance(field, T1: float, T2: float, grid: TorusGrid, cfg: SolverConfig | None = None, *,
                    base: CorrectorSet | None = None, R: float = 1.0, core_fraction: float = 0.5,
                    check: bool = True) -> CauchyDistance:
    """``||nabla^m(chi_{T1} - chi_{T2})||_{S^2_R}`` and ``||chi_{T1} - chi_{T2}||_{S^2_R}``.

    The difference ``delta = chi_s - chi_b`` (``s < b`` the sorted scales)
    solves ``(Op + s^{-2m}) delta = -(s^{-2m} - b^{-2m}) chi_b`` and is
    computed directly; subtracting two independent solves would lose the
    small distance in the solver tolerance.  The result is symmetric in
    ``(T1, T2)``.
    """
    s, b = sorted((float(T1), float(T2)))
    if b > 2 * s * (1 + 1e-12):
        raise ValueError("need T2 in [T1, 2 T1]")
    cfg = cfg or SolverConfig()
    if base is None or base.T != b:
        base = solve_approx_corrector(field, b, grid, cfg, check=check)
    m = base.m
    if s == b:
        return CauchyDistance(0.0, 0.0, T1, T2, 0.0)
    op = assemble_operator(base.A, s)
    coef = -(mass_coefficient(s, m) - mass_coefficient(b, m))
    dens_m = np.zeros(grid.shape)
    dens_0 = np.zeros(grid.shape)
    worst = 0.0
    for k in base.keys():
        delta, rep = solve_spd(op, base.chi[k] * coef, cfg, mean_free=True)
        worst = max(worst, rep.residual)
        dens_m += grad_sq(delta.values, m, grid.h, grid.d)
        dens_0 += np.sum(delta.values**2, axis=0)
    core = grid.core_mask(core_fraction)
    return CauchyDistance(
        windowed_norm(dens_m, grid, R, 2.0, core),
        windowed_norm(dens_0, grid, R, 2.0, core),
        T1, T2, worst,
    )


@dataclass
class SensitivityResult:
    y: tuple
    z: tuple
    lhs: float
    rhs: float
    ratio: float | None

    @property
    def skipped(self) -> bool:
        return self.ratio is None


def translation_sensitivity(field, T: float, grid: TorusGrid, pairs, cfg: SolverConfig | None = None, *,
                            p: float = 4.0, core_fraction: float = 0.5, skip_below: float = 1e-12) -> list:
    """Ratios ``sum_k T^{k-m} ||Delta nabla^k chi_T||_{S^2_T} / ||Delta A||_{S^p_T}`` per pair.

    Translated correctors come from offset sampling on the same grid, so a
    node ``x`` carries ``chi`` of ``A(. + y)`` at ``x``.  Pairs whose
    denominator is below ``skip_below`` are reported with ``ratio=None``.
    """
    cfg = cfg or SolverConfig()
    cache: dict = {}
    core = grid.core_mask(core_fraction)
    m = field.m

    def solve(off):
        key = tuple(np.round(np.broadcast_to(np.asarray(off, float), (grid.d,)), 15).tolist())
        if key not in cache:
            cache[key] = solve_approx_corrector(field, T, grid, cfg, offset=key, check=False)
        return cache[key]

    _require_admissible(field)
    out = []
    for y, z in pairs:
        y = tuple(np.broadcast_to(np.asarray(y, float), (grid.d,)).tolist())
        z = tuple(np.broadcast_to(np.asarray(z, float), (grid.d,)).tolist())
        Ay = sample_on_grid(field, grid, offset=y).values
        Az = sample_on_grid(field, grid, offset=z).values
        dA = np.sqrt(np.sum((Ay - Az) ** 2, axis=(0, 1, 2, 3)))
        rhs = windowed_norm(dA**p, grid, T, p, core)
        if rhs < skip_below:
            out.append(SensitivityResult(y, z, 0.0, rhs, None))
            continue
        cy, cz = solve(y), solve(z)
        lhs = 0.0
        for k in range(m + 1):
            dens = sum(grad_sq(cy.chi[key].values - cz.chi[key].values, k, grid.h, grid.d) for key in cy.keys())
            lhs += T ** (k - m) * windowed_norm(dens, grid, T, 2.0, core)
        out.append(SensitivityResult(y, z, lhs, rhs, lhs / rhs))
    return out


def local_energy_profile(cs: CorrectorSet, radii, centers) -> np.ndarray:
    """``(avg_{B(x0, r)} |nabla^m chi|^2)^{1/2}``, shape ``(len(centers), len(radii))``.

    ``centers`` are grid index tuples.
    """
    dens = cs.density(cs.m)
    out = np.zeros((len(centers), len(radii)))
    for j, r in enumerate(radii):
        avg = window_average(dens, cs.grid, r)
        for i, c in enumerate(centers):
            out[i, j] = math.sqrt(avg[tuple(c)])
    return out


# ---------------------------------------------------------------------------
# export


def export_corrector_set(cs: CorrectorSet, directory, dumps: bool = False, Ahat: HomogenizedTensor | None = None):
    """Write ``corrector.json`` (metadata) and optionally per-index CSV dumps."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = cs.metadata()
    meta["multi_index_order"] = [list(a) for a in multi_indices(cs.grid.d, cs.m)]
    if Ahat is not None:
        meta["Ahat"] = Ahat.to_json()
    if dumps:
        files = {}
        for k in cs.keys():
            name = "chi_" + _key_str(k).replace(",", "_") + ".csv"
            cs.chi[k].dump_csv(d / name)
            files[_key_str(k)] = name
        meta["dumps"] = files
    (d / "corrector.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return d / "corrector.json"
