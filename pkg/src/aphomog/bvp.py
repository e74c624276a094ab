"""Dirichlet problems on boxes, smoothing operators and the two-scale error.

A box ``[lower, upper]^d`` with ``N`` intervals per side has nodes
``lower + j h``, ``j = 0..N``.  It is embedded in a periodic grid of ``N + 1``
nodes per side; ``m`` node layers per side are pinned to zero and the
remaining nodes are unknowns.  Every stencil of an interior row then stays
inside the box, so the periodic assembly restricted to interior rows and
columns is exactly the zero-extension Dirichlet form.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.special import comb

from .apfield import CoeffField, as_evaluable, multi_indices
from .corrector import CorrectorSet, HomogenizedTensor
from .discrete import (
    GridField,
    Operator,
    SolverConfig,
    TorusGrid,
    assemble_operator,
    diff_array,
    grid_norm,
    sample_on_grid,
    solve_spd,
)
from .errors import GridIncompatible, KernelUnderresolved, ResolutionTooCoarse, SupportViolation

RESOLUTION_FACTOR = 16


@dataclass(frozen=True)
class BoxDomain:
    d: int
    n_per_dim: int
    lower: float = 0.0
    upper: float = 1.0
    boundary_width: int = 1

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ValueError("upper must exceed lower")
        if self.n_per_dim < 4 * self.boundary_width:
            raise ValueError("too few intervals for the pinned boundary layers")

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / self.n_per_dim

    @property
    def side(self) -> float:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(self.d)

    def torus(self) -> TorusGrid:
        n = self.n_per_dim + 1
        return TorusGrid(self.d, n * self.h, n, self.lower)

    def interior_mask(self) -> np.ndarray:
        j = np.arange(self.n_per_dim + 1)
        w = self.boundary_width
        inside = (j >= w) & (j <= self.n_per_dim - w)
        return np.logical_and.reduce(np.meshgrid(*([inside] * self.d), indexing="ij"))

    def boundary_distance(self) -> np.ndarray:
        """Per-axis distances to the boundary, shape ``(d, *shape)``."""
        x = self.lower + self.h * np.arange(self.n_per_dim + 1)
        dist1 = np.minimum(x - self.lower, self.upper - x)
        grids = np.meshgrid(*([dist1] * self.d), indexing="ij")
        return np.stack(grids)

    def with_width(self, m: int) -> "BoxDomain":
        return BoxDomain(self.d, self.n_per_dim, self.lower, self.upper, m)


@dataclass
class DirichletProblem:
    field: object
    eps: float
    f: object

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")

    @property
    def m(self) -> int:
        return self.field.m

    @property
    def n(self) -> int:
        return self.field.n

    @property
    def d(self) -> int:
        return self.field.d


def _source_values(f, grid: TorusGrid, n: int) -> np.ndarray:
    if isinstance(f, GridField):
        return np.array(f.values)
    if np.isscalar(f):
        return np.full((n,) + grid.shape, float(f))
    vals = np.asarray(as_evaluable(f, grid.d)(grid.points()), float)
    if vals.shape == grid.shape:
        vals = vals[None]
    else:
        vals = np.moveaxis(vals.reshape(grid.shape + (-1,)), -1, 0)
    if vals.shape[0] != n:
        raise ValueError(f"source has {vals.shape[0]} components, expected {n}")
    return vals


_op_cache: dict = {}
_op_lock = threading.Lock()


def _cached_operator(K) -> Operator:
    """Reuse the last operator (and its factorization) when the matrix is bit-identical.

    Constant-coefficient problems assemble the same matrix for ``u_eps`` and
    ``u_0``; only the most recent entry is kept.
    """
    K.sort_indices()
    h = hashlib.sha1()
    for arr in (np.asarray(K.shape), K.indptr, K.indices, K.data):
        h.update(np.ascontiguousarray(arr).tobytes())
    key = h.hexdigest()
    with _op_lock:
        op = _op_cache.get(key)
        if op is None:
            op = Operator(K, 0.0, K.shape[0], 1, const_blocks=False)
            _op_cache.clear()
            _op_cache[key] = op
    return op


def _dirichlet_solve(field, scale: float, f, dom: BoxDomain, cfg: SolverConfig | None) -> GridField:
    cfg = cfg or SolverConfig()
    dom = dom.with_width(field.m)
    grid = dom.torus()
    A = sample_on_grid(field, grid, scale=scale)
    full = assemble_operator(A, math.inf).matrix
    mask = dom.interior_mask().ravel()
    idx = np.concatenate([c * grid.size + np.flatnonzero(mask) for c in range(field.n)])
    K = full[idx][:, idx].tocsr()
    op = _cached_operator(K)
    b = _source_values(f, grid, field.n).ravel()[idx]
    u = np.zeros(field.n * grid.size)
    if np.any(b):
        x, _ = solve_spd(op, b, cfg)
        u[idx] = x
    return GridField(grid, u.reshape((field.n,) + grid.shape))


def solve_eps_problem(p: DirichletProblem, dom: BoxDomain, cfg: SolverConfig | None = None) -> GridField:
    """Discrete ``L_eps u = f`` with zero Dirichlet data; requires ``h <= eps/16``."""
    if dom.h > p.eps / RESOLUTION_FACTOR * (1 + 1e-12):
        raise ResolutionTooCoarse(p.eps, dom.h)
    return _dirichlet_solve(p.field, p.eps, p.f, dom, cfg)


def _constant_field(Ahat, d: int, m: int | None) -> CoeffField:
    if isinstance(Ahat, CoeffField):
        return Ahat
    if isinstance(Ahat, HomogenizedTensor):
        return Ahat.as_field()
    if m is None:
        raise ValueError("order m is required for a raw tensor")
    arr = np.asarray(Ahat, float)
    return CoeffField(d, m, arr.shape[2], arr, (), 1.0, "constant")


def solve_homogenized(Ahat, f, dom: BoxDomain, cfg: SolverConfig | None = None, m: int | None = None) -> GridField:
    """Same discretization with the constant homogenized tensor.

    ``m`` is needed only when ``Ahat`` is a raw array (in 1-D the tensor
    shape does not determine the order).
    """
    return _dirichlet_solve(_constant_field(Ahat, dom.d, m), 1.0, f, dom, cfg)


# ---------------------------------------------------------------------------
# smoothing


def bump(r: np.ndarray) -> np.ndarray:
    """``exp(-1/(1 - r^2))`` for ``r < 1``, else 0."""
    out = np.zeros_like(r, dtype=float)
    inside = r < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def mollifier_kernel(d: int, eps: float, h: float) -> np.ndarray:
    if eps < 2 * h * (1 - 1e-12):
        raise KernelUnderresolved(f"eps={eps} below 2h={2 * h}")
    r = int(math.ceil(eps / h))
    offs = np.arange(-r, r + 1) * h
    pts = np.stack(np.meshgrid(*([offs] * d), indexing="ij"))
    k = bump(np.sqrt(np.sum(pts**2, axis=0)) / eps)
    return k / k.sum()


def mollify_S(f: GridField, eps: float) -> GridField:
    """Discrete convolution with the normalized bump of radius ``eps`` (zero extension)."""
    k = mollifier_kernel(f.grid.d, eps, f.grid.h)
    out = np.stack([ndimage.convolve(c, k, mode="constant", cval=0.0) for c in f.values])
    return GridField(f.grid, out)


def smoothstep(t: np.ndarray, k: int) -> np.ndarray:
    """C^k polynomial step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(t, 0.0, 1.0)
    acc = np.zeros_like(t)
    for j in range(k + 1):
        acc += comb(k + j, j) * comb(2 * k + 1, k - j) * (-t) ** j
    return t ** (k + 1) * acc


def cutoff_eta(dom: BoxDomain, delta: float, order: int | None = None) -> GridField:
    """Product of per-axis smoothsteps: 0 within ``delta`` of the boundary, 1 beyond ``2 delta``."""
    if delta < 4 * dom.h * (1 - 1e-12):
        raise ValueError("delta must be at least 4h")
    k = dom.boundary_width if order is None else order
    dist = dom.boundary_distance()
    eta = np.prod(smoothstep((dist - delta) / delta, k), axis=0)
    return GridField(dom.torus(), eta)


@dataclass(frozen=True)
class SmoothingConfig:
    eps: float
    delta: float | None = None
    check: bool = True

    def resolve_delta(self, dom: BoxDomain) -> float:
        delta = self.delta if self.delta is not None else max(2 * self.eps, dom.diameter / 16)
        if self.check and not (2 * self.eps * (1 - 1e-12) <= delta <= 2):
            raise ValueError("delta must satisfy 2 eps <= delta <= 2")
        return delta


def K_eps_delta(f: GridField, scfg: SmoothingConfig, dom: BoxDomain, order: int | None = None) -> GridField:
    """``S_eps(eta_delta f)``; raises :class:`SupportViolation` if mass reaches the eps-band."""
    delta = scfg.resolve_delta(dom)
    eta = cutoff_eta(dom, delta, order)
    out = mollify_S(f * eta.values, scfg.eps)
    dist = dom.boundary_distance().min(axis=0)
    band = dist <= scfg.eps * (1 + 1e-12)
    if np.any(out.values[:, band] != 0):
        raise SupportViolation(f"K_eps_delta leaks into the eps-band (delta={delta}, eps={scfg.eps})")
    return out


# ---------------------------------------------------------------------------
# two-scale expansion


def two_scale_corrector_grid(field, eps: float, dom: BoxDomain, T: float, c_box: float = 8.0) -> TorusGrid:
    """Corrector grid aligned with the fast variable ``x / eps`` on ``dom``.

    Spacing is ``h / eps``.  For 1-periodic fields the unit box suffices;
    otherwise the box covers ``c_box * T`` and 2.5 times the rescaled domain,
    centred on it, so every sample lies in the central half.
    """
    hc = dom.h / eps
    if getattr(field, "period", lambda: None)() == 1.0:
        n = int(round(1.0 / hc))
        if abs(n * hc - 1.0) > 1e-9:
            raise GridIncompatible("cell spacing does not divide the period")
        return TorusGrid(dom.d, 1.0, n, 0.0)
    length = max(c_box * T, 2.5 * dom.side / eps)
    n = int(math.ceil(length / hc))
    n += n % 2
    centre = 0.5 * (dom.lower + dom.upper) / eps
    lo = dom.lower / eps
    shift = round((lo - (centre - 0.5 * n * hc)) / hc)
    return TorusGrid(dom.d, n * hc, n, lo - shift * hc)


@dataclass
class TwoScaleResult:
    omega: GridField
    norms: dict
    outside_core: bool


def two_scale_error(u_eps: GridField, u0: GridField, cs: CorrectorSet, scfg: SmoothingConfig,
                    dom: BoxDomain) -> TwoScaleResult:
    """``omega = u_eps - u0 - eps^m sum chi^gamma(x/eps) K(F^gamma u0)`` and its norms."""
    eps = scfg.eps
    m, n = cs.m, cs.n
    dom = dom.with_width(m)
    g = u_eps.grid
    cg = cs.grid
    hc = g.h / eps
    if abs(cg.h - hc) > 1e-9 * hc:
        raise GridIncompatible(f"corrector spacing {cg.h} differs from h/eps = {hc}")
    j0 = (dom.lower / eps - cg.origin) / hc
    if abs(j0 - round(j0)) > 1e-6:
        raise GridIncompatible("domain nodes do not map onto corrector nodes")
    idx1 = (int(round(j0)) + np.arange(g.n_per_dim))
    core_lo = cg.n_per_dim // 4
    periodic = cg.extent == 1.0
    outside = (not periodic) and bool(np.any((idx1 < core_lo) | (idx1 >= cg.n_per_dim - core_lo)))
    ix = np.ix_(*([idx1 % cg.n_per_dim] * g.d))

    corr = np.zeros((n,) + g.shape)
    for gam in multi_indices(g.d, m):
        for l in range(n):
            Du = diff_array(u0.values[l][None], gam, g.h, "forward")[0]
            Kd = K_eps_delta(GridField(g, Du), scfg, dom)
            chi = cs.chi[(gam, l)].values[(slice(None),) + ix]
            corr += chi * Kd.values[0][None]
    diff = u_eps - u0
    omega = diff - eps**m * corr
    norms = {
        "omega_L2": grid_norm(omega, "L2"),
        "omega_Hm1": grid_norm(omega, "Hk", k=m - 1),
        "omega_Hm": grid_norm(omega, "Hk", k=m),
        "diff_L2": grid_norm(diff, "L2"),
        "diff_Hm1": grid_norm(diff, "Hk", k=m - 1),
        "diff_Hm": grid_norm(diff, "Hk", k=m),
    }
    return TwoScaleResult(omega, norms, outside)
