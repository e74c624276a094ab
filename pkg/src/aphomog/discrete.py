"""Periodic-box finite differences and the SPD solver.

Derivatives are compositions of one-sided divided differences with periodic
wrap.  The forward difference ``F_k`` and the backward difference ``B_k``
satisfy ``<F_k u, v>_h = -<u, B_k v>_h`` exactly, so the operator

    Op u = (-1)^m sum_{alpha, beta} B^alpha(A^{alpha beta} F^beta u) + T^{-2m} u

induces the bilinear form ``h^d sum_x (F^alpha v) A^{alpha beta} (F^beta u)
+ T^{-2m} h^d sum_x u v`` with no consistency defect at the discrete level.

Grid arrays are stored component-first, ``values[c, i_1, ..., i_d]``.  The
flat dump format (:meth:`GridField.to_flat`) is row-major over the spatial
indices with the component index innermost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .apfield import multi_indices
from .errors import IndefiniteDetected, NonConvergence, ShapeMismatch


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[origin, origin + extent)^d``.

    ``origin`` defaults to ``-extent/2`` so the box is centred at 0 and the
    periodic seam sits at ``+-extent/2``.
    """

    d: int
    extent: float
    n_per_dim: int
    origin: float | None = None

    def __post_init__(self):
        if self.n_per_dim < 4 or not self.extent > 0:
            raise ValueError("need extent > 0 and at least 4 points per dimension")
        if self.origin is None:
            object.__setattr__(self, "origin", -0.5 * self.extent)

    @property
    def h(self) -> float:
        return self.extent / self.n_per_dim

    @property
    def shape(self) -> tuple:
        return (self.n_per_dim,) * self.d

    @property
    def size(self) -> int:
        return self.n_per_dim**self.d

    def coords(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n_per_dim)

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, d)``."""
        c = self.coords()
        return np.stack(np.meshgrid(*([c] * self.d), indexing="ij"), -1)

    def check_order(self, m: int):
        if self.n_per_dim < 4 * m:
            raise ValueError(f"grid needs n_per_dim >= 4m = {4 * m}")

    def core_mask(self, fraction: float = 1.0) -> np.ndarray:
        """Nodes within ``fraction * extent / 2`` of the box centre (sup-norm)."""
        if fraction >= 1.0:
            return np.ones(self.shape, bool)
        c = self.coords() - (self.origin + 0.5 * self.extent)
        inside = np.abs(c) <= fraction * 0.5 * self.extent + 1e-12 * self.extent
        return np.logical_and.reduce(np.meshgrid(*([inside] * self.d), indexing="ij"))

    def describe(self) -> dict:
        return {"d": self.d, "extent": self.extent, "n_per_dim": self.n_per_dim, "h": self.h}


class GridField:
    """Sampled vector field on a :class:`TorusGrid`; read-only after construction."""

    def __init__(self, grid: TorusGrid, values):
        values = np.array(values, dtype=float)
        if values.shape == grid.shape:
            values = values[None]
        if values.shape[1:] != grid.shape:
            raise ShapeMismatch(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid field has non-finite entries")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid: TorusGrid, components: int = 1) -> "GridField":
        return cls(grid, np.zeros((components,) + grid.shape))

    def _like(self, values) -> "GridField":
        return GridField(self.grid, values)

    def __add__(self, other):
        return self._like(self.values + _vals(other))

    def __sub__(self, other):
        return self._like(self.values - _vals(other))

    def __mul__(self, c):
        return self._like(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def to_flat(self) -> np.ndarray:
        return np.moveaxis(self.values, 0, -1).ravel()

    def dump_binary(self, path):
        """Raw little-endian float64, node-major with component innermost."""
        self.to_flat().astype("<f8").tofile(path)

    def dump_csv(self, path):
        pts = self.grid.points().reshape(-1, self.grid.d)
        vals = np.moveaxis(self.values, 0, -1).reshape(-1, self.components)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(self.grid.d)] + [f"u{c}" for c in range(self.components)])
            for p, v in zip(pts, vals):
                w.writerow([repr(float(t)) for t in p] + [repr(float(t)) for t in v])


def _vals(x):
    return x.values if isinstance(x, GridField) else x


@dataclass
class SampledCoeff:
    """Coefficient tensor sampled at grid nodes, ``values[alpha, beta, i, j, *grid]``."""

    grid: TorusGrid
    m: int
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[2]

    @property
    def n_alpha(self) -> int:
        return self.values.shape[0]

    def is_constant(self) -> bool:
        v = self.values.reshape(self.values.shape[:4] + (-1,))
        return bool(np.all(v == v[..., :1]))


def sample_on_grid(field, grid: TorusGrid, scale: float = 1.0, offset=None):
    """Exact node samples ``x -> field((x + offset) / scale)``.

    Coefficient fields (anything with ``m`` and ``tensor_shape``) give a
    :class:`SampledCoeff`; other evaluables give a :class:`GridField`.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    pts = grid.points()
    if offset is not None:
        pts = pts + np.broadcast_to(np.asarray(offset, float), (grid.d,))
    vals = np.asarray(field(pts / scale), float)
    if hasattr(field, "tensor_shape") and hasattr(field, "m"):
        vals = np.moveaxis(vals, tuple(range(grid.d)), tuple(range(4, 4 + grid.d)))
        return SampledCoeff(grid, field.m, np.ascontiguousarray(vals))
    if vals.shape == grid.shape:
        return GridField(grid, vals)
    vals = vals.reshape(grid.shape + (-1,))
    return GridField(grid, np.moveaxis(vals, -1, 0))


# ---------------------------------------------------------------------------
# differences


def diff_array(u: np.ndarray, alpha, h: float, variant: str = "forward", axis0: int = 1) -> np.ndarray:
    """``D^alpha`` of an array whose spatial axes start at ``axis0``."""
    if variant not in ("forward", "backward"):
        raise ValueError("variant must be 'forward' or 'backward'")
    out = u
    for k, a in enumerate(alpha):
        ax = axis0 + k
        for _ in range(a):
            if variant == "forward":
                out = (np.roll(out, -1, ax) - out) / h
            else:
                out = (out - np.roll(out, 1, ax)) / h
    return out


def apply_Dalpha(u: GridField, alpha, variant: str = "forward") -> GridField:
    alpha = tuple(alpha)
    if len(alpha) != u.grid.d:
        raise ShapeMismatch("multi-index length must equal grid dimension")
    return GridField(u.grid, diff_array(u.values, alpha, u.grid.h, variant))


def mass_coefficient(T: float, m: int) -> float:
    return 0.0 if math.isinf(T) else float(T) ** (-2 * m)


def apply_operator(A: SampledCoeff, T: float, u: GridField) -> GridField:
    """Matrix-free application of ``(-1)^m sum B^alpha(A F^beta u) + T^{-2m} u``."""
    grid = u.grid
    if A.values.shape[4:] != grid.shape or A.n != u.components:
        raise ShapeMismatch("coefficient samples incompatible with field")
    m = A.m
    alphas = multi_indices(grid.d, m)
    Fu = [diff_array(u.values, b, grid.h, "forward") for b in alphas]
    out = mass_coefficient(T, m) * u.values
    sign = (-1) ** m
    for ia, a in enumerate(alphas):
        flux = sum(np.einsum("ij...,j...->i...", A.values[ia, ib], Fu[ib]) for ib in range(len(alphas)))
        out = out + sign * diff_array(flux, a, grid.h, "backward")
    return GridField(grid, out)


def _shift_matrix(N: int) -> sp.csr_matrix:
    idx = np.arange(N)
    return sp.csr_matrix((np.ones(N), (idx, (idx + 1) % N)), shape=(N, N))


def diff_matrix(grid: TorusGrid, alpha, variant: str = "forward") -> sp.csr_matrix:
    """Sparse matrix of ``D^alpha`` acting on row-major flattened scalar fields."""
    N, h = grid.n_per_dim, grid.h
    S = _shift_matrix(N)
    I1 = sp.identity(N, format="csr")
    one = (S - I1) / h if variant == "forward" else (I1 - S.T.tocsr()) / h
    out = sp.identity(grid.size, format="csr")
    for k, a in enumerate(alpha):
        if a == 0:
            continue
        Dk = one
        for _ in range(a - 1):
            Dk = Dk @ one
        mats = [I1] * grid.d
        mats[k] = Dk
        full = mats[0]
        for mat in mats[1:]:
            full = sp.kron(full, mat, format="csr")
        out = out @ full
    return out.tocsr()


@dataclass
class Operator:
    """Linear operator on flat component-major vectors.

    ``const_blocks`` lists the blocks of length ``block_size`` on which the
    constant vector is an exact eigenvector with eigenvalue ``mass`` (and
    likewise for the transpose); the solver handles those modes exactly.
    """

    matrix: sp.spmatrix
    mass: float
    block_size: int
    n_blocks: int
    const_blocks: bool = True
    symmetric: bool = True
    _lu: object = dc_field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc())
        return self._lu


def assemble_operator(A: SampledCoeff, T: float) -> Operator:
    """Sparse assembly of the operator applied by :func:`apply_operator`."""
    grid = A.grid
    grid.check_order(A.m)
    alphas = multi_indices(grid.d, A.m)
    F = [diff_matrix(grid, a, "forward") for a in alphas]
    n = A.n
    blocks = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = None
            for ia in range(len(alphas)):
                for ib in range(len(alphas)):
                    coef = A.values[ia, ib, i, j].ravel()
                    if not np.any(coef):
                        continue
                    term = F[ia].T @ sp.diags(coef) @ F[ib]
                    acc = term if acc is None else acc + term
            blocks[i][j] = acc if acc is not None else sp.csr_matrix((grid.size, grid.size))
    K = sp.bmat(blocks, format="csr")
    mass = mass_coefficient(T, A.m)
    if mass:
        K = K + mass * sp.identity(K.shape[0], format="csr")
    sym = bool(np.allclose(A.values, A.values.transpose(1, 0, 3, 2, *range(4, 4 + grid.d))))
    return Operator(K.tocsr(), mass, grid.size, n, True, sym)


def laplacian_power_operator(grid: TorusGrid, m: int, T: float) -> Operator:
    """``(-Delta_h)^m + T^{-2m}`` with ``-Delta_h = sum_k F_k^T F_k`` (scalar)."""
    lap = None
    for k in range(grid.d):
        e = tuple(1 if j == k else 0 for j in range(grid.d))
        Fk = diff_matrix(grid, e, "forward")
        term = Fk.T @ Fk
        lap = term if lap is None else lap + term
    K = lap
    for _ in range(m - 1):
        K = K @ lap
    mass = mass_coefficient(T, m)
    if mass:
        K = K + mass * sp.identity(grid.size, format="csr")
    return Operator(K.tocsr(), mass, grid.size, 1, True, True)


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-9
    max_iter: int = 20000
    preconditioner: str = "diagonal"
    method: str = "direct"
    refine_steps: int = 4

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("none", "diagonal"):
            raise ValueError("preconditioner must be 'none' or 'diagonal'")
        if self.method not in ("direct", "cg"):
            raise ValueError("method must be 'direct' or 'cg'")


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    rhs_mean: float = 0.0
    floor: float = 0.0
    at_floor: bool = False


def _project(x: np.ndarray, nb: int) -> np.ndarray:
    xb = x.reshape(nb, -1)
    return (xb - xb.mean(axis=1, keepdims=True)).ravel()


def solve_spd(op: Operator, rhs, cfg: SolverConfig | None = None, mean_free: bool = False):
    """Solve ``op u = rhs``; returns ``(u, SolveReport)``.

    On return ``||op u - rhs|| <= rel_tol ||rhs||``, otherwise
    :class:`NonConvergence` is raised.  The one exception is a tolerance below
    the rounding floor ``eps ||(|op| |u| + |rhs|)|| / ||rhs||`` (high-order
    stencils on fine grids): a residual at that floor is accepted and the
    report carries ``at_floor=True``.  Constant modes (``op.const_blocks``)
    are split off exactly: their coefficient is ``mean(rhs) / mass``.  With
    ``mean_free=True`` the caller asserts the right-hand side has zero block
    means in exact arithmetic (e.g. a discrete divergence), so the rounding
    residue in the means is discarded rather than amplified by ``1/mass``.
    """
    cfg = cfg or SolverConfig()
    grid = rhs.grid if isinstance(rhs, GridField) else None
    b = rhs.values.ravel() if isinstance(rhs, GridField) else np.asarray(rhs, float).ravel()
    if b.size != op.size:
        raise ShapeMismatch("right-hand side size does not match operator")

    def wrap(x):
        return GridField(grid, x.reshape(rhs.values.shape)) if grid is not None else x

    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return wrap(np.zeros_like(b)), SolveReport(cfg.method, 0, 0.0)

    nb = op.n_blocks
    deflate = op.const_blocks
    const = np.zeros(nb)
    rhs_mean = 0.0
    b0 = b
    if deflate:
        means = b.reshape(nb, -1).mean(axis=1)
        rhs_mean = float(np.max(np.abs(means)))
        if not mean_free:
            if op.mass > 0:
                const = means / op.mass
            elif rhs_mean > 1e-12 * bnorm / math.sqrt(b.size):
                raise ValueError("singular operator with non-mean-free right-hand side")
        b0 = _project(b, nb)

    if cfg.method == "direct":
        x, its = _direct(op, b0, deflate, cfg)
    else:
        x, its = _pcg(op, b0, deflate, cfg)

    u = x + np.repeat(const, op.block_size)
    res = float(np.linalg.norm(b - op.matvec(u)) / bnorm)
    floor, at_floor = 0.0, False
    if res > cfg.rel_tol:
        floor = rounding_floor(op, u, b)
        if res > floor:
            raise NonConvergence(its, res)
        at_floor = True
    return wrap(u), SolveReport(cfg.method, its, res, rhs_mean, floor, at_floor)


def rounding_floor(op: Operator, u: np.ndarray, b: np.ndarray) -> float:
    """Componentwise backward-error floor of the residual for a float64 ``u``."""
    absK = abs(op.matrix)
    return float(np.finfo(float).eps * np.linalg.norm(absK @ np.abs(u) + np.abs(b)) / np.linalg.norm(b))


def _direct(op, b0, deflate, cfg):
    lu = op.factor()
    nb = op.n_blocks
    proj = (lambda v: _project(v, nb)) if deflate else (lambda v: v)
    x = proj(lu.solve(b0))
    bnorm = np.linalg.norm(b0) or 1.0
    r = proj(b0 - op.matvec(x))
    res = np.linalg.norm(r) / bnorm
    steps = 0
    while res > 0.1 * cfg.rel_tol and steps < cfg.refine_steps:
        x_new = x + proj(lu.solve(r))
        r_new = proj(b0 - op.matvec(x_new))
        res_new = np.linalg.norm(r_new) / bnorm
        steps += 1
        if res_new >= res:
            break
        x, r, res = x_new, r_new, res_new
    return x, steps + 1


def _pcg(op, b0, deflate, cfg):
    nb = op.n_blocks
    proj = (lambda v: _project(v, nb)) if deflate else (lambda v: v)
    if cfg.preconditioner == "diagonal":
        dinv = 1.0 / op.diagonal()
    else:
        dinv = np.ones(op.size)
    bnorm = np.linalg.norm(b0)
    x = np.zeros_like(b0)
    if bnorm == 0:
        return x, 0
    r = b0.copy()
    z = proj(dinv * r)
    p = z.copy()
    rz = r @ z
    for it in range(1, cfg.max_iter + 1):
        Ap = proj(op.matvec(p))
        pAp = p @ Ap
        if pAp <= 0:
            raise IndefiniteDetected(f"non-positive curvature {pAp:.3e} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= cfg.rel_tol * bnorm:
            # guard against drift of the recursive residual
            rt = proj(b0 - op.matvec(x))
            if np.linalg.norm(rt) <= cfg.rel_tol * bnorm:
                return x, it
            r = rt
        z = proj(dinv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergence(cfg.max_iter, float(np.linalg.norm(b0 - op.matvec(x)) / bnorm))


def linear_operator(fn: Callable, size: int) -> Operator:
    """Wrap a dense or callable map for tests (identity, small matrices)."""
    M = fn if sp.issparse(fn) else sp.csr_matrix(fn)
    return Operator(M, 0.0, size, 1, const_blocks=False)


# ---------------------------------------------------------------------------
# norms


def grad_sq(values: np.ndarray, l: int, h: float, d: int) -> np.ndarray:
    """``|nabla^l u|^2`` summed over multi-indices ``|alpha| = l`` and leading axes.

    ``values`` has the spatial axes last (``d`` of them).
    """
    lead = values.ndim - d
    flat = values.reshape((-1,) + values.shape[lead:])
    out = np.zeros(values.shape[lead:])
    for a in multi_indices(d, l):
        D = diff_array(flat, a, h, "forward", axis0=1)
        out += np.sum(D * D, axis=0)
    return out


def window_kernel_fft(grid: TorusGrid, R: float) -> tuple:
    r = int(math.floor(R / grid.h + 1e-9))
    offs = np.arange(-r, r + 1)
    mesh = np.stack(np.meshgrid(*([offs] * grid.d), indexing="ij"), -1).reshape(-1, grid.d)
    mesh = mesh[np.linalg.norm(mesh * grid.h, axis=1) <= R * (1 + 1e-12)]
    ker = np.zeros(grid.shape)
    np.add.at(ker, tuple((mesh % grid.n_per_dim).T), 1.0)
    return np.fft.rfftn(ker), float(len(mesh))


def window_average(density: np.ndarray, grid: TorusGrid, R: float) -> np.ndarray:
    """Periodic ball average of a nonnegative node density around every node."""
    if R < grid.h * (1 - 1e-12):
        raise ValueError("window radius must be at least h")
    kf, count = window_kernel_fft(grid, R)
    axes = tuple(range(grid.d))
    conv = np.fft.irfftn(np.fft.rfftn(density, axes=axes) * np.conj(kf), s=grid.shape, axes=axes)
    return np.maximum(conv, 0.0) / count


def windowed_norm(density: np.ndarray, grid: TorusGrid, R: float, p: float = 2.0, core=None) -> float:
    """``max_x (avg_{B(x,R)} density)^(1/p)`` over nodes ``x`` in ``core``."""
    avg = window_average(density, grid, R)
    if core is not None:
        avg = avg[core]
    return float(np.max(avg) ** (1.0 / p))


def grid_norm(u: GridField, kind: str = "L2", R: float | None = None, k: int | None = None, core=None) -> float:
    """Discrete norms: ``L2``, windowed ``SR2`` (needs ``R``), or forward-difference ``Hk``."""
    g = u.grid
    if kind == "L2":
        return float(math.sqrt(g.h**g.d * np.sum(u.values**2)))
    if kind == "SR2":
        if R is None:
            raise ValueError("SR2 needs R")
        return windowed_norm(np.sum(u.values**2, axis=0), g, R, 2.0, core)
    if kind == "Hk":
        if k is None:
            raise ValueError("Hk needs k")
        tot = sum(g.h**g.d * np.sum(grad_sq(u.values, l, g.h, g.d)) for l in range(k + 1))
        return float(math.sqrt(tot))
    raise ValueError(f"unknown norm kind {kind!r}")
