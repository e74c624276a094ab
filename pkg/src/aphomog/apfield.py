"""Almost-periodic coefficient fields and almost-periodicity functionals.

Coefficient tensors ``A[alpha, beta, i, j]`` are stored as arrays of shape
``(M, M, n, n)`` where ``M`` is the number of multi-indices of order ``m`` in
``d`` variables, enumerated lexicographically on the exponent tuples (see
:func:`multi_indices`).  A field is a finite trigonometric sum

    A(y) = A0 + sum_k amp_k * cos(xi_k . y + phase_k)

so evaluation, translation and mean values are exact.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import InadmissibleField

MultiIndex = tuple  # tuple of d non-negative ints


@functools.lru_cache(maxsize=None)
def multi_indices(d: int, order: int) -> tuple:
    """All multi-indices of ``order`` in ``d`` variables, lexicographic ascending."""
    out = [a for a in itertools.product(range(order + 1), repeat=d) if sum(a) == order]
    return tuple(sorted(out))


def n_multi(d: int, order: int) -> int:
    return len(multi_indices(d, order))


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass(frozen=True)
class CoeffMode:
    frequency: np.ndarray  # (d,) radians per unit length
    phase: float
    amplitude: np.ndarray  # (M, M, n, n)

    def __post_init__(self):
        object.__setattr__(self, "frequency", np.atleast_1d(np.asarray(self.frequency, float)))
        object.__setattr__(self, "amplitude", np.asarray(self.amplitude, float))
        if not (np.all(np.isfinite(self.frequency)) and np.all(np.isfinite(self.amplitude))):
            raise ValueError("mode frequency and amplitude must be finite")


@dataclass(frozen=True)
class CoeffField:
    """Trigonometric-polynomial coefficient tensor with ellipticity constant ``mu``."""

    d: int
    m: int
    n: int
    constant_part: np.ndarray
    modes: tuple = ()
    mu: float = 1.0
    name: str = "field"

    def __post_init__(self):
        M = n_multi(self.d, self.m)
        shape = (M, M, self.n, self.n)
        const = np.asarray(self.constant_part, float)
        if const.shape != shape:
            const = const.reshape(shape)
        object.__setattr__(self, "constant_part", const)
        object.__setattr__(self, "modes", tuple(self.modes))
        for mode in self.modes:
            if mode.frequency.shape != (self.d,) or mode.amplitude.shape != shape:
                raise ValueError("mode shape does not match field dimensions")

    @property
    def tensor_shape(self) -> tuple:
        return self.constant_part.shape

    @property
    def n_alpha(self) -> int:
        return self.constant_part.shape[0]

    def __call__(self, y) -> np.ndarray:
        """Evaluate at points ``y`` of shape ``(..., d)``; returns ``(..., M, M, n, n)``."""
        y = np.asarray(y, float)
        if self.d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        lead = y.shape[:-1]
        out = np.broadcast_to(self.constant_part, lead + self.tensor_shape).copy()
        if not self.modes:
            return out
        xi = np.stack([md.frequency for md in self.modes])  # (K, d)
        ph = np.array([md.phase for md in self.modes])
        amps = np.stack([md.amplitude for md in self.modes])  # (K, M, M, n, n)
        c = np.cos(y @ xi.T + ph)  # (..., K)
        out += np.tensordot(c, amps, axes=([-1], [0]))
        return out

    def translate(self, y) -> "CoeffField":
        """The field ``x -> A(x + y)``, exactly."""
        y = np.atleast_1d(np.asarray(y, float))
        modes = tuple(
            CoeffMode(md.frequency, md.phase + float(md.frequency @ y), md.amplitude)
            for md in self.modes
        )
        return CoeffField(self.d, self.m, self.n, self.constant_part, modes, self.mu, self.name)

    def scaled_modes(self, factor: float) -> "CoeffField":
        modes = tuple(CoeffMode(md.frequency, md.phase, factor * md.amplitude) for md in self.modes)
        return CoeffField(self.d, self.m, self.n, self.constant_part, modes, self.mu, self.name)

    def period(self):
        """Common period (per axis) if every wavenumber is an integer, else ``None``."""
        for md in self.modes:
            k = md.frequency / (2 * np.pi)
            if not np.allclose(k, np.round(k), atol=1e-12):
                return None
        return 1.0

    def is_symmetric(self, tol=1e-12) -> bool:
        def sym(t):
            return np.allclose(t, t.transpose(1, 0, 3, 2), atol=tol)

        return sym(self.constant_part) and all(sym(md.amplitude) for md in self.modes)


def isotropic_tensor(d: int, m: int, n: int, value: float = 1.0) -> np.ndarray:
    """``value * delta^{alpha beta} delta_{ij}``."""
    M = n_multi(d, m)
    return value * np.einsum("ab,ij->abij", np.eye(M), np.eye(n))


def scalar_field(
    a0: float,
    modes: Sequence = (),
    *,
    d: int = 1,
    m: int = 1,
    n: int = 1,
    mu: float | None = None,
    name: str = "field",
) -> CoeffField:
    """Field ``a(y) * I`` with ``a(y) = a0 + sum amp*cos(2*pi*k.y + phase)``.

    ``modes`` holds ``(wavenumber, amplitude, phase)`` triples, wavenumber in
    cycles per unit length (scalar for d=1 or a d-vector).
    """
    unit = isotropic_tensor(d, m, n)
    cmodes = []
    for spec in modes:
        k, amp = spec[0], spec[1]
        ph = spec[2] if len(spec) > 2 else 0.0
        k = np.broadcast_to(np.asarray(k, float), (d,)) if np.ndim(k) == 0 else np.asarray(k, float)
        cmodes.append(CoeffMode(2 * np.pi * k, ph, amp * unit))
    if mu is None:
        total = sum(abs(s[1]) for s in modes)
        lo, hi = a0 - total, a0 + total
        mu = min(lo, 1.0 / hi)
    return CoeffField(d, m, n, a0 * unit, tuple(cmodes), mu, name)


def eval_coeff(field: CoeffField, y) -> np.ndarray:
    return field(y)


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class AdmissibilityReport:
    bound_ok: bool
    coercive_ok: bool
    min_eigen: float
    max_entry: float

    @property
    def ok(self) -> bool:
        return self.bound_ok and self.coercive_ok


def _default_check_points(field: CoeffField, per_dim: int, extent: float | None) -> np.ndarray:
    if extent is None:
        period = field.period()
        extent = period if period is not None else 64.0
    if field.d == 1:
        npts = per_dim * max(1, int(math.ceil(extent)))
        return (np.arange(npts) * (extent / npts))[:, None]
    g = np.arange(per_dim) * (extent / per_dim)
    return np.stack(np.meshgrid(*([g] * field.d), indexing="ij"), -1).reshape(-1, field.d)


def legendre_matrix(A: np.ndarray) -> np.ndarray:
    """Symmetrized (M*n) x (M*n) matrix of the pointwise quadratic form."""
    M, _, n, _ = A.shape[-4:]
    Q = np.swapaxes(A, -3, -2).reshape(A.shape[:-4] + (M * n, M * n))
    return 0.5 * (Q + np.swapaxes(Q, -1, -2))


def check_admissible(
    field: CoeffField, per_dim: int = 256, extent: float | None = None, rtol: float = 1e-12
) -> AdmissibilityReport:
    """Sample the field and test the sup bound ``|A| <= 1/mu`` and pointwise ellipticity.

    Pointwise Legendre ellipticity ``>= mu`` is sufficient for the integral
    coercivity condition.
    """
    if not field.mu > 0:
        raise InadmissibleField(f"ellipticity constant must be positive, got {field.mu}")
    y = _default_check_points(field, per_dim, extent)
    A = field(y)
    max_entry = float(np.max(np.abs(A)))
    min_eig = float(np.min(np.linalg.eigvalsh(legendre_matrix(A))))
    bound_ok = max_entry <= (1.0 / field.mu) * (1 + rtol)
    coercive_ok = min_eig >= field.mu * (1 - rtol)
    return AdmissibilityReport(bound_ok, coercive_ok, min_eig, max_entry)


# ---------------------------------------------------------------------------
# evaluable fields and differences


class Evaluable:
    """Callable field ``f(y)`` on R^d, ``y`` of shape ``(..., d)``."""

    def __init__(self, fn: Callable, d: int):
        self.fn = fn
        self.d = d

    def __call__(self, y):
        return self.fn(np.asarray(y, float))


def as_evaluable(f, d: int | None = None) -> Evaluable:
    if isinstance(f, Evaluable):
        return f
    if isinstance(f, CoeffField):
        return Evaluable(f, f.d)
    dim = d if d is not None else getattr(f, "d", None)
    if dim is None:
        raise ValueError("cannot infer dimension of evaluable field; pass d")
    return Evaluable(f, dim)


def delta_yz(f, y, z) -> Evaluable:
    """``x -> f(x + y) - f(x + z)``."""
    f = as_evaluable(f)
    y = np.atleast_1d(np.asarray(y, float))
    z = np.atleast_1d(np.asarray(z, float))
    return Evaluable(lambda x: f(x + y) - f(x + z), f.d)


def _delta_P(f: Evaluable, x: np.ndarray, shifts: Sequence) -> np.ndarray:
    """Iterated difference ``Delta_{y1 z1} ... Delta_{yk zk} f`` at ``x``.

    ``shifts`` is a list of ``(y, z)`` pairs; entries may carry leading batch
    axes that broadcast against ``x``.
    """
    total = None
    for signs in itertools.product((0, 1), repeat=len(shifts)):
        s = 0.0
        for (y, z), b in zip(shifts, signs):
            s = s + (z if b else y)
        val = f(x + s)
        if sum(signs) % 2:
            val = -val
        total = val if total is None else total + val
    if total is None:
        return f(x)
    return total


# ---------------------------------------------------------------------------
# sampling and ball quadrature


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling budget for sup/inf estimates.

    ``center_samples`` base points for sup over x, ``outer_samples`` points for
    the sup over shifts y, ``shift_candidates`` minimum grid points per
    dimension for the inf over ``|z| <= L``.  Shift candidates are multiples
    of a spacing no coarser than ``z_spacing``, so candidate sets for larger
    L contain those for smaller L.  Outer shifts y are drawn from a window
    starting at ``outer_offset``: shifts with ``|y| <= L`` are trivially
    matched by ``z = y`` and say nothing about almost-periodicity.
    """

    center_samples: int = 16
    shift_candidates: int = 65
    ball_quadrature: int = 32
    seed: int = 0
    outer_samples: int = 8
    sample_extent: float = 8.0
    panel_width: float = 1.0
    refine: bool = True
    refine_top: int = 2
    refine_evals: int = 200
    z_spacing: float = 1.0 / 32
    outer_offset: float = 1000.0

    def __post_init__(self):
        for name in ("center_samples", "shift_candidates", "ball_quadrature", "outer_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _halton(d: int, n: int, seed: int, extent: float) -> np.ndarray:
    pts = np.zeros((n, d))
    if n > 1:
        eng = qmc.Halton(d, scramble=True, seed=seed)
        pts[1:] = eng.random(n - 1) * extent
    return pts


def sample_centers(d: int, cfg: SamplerConfig) -> np.ndarray:
    """Base points for sup over x: the origin followed by a scrambled Halton prefix."""
    return _halton(d, cfg.center_samples, cfg.seed, cfg.sample_extent)


@functools.lru_cache(maxsize=64)
def _ball_rule(d: int, R: float, order: int, panel_width: float):
    g, w = np.polynomial.legendre.leggauss(order)
    if d == 1:
        npan = max(1, int(math.ceil(2 * R / panel_width)))
        edges = np.linspace(-R, R, npan + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * g[None]).ravel()[:, None]
        weights = (half[:, None] * w[None]).ravel()
    elif d == 2:
        npan = max(1, int(math.ceil(R / panel_width)))
        edges = np.linspace(0.0, R, npan + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        r = (mid[:, None] + half[:, None] * g[None]).ravel()
        wr = (half[:, None] * w[None]).ravel() * r
        nth = order * max(1, int(math.ceil(2 * np.pi * R / panel_width)))
        th = 2 * np.pi * np.arange(nth) / nth
        nodes = np.stack(
            [np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], -1
        )
        weights = np.outer(wr, np.full(nth, 2 * np.pi / nth)).ravel()
    else:
        raise NotImplementedError("ball quadrature implemented for d in {1, 2}")
    return nodes, weights / weights.sum()


def ball_rule(d: int, R: float, cfg: SamplerConfig):
    return _ball_rule(d, float(R), cfg.ball_quadrature, cfg.panel_width)


def _magnitude(vals: np.ndarray, lead: int) -> np.ndarray:
    flat = vals.reshape(vals.shape[:lead] + (-1,))
    return np.sqrt(np.sum(flat * flat, axis=-1))


def norm_SpR(f, p: float, R: float, cfg: SamplerConfig | None = None, centers=None) -> float:
    """Sampled estimate of ``sup_x (avg_{B(x,R)} |f|^p)^(1/p)``.

    The sup is a max over ``cfg.center_samples`` base points (a prefix-stable
    sequence, so enlarging the sample never lowers the estimate); the ball
    average uses composite Gauss quadrature.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    cfg = cfg or SamplerConfig()
    f = as_evaluable(f)
    nodes, w = ball_rule(f.d, R, cfg)
    if centers is None:
        centers = sample_centers(f.d, cfg)
    pts = centers[:, None, :] + nodes[None, :, :]
    vals = np.asarray(f(pts))
    mag = _magnitude(vals, 2)  # (C, Q)
    avg = (mag**p) @ w
    return float(np.max(avg) ** (1.0 / p))


def _spr_shifted(f: Evaluable, shifts, p, R, cfg, centers, nbatch) -> np.ndarray:
    """S^p_R of ``Delta_shifts f`` for a batch of shift sets.

    Shift vectors have shape ``(nbatch, 1, 1, d)`` or ``(d,)``.
    """
    nodes, w = ball_rule(f.d, R, cfg)
    pts = centers[:, None, :] + nodes[None, :, :]  # (C, Q, d)
    vals = _delta_P(f, pts[None], shifts)  # (nbatch, C, Q, ...)
    vals = np.broadcast_to(vals, (nbatch,) + vals.shape[1:])
    mag = _magnitude(vals, 3)
    avg = (mag**p) @ w  # (nbatch, C)
    return np.max(avg, axis=1) ** (1.0 / p)


# ---------------------------------------------------------------------------
# mean values


@dataclass
class MeanEstimate:
    value: np.ndarray | float
    error: float


def mean_value(f, R_max: float | None = None, cfg: SamplerConfig | None = None, return_error=False):
    """Mean value ``<f>``.

    Exact for :class:`CoeffField` (constant term plus zero-frequency modes),
    the uniform node average for grid fields (exact trapezoid rule on periodic
    cells), otherwise the ball average over ``B(0, R_max)`` with the change
    against ``B(0, R_max/2)`` reported as the error estimate.
    """
    from .discrete import GridField

    if isinstance(f, CoeffField):
        val = f.constant_part.copy()
        for md in f.modes:
            if np.all(md.frequency == 0):
                val = val + np.cos(md.phase) * md.amplitude
        est = MeanEstimate(val, 0.0)
    elif isinstance(f, GridField):
        est = MeanEstimate(f.values.mean(axis=tuple(range(1, f.values.ndim))), 0.0)
    else:
        if R_max is None or not R_max > 0:
            raise ValueError("R_max > 0 required for the quadrature path")
        cfg = cfg or SamplerConfig()
        f = as_evaluable(f)

        def avg(R):
            nodes, w = ball_rule(f.d, R, cfg)
            vals = np.asarray(f(nodes))
            return np.tensordot(w, vals, axes=(0, 0))

        v1, v2 = avg(R_max), avg(R_max / 2)
        est = MeanEstimate(v1, float(np.max(np.abs(np.asarray(v1) - np.asarray(v2)))))
    return est if return_error else est.value


# ---------------------------------------------------------------------------
# nested sup / inf functionals


def _z_spacing(L: float, cfg: SamplerConfig) -> float:
    return min(cfg.z_spacing, 2 * L / max(cfg.shift_candidates - 1, 1))


def _z_candidates(d: int, L: float, spacing: float) -> np.ndarray:
    r = int(math.floor(L / spacing * (1 + 1e-12)))
    g = spacing * np.arange(-r, r + 1)
    if d == 1:
        return g[:, None]
    Z = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)
    return Z[np.linalg.norm(Z, axis=1) <= L * (1 + 1e-12)]


def _refine_inf(fun, z0: np.ndarray, L: float, step: float, cfg: SamplerConfig):
    """Local minimization of ``fun`` near candidate ``z0`` within ``|z| <= L``."""
    d = z0.shape[0]
    if d == 1:
        # golden section in local coordinates: absolute tolerance, and the
        # objective is typically V-shaped at an exact period
        lo, hi = max(-L, z0[0] - step) - z0[0], min(L, z0[0] + step) - z0[0]
        if hi <= lo:
            return float(fun(z0)), z0
        g = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        c, e = b - g * (b - a), a + g * (b - a)
        fc, fe = fun(z0 + c), fun(z0 + e)
        for _ in range(cfg.refine_evals):
            if b - a < 1e-15:
                break
            if fc <= fe:
                b, e, fe = e, c, fc
                c = b - g * (b - a)
                fc = fun(z0 + c)
            else:
                a, c, fc = c, e, fe
                e = a + g * (b - a)
                fe = fun(z0 + e)
        t, v = (c, fc) if fc <= fe else (e, fe)
        v0 = fun(z0)
        return (float(v), z0 + t) if v <= v0 else (float(v0), z0)

    def pen(z):
        r = np.linalg.norm(z)
        return fun(z) if r <= L else fun(z * (L / r)) + (r - L)

    res = optimize.minimize(
        pen,
        z0,
        method="Nelder-Mead",
        options={
            "xatol": 1e-13,
            "fatol": 1e-16,
            "maxfev": cfg.refine_evals,
            "initial_simplex": z0 + step * np.vstack([np.zeros(d), np.eye(d)]) * 0.5,
        },
    )
    return float(res.fun), res.x


def _nested_sup_inf(batch_objective, k: int, L: float, d: int, cfg: SamplerConfig) -> float:
    """``sup_{y1} inf_{|z1|<=L} ... sup_{yk} inf_{|zk|<=L} objective``.

    ``batch_objective(pairs, y, Z)`` returns objective values for the shift
    list ``pairs + [(y, z)]`` for every row ``z`` of ``Z``.
    """
    ys = cfg.outer_offset + _halton(d, cfg.outer_samples, cfg.seed + 1, cfg.sample_extent)
    step = _z_spacing(L, cfg)
    Z = _z_candidates(d, L, step)
    tiny = 1e-15

    def level(j, pairs):
        best = 0.0
        for y in ys:
            if j == k - 1:
                vals = np.asarray(batch_objective(pairs, y, Z))

                def single(z, y=y):
                    return float(batch_objective(pairs, y, z[None, :])[0])

            else:
                vals = np.array([level(j + 1, pairs + [(y, z)]) for z in Z])

                def single(z, y=y):
                    return level(j + 1, pairs + [(y, z)])

            inf = float(vals.min())
            if cfg.refine and inf > tiny and (j == k - 1):
                for idx in np.argsort(vals)[: cfg.refine_top]:
                    v, _ = _refine_inf(single, Z[idx], L, step, cfg)
                    inf = min(inf, v)
            best = max(best, inf)
        return best

    return level(0, [])


def _check_k(k: int):
    if not 1 <= k <= 3:
        raise ValueError(f"k={k} not supported (1 <= k <= 3)")


def omega_k(f, k: int, L: float, R: float, cfg: SamplerConfig | None = None) -> float:
    """Nested sup/inf modulus ``omega_k(f; L, R)`` in the S^2_R norm.

    Sampled sups can only under-estimate and candidate infs can only
    over-estimate, so the value is a point estimate with biases in both
    directions.
    """
    _check_k(k)
    cfg = cfg or SamplerConfig()
    f = as_evaluable(f)
    centers = sample_centers(f.d, cfg)

    def obj(pairs, y, Z):
        zb = Z[:, None, None, :]
        shifts = [(pr[0], pr[1]) for pr in pairs] + [(y, zb)]
        return _spr_shifted(f, shifts, 2.0, R, cfg, centers, Z.shape[0])

    return _nested_sup_inf(obj, k, L, f.d, cfg)


def set_partitions(items: Sequence) -> list:
    """All set partitions of ``items`` (list of lists of blocks)."""
    items = list(items)
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for part in set_partitions(rest):
        out.append([[first]] + part)
        for i in range(len(part)):
            out.append(part[:i] + [[first] + part[i]] + part[i + 1 :])
    return out


def rho_k(
    field, k: int, L: float, R: float, p: float = 4.0, cfg: SamplerConfig | None = None
) -> float:
    """Partition functional ``rho_k(L, R)`` of the coefficient field.

    For each shift configuration the summand is the sum over partitions of
    the shift set into nonempty blocks of the product of block-difference
    norms ``||Delta_Q A||_{S^p_R}``.
    """
    _check_k(k)
    if p < 2:
        raise ValueError("p must be >= 2")
    cfg = cfg or SamplerConfig()
    f = as_evaluable(field)
    centers = sample_centers(f.d, cfg)
    parts = set_partitions(range(k))
    subsets = [tuple(s) for r in range(1, k + 1) for s in itertools.combinations(range(k), r)]

    def obj(pairs, y, Z):
        nz = Z.shape[0]
        shifts = [(pr[0], pr[1]) for pr in pairs] + [(y, Z[:, None, None, :])]
        norms = {}
        for Q in subsets:
            if (k - 1) in Q:
                norms[Q] = _spr_shifted(f, [shifts[i] for i in Q], p, R, cfg, centers, nz)
            else:
                sub = [(np.asarray(shifts[i][0]), np.asarray(shifts[i][1])) for i in Q]
                norms[Q] = np.full(nz, _spr_shifted(f, sub, p, R, cfg, centers, 1)[0])
        total = np.zeros(nz)
        for part in parts:
            term = np.ones(nz)
            for block in part:
                term = term * norms[tuple(sorted(block))]
            total += term
        return total

    return _nested_sup_inf(obj, k, L, f.d, cfg)


@dataclass
class RhoDecayFit:
    theta: float
    residual: float
    L: np.ndarray
    rho: np.ndarray
    inconclusive: bool = False


def fit_rho_decay(
    field,
    k: int,
    L_list: Sequence[float],
    p: float = 4.0,
    cfg: SamplerConfig | None = None,
    rho: Callable | None = None,
    zero_tol: float = 1e-10,
) -> RhoDecayFit:
    """Fit ``rho_k(L, L) ~ C L^-theta``; ``theta = inf`` when every value vanishes.

    ``rho`` overrides the measured functional (``L -> value``), e.g. to inject
    a synthetic power law.
    """
    from .fitting import fit_loglog

    L = np.asarray(L_list, float)
    if L.size < 3 or np.any(np.diff(L) <= 0):
        raise ValueError("need at least 3 increasing values of L")
    if rho is None:
        rho = functools.partial(_rho_diag, field, k, p, cfg)
    vals = np.array([float(rho(x)) for x in L])
    if np.all(vals <= zero_tol):
        return RhoDecayFit(math.inf, 0.0, L, vals)
    keep = vals > zero_tol
    if keep.sum() < 2:
        return RhoDecayFit(math.inf, 0.0, L, vals, inconclusive=True)
    fit = fit_loglog(L[keep], vals[keep])
    return RhoDecayFit(-fit.slope, fit.residual, L, vals, inconclusive=bool(keep.sum() < L.size))


def _rho_diag(field, k, p, cfg, L):
    return rho_k(field, k, L, L, p, cfg)


# ---------------------------------------------------------------------------
# config (de)serialization


def field_from_dict(spec: dict) -> CoeffField:
    """Build a field from a mapping (YAML ``field:`` block).

    ``constant`` and mode ``amplitude`` are either a scalar (isotropic
    ``a * I``) or a flat row-major ``(alpha, beta, i, j)`` list.  Modes give
    ``frequency`` in radians or ``wavenumber`` in cycles per unit length.
    """
    d, m, n = int(spec["d"]), int(spec.get("m", 1)), int(spec.get("n", 1))
    M = n_multi(d, m)
    shape = (M, M, n, n)

    def tensor(v):
        if np.ndim(v) == 0:
            return isotropic_tensor(d, m, n, float(v))
        arr = np.asarray(v, float)
        if arr.size != M * M * n * n:
            raise ValueError(f"tensor needs {M * M * n * n} entries, got {arr.size}")
        return arr.reshape(shape)

    modes = []
    for md in spec.get("modes", []) or []:
        if "frequency" in md:
            xi = np.asarray(md["frequency"], float)
        else:
            xi = 2 * np.pi * np.asarray(md["wavenumber"], float)
        xi = np.broadcast_to(np.atleast_1d(xi), (d,)).copy()
        modes.append(CoeffMode(xi, float(md.get("phase", 0.0)), tensor(md["amplitude"])))
    return CoeffField(d, m, n, tensor(spec["constant"]), tuple(modes), float(spec["mu"]), spec.get("name", "field"))


def field_to_dict(field: CoeffField) -> dict:
    return {
        "name": field.name,
        "d": field.d,
        "m": field.m,
        "n": field.n,
        "mu": field.mu,
        "constant": field.constant_part.ravel().tolist(),
        "modes": [
            {
                "frequency": md.frequency.tolist(),
                "phase": md.phase,
                "amplitude": md.amplitude.ravel().tolist(),
            }
            for md in field.modes
        ],
    }
