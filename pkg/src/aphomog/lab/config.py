"""Experiment specifications loaded from YAML."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from ..apfield import SamplerConfig, as_evaluable
from ..discrete import SolverConfig

KINDS = ("converge", "corrector_growth", "rho_decay", "perturb", "holder_profile", "flux_identity")
SUBCOMMANDS = {
    "converge": "converge",
    "growth": "corrector_growth",
    "rho": "rho_decay",
    "perturb": "perturb",
    "holder": "holder_profile",
    "flux": "flux_identity",
}


@dataclass
class ExperimentSpec:
    """Declarative experiment description.

    Only the parameter lists relevant to ``kind`` are consulted.  ``checks``
    overrides the default assertion thresholds of the experiment (a value of
    ``null`` disables an assertion).
    """

    kind: str
    field: dict | None = None
    fields: list = dc_field(default_factory=list)
    name: str = ""
    eps_list: list = dc_field(default_factory=list)
    T_list: list = dc_field(default_factory=list)
    L_list: list = dc_field(default_factory=list)
    r_list: list = dc_field(default_factory=list)
    h: float = 1.0 / 64
    resolution: int = 16
    c_box: float = 8.0
    T_ref: float = 64.0
    T: float | None = None
    source: dict = dc_field(default_factory=lambda: {"constant": 1.0, "sine": [[1.0, 1]]})
    k: int = 1
    p: float = 4.0
    halve_grid: bool = False
    perturbation: dict = dc_field(default_factory=dict)
    decay_T_list: list = dc_field(default_factory=lambda: [4, 8, 16, 32])
    centers: int = 4
    rel_tols: list = dc_field(default_factory=list)
    synthetic: dict | None = None
    checks: dict = dc_field(default_factory=dict)
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    sampler: SamplerConfig = dc_field(default_factory=SamplerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.field is None and not self.fields and not (self.kind == "rho_decay" and self.synthetic):
            raise ValueError("experiment needs a field")
        need = {
            "converge": ("eps_list", 4, True),
            "corrector_growth": ("T_list", 4, True),
            "rho_decay": ("L_list", 3, False),
            "perturb": ("eps_list", 4, True),
            "holder_profile": ("r_list", 3, False),
            "flux_identity": ("T_list", 1, False),
        }[self.kind]
        name, count, dyadic = need
        vals = [float(v) for v in getattr(self, name)]
        if len(vals) < count:
            raise ValueError(f"{name} needs at least {count} values")
        if dyadic and not _is_dyadic(vals):
            raise ValueError(f"{name} must be a dyadic sequence (constant ratio 2)")
        if self.kind == "rho_decay" and max(vals) < 4 * min(vals):
            raise ValueError("L_list must span at least two octaves")
        setattr(self, name, vals)

    def all_fields(self) -> list:
        return list(self.fields) if self.fields else ([self.field] if self.field is not None else [])

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return dataclasses.replace(self, seed=seed, sampler=dataclasses.replace(self.sampler, seed=seed))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out


def _is_dyadic(vals) -> bool:
    v = np.asarray(vals, float)
    r = v[1:] / v[:-1]
    return bool(np.all(np.isclose(r, 2.0)) or np.all(np.isclose(r, 0.5)))


def spec_from_dict(d: dict) -> ExperimentSpec:
    d = dict(d)
    solver = SolverConfig(**(d.pop("solver", None) or {}))
    sampler = SamplerConfig(**(d.pop("sampler", None) or {}))
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentSpec(solver=solver, sampler=sampler, **d)


def load_spec(path) -> ExperimentSpec:
    with open(Path(path)) as fh:
        return spec_from_dict(yaml.safe_load(fh))


def make_source(spec: dict | float, d: int):
    """Source ``f(x) = constant + sum amp * prod_k sin(pi * w * x_k)`` (scalar, one component)."""
    if np.isscalar(spec):
        c, sines = float(spec), []
    else:
        c, sines = float(spec.get("constant", 0.0)), spec.get("sine", []) or []

    def f(x):
        x = np.asarray(x, float)
        out = np.full(x.shape[:-1], c)
        for amp, w in sines:
            out = out + float(amp) * np.prod(np.sin(math.pi * float(w) * x), axis=-1)
        return out

    return as_evaluable(f, d)
