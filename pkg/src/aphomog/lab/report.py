"""Experiment reports and their CSV / JSON / SVG emission."""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__

SCHEMA_VERSION = 1


@dataclass
class ExperimentReport:
    """Rows of measurements plus fits and checks.

    A check with ``passed=None`` is inconclusive; checks with
    ``asserted=False`` are informational and do not affect the status.
    """

    kind: str
    name: str = ""
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    plot: dict = field(default_factory=dict)

    def add_check(self, name, passed, value=None, threshold=None, detail="", asserted=True):
        self.checks.append({
            "name": name,
            "passed": None if passed is None else bool(passed),
            "value": _clean(value),
            "threshold": _clean(threshold),
            "detail": detail,
            "asserted": asserted,
        })

    def add_fit(self, label, fit=None, status=None, **extra):
        rec = {"label": label, "slope": None, "intercept": None, "residual": None, "n": 0,
               "conclusive": False, "status": status or "ok"}
        if fit is not None:
            rec.update(slope=fit.slope, intercept=fit.intercept, residual=fit.residual, n=fit.n,
                       conclusive=fit.conclusive)
            if status is None and not fit.conclusive:
                rec["status"] = "inconclusive"
        rec.update({k: _clean(v) for k, v in extra.items()})
        self.fits.append(_clean(rec))
        return rec

    def fit(self, label) -> dict | None:
        return next((f for f in self.fits if f["label"] == label), None)

    def check(self, name) -> dict | None:
        return next((c for c in self.checks if c["name"] == name), None)

    @property
    def status(self) -> str:
        asserted = [c for c in self.checks if c.get("asserted", True)]
        if any(c["passed"] is False for c in asserted):
            return "fail"
        if any(c["passed"] is None for c in asserted) or any(r.get("status", "ok") != "ok" for r in self.rows):
            return "inconclusive"
        return "pass"

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "inconclusive": 2, "fail": 1}[self.status]

    def to_dict(self) -> dict:
        return _clean({
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "name": self.name,
            "columns": list(self.columns),
            "rows": self.rows,
            "fits": self.fits,
            "checks": self.checks,
            "environment": self.environment,
            "plot": self.plot,
            "status": self.status,
        })


def report_from_dict(d: dict) -> ExperimentReport:
    return ExperimentReport(
        kind=d["kind"], name=d.get("name", ""), columns=list(d.get("columns", [])),
        rows=list(d.get("rows", [])), fits=list(d.get("fits", [])), checks=list(d.get("checks", [])),
        environment=dict(d.get("environment", {})), plot=dict(d.get("plot", {})),
    )


def _clean(v):
    """JSON-safe plain Python values; non-finite floats become strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def version_string() -> str:
    """Package version plus the current commit hash when available."""
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------------------
# emission


def csv_text(report: ExperimentReport) -> str:
    cols = ["schema_version", "row", "status"] + [c for c in report.columns if c not in ("status",)] + ["error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i, row in enumerate(report.rows):
        vals = {"schema_version": SCHEMA_VERSION, "row": i, **row}
        vals.setdefault("status", "ok")
        w.writerow([_fmt(vals.get(c, "")) for c in cols])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def json_text(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def write_svg(report: ExperimentReport, path):
    """Log-log plot of ``plot['series']`` against ``plot['x']`` with fitted lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "aphomog"
    spec = report.plot or {}
    fig, ax = plt.subplots(figsize=(5, 4))
    xcol = spec.get("x")
    for col in spec.get("series", []):
        pts = [(r.get(xcol), r.get(col)) for r in report.rows]
        pts = [(x, y) for x, y in pts if _positive(x) and _positive(y)]
        if pts:
            xs, ys = zip(*pts)
            ax.loglog(xs, ys, "o-", label=col, gid=f"series-{col}")
        else:
            ax.plot([], [], "o-", label=col, gid=f"series-{col}")
    for label, col in (spec.get("fits") or {}).items():
        f = report.fit(label)
        if f and f.get("slope") is not None:
            xs = np.array(sorted(r.get(xcol) for r in report.rows if _positive(r.get(xcol))), float)
            if xs.size:
                ax.loglog(xs, np.exp(f["intercept"]) * xs ** f["slope"], "--", gid=f"fit-{label}",
                          label=f"{label}: slope {f['slope']:.3f}")
    ax.set_xlabel(xcol or "")
    ax.set_title(f"{report.kind} {report.name}".strip())
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v) and v > 0


def emit(report: ExperimentReport, out_dir, formats=("csv", "json", "svg"), stem: str | None = None) -> dict:
    """Write the report; returns ``{format: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report.kind
    paths = {}
    for fmt in formats:
        p = out / f"{stem}.{fmt}"
        if fmt == "csv":
            p.write_text(csv_text(report))
        elif fmt == "json":
            p.write_text(json_text(report))
        elif fmt == "svg":
            write_svg(report, p)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        paths[fmt] = p
    return paths


def load_report(path) -> ExperimentReport:
    return report_from_dict(json.loads(Path(path).read_text()))
