"""Structured run output: atomic file writes, CSV/JSON serialization with a
fixed float format (so identical runs give identical bytes), run reports and
plot scripts rendered to PNG with matplotlib's Agg backend.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import runpy
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def atomic_write(path, data) -> Path:
    """Write ``data`` (str or bytes) to a temp file in the target directory,
    then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x) -> str:
    """Round-trippable, platform-stable text for a scalar."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))


def jsonable(obj):
    """Recursively convert numpy/complex values; complex -> {"re", "im"},
    non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, json_text(obj))


def versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__
    return {"pfscatter": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: measured {self.measured:.3e} vs tolerance {self.tolerance:.3e}"


class RunReport:
    """Config echo, versions, checks, results and an output manifest. Timings
    are kept out of ``report.json`` (they go to ``timings.txt``) so reports
    of identical runs are byte-identical."""

    def __init__(self, command: str, config_text: str, out_dir):
        self.command = command
        self.config_text = config_text
        self.out_dir = Path(out_dir)
        self.checks: list[Check] = []
        self.results: dict = {}
        self.files: list[str] = []
        self.timings: dict[str, float] = {}

    def check(self, name, measured, tolerance, passed=None, **detail) -> Check:
        measured = float(measured)
        if passed is None:
            passed = bool(np.isfinite(measured) and measured <= tolerance)
        c = Check(name, measured, float(tolerance), bool(passed), detail)
        self.checks.append(c)
        return c

    @property
    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add_file(self, path) -> None:
        rel = os.path.relpath(path, self.out_dir)
        if rel not in self.files:
            self.files.append(rel)

    def write_csv(self, name, header, rows) -> Path:
        p = write_csv(self.out_dir / name, header, rows)
        self.add_file(p)
        return p

    def write_json(self, name, obj) -> Path:
        p = write_json(self.out_dir / name, obj)
        self.add_file(p)
        return p

    def write_text(self, name, text) -> Path:
        p = atomic_write(self.out_dir / name, text)
        self.add_file(p)
        return p

    def plot(self, name, script: str) -> Path | None:
        """Save a plot script next to its data and render it to ``name.png``."""
        sp = self.write_text(f"plot_{name}.py", script)
        png = self.out_dir / f"{name}.png"
        import matplotlib
        matplotlib.use("Agg")
        runpy.run_path(str(sp), run_name="__main__")
        if png.exists():
            self.add_file(png)
            return png
        return None

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config_text,
            "versions": versions(),
            "checks": [{"name": c.name, "measured": c.measured, "tolerance": c.tolerance,
                        "passed": c.passed, **({"detail": c.detail} if c.detail else {})}
                       for c in self.checks],
            "all_passed": not self.failed,
            "results": self.results,
            "files": sorted(self.files + ["report.json", "timings.txt"]),
        }

    def finalize(self) -> Path:
        self.write_text("timings.txt", "".join(f"{k} {v:.3f}s\n" for k, v in self.timings.items()))
        return write_json(self.out_dir / "report.json", self.as_dict())


# ----------------------------------------------------------------------------
# plot scripts (self-contained: they read the CSV next to them)
# ----------------------------------------------------------------------------

_HEAD = '''"""Generated plot script; reads {csv} from this directory and writes {png}."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv}")) as fh:
    rows = list(csv.DictReader(fh))
'''

_TAIL = '''fig.tight_layout()
fig.savefig(os.path.join(here, "{png}"), dpi=100, metadata={{"Software": None}})
plt.close(fig)
'''


def _script(csv_name, png_name, body):
    return (_HEAD.format(csv=csv_name, png=png_name) + body
            + _TAIL.format(png=png_name))


def tmatrix_plot_script(csv_name="tmatrix.csv", png_name="tmatrix.png") -> str:
    body = '''fig, ax = plt.subplots(figsize=(6, 4))
series = {}
for r in rows:
    if r["kind"] != "eta":
        continue
    key = "(%s,%s)" % (r["i"], r["i2"])
    series.setdefault(key, []).append((float(r["eta"]), abs(complex(float(r["re_T"]), float(r["im_T"])))))
for key, pts in sorted(series.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=key)
ax.set_xlabel("eta")
ax.set_ylabel("|T|")
ax.set_title("T-matrix along the eta sweep")
if len(series) <= 12:
    ax.legend(fontsize=7)
'''
    return _script(csv_name, png_name, body)


def ray_plot_script(csv_name="ray_scan.csv", png_name="ray_scan.png") -> str:
    body = '''fig, ax = plt.subplots(figsize=(6, 4))
r = [float(x["radius"]) for x in rows]
ax.plot(r, [float(x["re_T"]) for x in rows], marker=".", label="Re T")
ax.plot(r, [float(x["im_T"]) for x in rows], marker=".", label="Im T")
ax.set_xlabel("|k|")
ax.set_ylabel("T")
ax.set_title("T along a ray")
ax.legend()
'''
    return _script(csv_name, png_name, body)


def smatrix_plot_script(csv_name="smatrix_sweep.csv", png_name="smatrix_sweep.png") -> str:
    body = '''fig, ax = plt.subplots(figsize=(6, 4))
eps = [float(x["eps"]) for x in rows]
ax.loglog(eps, [max(float(x["discrepancy"]), 1e-18) for x in rows], marker="o", label="|LHS-RHS|")
ax.loglog(eps, [float(x["budget"]) for x in rows], marker="s", label="budget")
ax.loglog(eps, [max(float(x["identity_residual"]), 1e-18) for x in rows], marker="^", label="identity residual")
ax.set_xlabel("eps")
ax.set_title("S-matrix check across the eps sweep")
ax.legend()
'''
    return _script(csv_name, png_name, body)


def boundary_plot_script(csv_name="boundary_values.csv", png_name="boundary_values.png") -> str:
    body = '''fig, ax = plt.subplots(figsize=(6, 4))
series = {}
for r in rows:
    key = "(%s,%s)" % (r["i"], r["i2"])
    series.setdefault(key, []).append((float(r["eta"]), float(r["re"]), float(r["im"])))
for key, pts in sorted(series.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[2] for p in pts], marker="o", label="Im " + key)
ax.set_xlabel("eta")
ax.set_ylabel("Im <D1 psi, R D1 psi>")
ax.set_title("resolvent boundary values")
if len(series) <= 12:
    ax.legend(fontsize=7)
'''
    return _script(csv_name, png_name, body)
