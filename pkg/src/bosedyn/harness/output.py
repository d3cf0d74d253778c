"""Deterministic CSV / JSON emission and static SVG plots."""
from __future__ import annotations

import csv
import io
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Results", "emit", "format_number"]


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


@dataclass
class Results:
    """Table rows, summary payload and acceptance checks of one experiment run.

    ``checks`` maps a check name to ``{"value", "threshold", "pass"}``.
    ``plot`` is an optional callable drawing onto a matplotlib figure.
    """

    experiment: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    plot: object = None

    def check(self, name: str, value, threshold, passed: bool) -> None:
        self.checks[name] = {"value": value, "threshold": threshold, "pass": bool(passed)}

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())


def _versions() -> dict:
    import scipy

    from .. import __version__
    return {"bosedyn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _csv_text(results: Results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(results.columns)
    # rows are sorted by their leading key columns for order-independent output
    for row in sorted(results.rows, key=lambda r: tuple(r[: min(2, len(r))])):
        w.writerow([format_number(v) for v in row])
    return buf.getvalue()


def emit(results: Results, out_dir: str | Path, config: dict, seed: int,
         plots: bool = True) -> dict:
    """Write ``<experiment>.csv``, ``<experiment>.summary.json`` and optionally ``.svg``.

    Returns the mapping of written file kinds to paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {}
    csv_path = out / f"{results.experiment}.csv"
    csv_path.write_text(_csv_text(results), encoding="utf-8")
    paths["csv"] = csv_path
    payload = {
        "experiment": results.experiment,
        "config": config,
        "seed": seed,
        "versions": _versions(),
        "summary": results.summary,
        "checks": results.checks,
        "passed": results.passed,
    }
    js_path = out / f"{results.experiment}.summary.json"
    js_path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
    paths["summary"] = js_path
    if plots and results.plot is not None:
        paths["svg"] = _write_svg(results, out / f"{results.experiment}.svg")
    return paths


def _write_svg(results: Results, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt and no date keep the SVG byte-deterministic
    with matplotlib.rc_context({"svg.hashsalt": "bosedyn", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        results.plot(ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
