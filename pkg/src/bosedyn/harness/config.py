"""Flat ``key = value`` experiment configuration.

Grammar: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines are ignored.  Values are integers, floats, booleans (``true`` /
``false``), comma-separated lists (optionally in brackets) or bare strings.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigError

__all__ = ["ExperimentConfig", "parse_value", "parse_text", "load_config", "EXPERIMENTS"]

EXPERIMENTS = ("converge", "fluct", "clt", "gp", "minimize", "scatter")


def parse_value(text: str) -> Any:
    s = text.strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1]
        return [parse_value(p) for p in s.split(",") if p.strip()]
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    return s


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key.isidentifier():
            raise ConfigError(f"{source}:{lineno}: invalid key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def _as_list(v, typ):
    if not isinstance(v, list):
        v = [v]
    return [typ(x) for x in v]


@dataclass
class ExperimentConfig:
    """Every knob of every experiment, with laptop-scale defaults.

    Fields irrelevant to a given experiment are carried along (and echoed in
    the summary) but unused.
    """

    experiment: str = "converge"
    # lattice and interaction
    M: int = 4
    h: float = 1.0
    potential: str = "gaussian"
    strength: float = 1.0
    width: float = 1.0
    orbital: list = field(default_factory=lambda: [1.0, 0.6, 0.3, 0.5])
    orbital_phase: list = field(default_factory=lambda: [0.0, 0.0, 0.6, -0.2])
    # dynamics
    N_list: list = field(default_factory=lambda: [4, 8, 16, 32])
    t_max: float = 0.5
    n_times: int = 5
    dt: float = 1e-3
    initial: str = "coherent"
    k: int = 1
    weight_cut: float = 1e-16
    krylov_tol: float = 1e-10
    # rate check
    slope_min: float = -1.3
    slope_max: float = -0.7
    fluct_spread: float = 0.5
    # CLT
    observable: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0])
    clt_method: str = "enumerate"
    samples: int = 100_000
    # GP suite and minimizer
    gp_M: int = 64
    gp_L: float = 10.0
    gp_t_max: float = 1.0
    gp_dt: float = 1e-3
    widths: list = field(default_factory=lambda: [0.4, 0.2, 0.1])
    mu: list = field(default_factory=lambda: [0.0, 1.0, 10.0])
    trap: float = 1.0
    tol: float = 1e-8
    # scattering
    radial: str = "soft_sphere"
    radial_strength: float = 3.0
    radial_R: float = 1.0
    r_max_factor: float = 10.0
    scale_N: float = 16.0
    scatter_tol: float = 1e-6
    # bookkeeping
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        self.validate()

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        known = set(cls.field_names())
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in values:
                continue
            v = values[f.name]
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            try:
                if isinstance(default, list):
                    v = _as_list(v, float if f.name not in ("N_list",) else int)
                elif isinstance(default, bool):
                    v = bool(v)
                elif isinstance(default, int):
                    if isinstance(v, float) and not v.is_integer():
                        raise ValueError(f"expected an integer, got {v}")
                    v = int(v)
                elif isinstance(default, float):
                    v = float(v)
                else:
                    v = str(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {f.name!r}: {exc}") from None
            kwargs[f.name] = v
        return cls(**kwargs)

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(self.M >= 1 and self.h > 0, "need M >= 1 and h > 0")
        need(self.potential in ("gaussian", "zero"), f"unknown potential {self.potential!r}")
        need(self.width > 0, "width must be positive")
        need(len(self.orbital) == self.M, f"orbital has {len(self.orbital)} entries, M = {self.M}")
        need(len(self.orbital_phase) == self.M, "orbital_phase must have M entries")
        need(all(n >= 1 for n in self.N_list) and self.N_list, "N_list must hold positive integers")
        need(self.t_max >= 0 and self.dt > 0 and self.n_times >= 1, "need t_max >= 0, dt > 0, n_times >= 1")
        need(self.initial in ("coherent", "product"), f"unknown initial data {self.initial!r}")
        need(self.k in (1, 2), "k must be 1 or 2")
        need(self.slope_min < self.slope_max, "slope window is empty")
        need(len(self.observable) == self.M, "observable needs M diagonal entries")
        need(self.clt_method in ("enumerate", "sample"), "clt_method is enumerate or sample")
        need(self.samples >= 1, "samples must be positive")
        need(self.gp_M >= 2 and self.gp_L > 0 and self.gp_t_max >= 0 and self.gp_dt > 0,
             "invalid GP grid or time parameters")
        need(all(w > 0 for w in self.widths), "widths must be positive")
        need(all(m >= 0 for m in self.mu), "mu values must be nonnegative")
        need(self.radial in ("soft_sphere", "smooth_bump", "zero"), f"unknown radial potential {self.radial!r}")
        need(self.radial_strength >= 0 and self.radial_R > 0, "radial potential needs strength >= 0, R > 0")
        need(self.r_max_factor >= 5, "r_max_factor must be at least 5")
        need(self.scale_N >= 1, "scale_N must be >= 1")
        need(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None,
                experiment: str | None = None) -> ExperimentConfig:
    """Read ``path`` (if given), apply ``overrides`` and validate."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        values.update(parse_text(text, str(p)))
    if experiment is not None:
        if values.get("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {values['experiment']!r}, not {experiment!r}")
        values["experiment"] = experiment
    values.update(overrides or {})
    return ExperimentConfig.from_mapping(values)
