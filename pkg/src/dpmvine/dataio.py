"""File formats: panel CSV input, run configuration, traces and summaries.

All writers go through :func:`atomic_write` (temporary file plus rename) and
format floats with ``repr`` so that identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import vine as vn
from .calibration import CalibrationSpec, _check_link
from .sampler import COVARIATE_MODELS, DPConfig, PosteriorTrace, TraceRecord

__all__ = [
    "DEFAULT_DAMAGE_THRESHOLD",
    "ConfigError",
    "LoadError",
    "PanelRecord",
    "RunConfig",
    "TraceNotFoundError",
    "atomic_write",
    "build_disaster_covariate",
    "build_windows",
    "cluster_count_bins",
    "cluster_table",
    "coefficient_table",
    "histogram_bins",
    "load_config",
    "load_events",
    "load_panel",
    "panel_arrays",
    "read_trace",
    "write_csv",
    "write_json",
    "write_panel",
    "write_trace",
]

DEFAULT_DAMAGE_THRESHOLD = 1e8


class LoadError(ValueError):
    """Malformed input file; ``problems`` lists ``(line, message)`` pairs."""

    def __init__(self, path, problems):
        self.path, self.problems = str(path), list(problems)
        lines = "\n".join(f"  line {ln}: {msg}" for ln, msg in self.problems)
        super().__init__(f"{self.path}: {len(self.problems)} invalid line(s)\n{lines}")


class ConfigError(ValueError):
    pass


class TraceNotFoundError(FileNotFoundError):
    pass


# --------------------------------------------------------------------------
# writing


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return atomic_write(path, buf.getvalue())


def write_json(path, obj):
    return atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def histogram_bins(U, bins=20) -> dict:
    """Pairwise 2-D histogram counts on the unit square, one entry per column pair."""
    U = np.asarray(U, dtype=float)
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = {"edges": edges.tolist(), "n": int(U.shape[0]), "pairs": {}}
    for i in range(U.shape[1]):
        for j in range(i + 1, U.shape[1]):
            counts, _, _ = np.histogram2d(U[:, i], U[:, j], bins=[edges, edges])
            out["pairs"][f"u{i + 1}-u{j + 1}"] = counts.astype(int).tolist()
    return out


# --------------------------------------------------------------------------
# panel data


@dataclass(frozen=True)
class PanelRecord:
    """One observation window: a country, a period index and ``d`` consecutive responses."""

    country: str
    period: int
    responses: tuple
    damage: float


_PANEL_FIXED = ("country", "period")


def _parse_float(text, what, problems, line):
    try:
        v = float(text)
    except (TypeError, ValueError):
        problems.append((line, f"{what} is not numeric: {text!r}"))
        return None
    if not math.isfinite(v):
        problems.append((line, f"{what} is not finite: {text!r}"))
        return None
    return v


def load_panel(path) -> list:
    """Read a panel CSV with header ``country, period, y1..yd, damage``.

    Responses must lie in ``[0, 1]``, periods must be positive integers and
    damages non-negative. Every offending line is reported at once.

    Raises
    ------
    LoadError
    FileNotFoundError
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        warnings.warn(f"{path} is empty; no records loaded", stacklevel=2)
        return []
    reader = csv.reader(io.StringIO(text))
    header = [h.strip().lower() for h in next(reader)]
    ycols = [h for h in header if h.startswith("y") and h[1:].isdigit()]
    expected = list(_PANEL_FIXED) + [f"y{j + 1}" for j in range(len(ycols))] + ["damage"]
    if header != expected or not ycols:
        raise LoadError(path, [(1, f"header must be {','.join(expected if ycols else ['country', 'period', 'y1', '...', 'damage'])}, got {','.join(header)}")])
    records, problems = [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            problems.append((line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        country = row[0].strip()
        if not country:
            problems.append((line, "country is empty"))
        period = None
        try:
            period = int(row[1])
            if period < 1:
                problems.append((line, f"period must be a positive integer, got {row[1]!r}"))
        except ValueError:
            problems.append((line, f"period must be a positive integer, got {row[1]!r}"))
        ys = []
        for j, cell in enumerate(row[2:-1]):
            v = _parse_float(cell, f"y{j + 1}", problems, line)
            if v is not None and not 0.0 <= v <= 1.0:
                problems.append((line, f"y{j + 1} = {v!r} outside [0, 1]"))
            ys.append(v)
        damage = _parse_float(row[-1], "damage", problems, line)
        if damage is not None and damage < 0:
            problems.append((line, f"damage must be non-negative, got {damage!r}"))
        if not problems or problems[-1][0] != line:
            records.append(PanelRecord(country, period, tuple(ys), damage))
    if problems:
        raise LoadError(path, problems)
    return records


def write_panel(path, records):
    d = len(records[0].responses) if records else 4
    header = ["country", "period", *(f"y{j + 1}" for j in range(d)), "damage"]
    return write_csv(path, header, [[r.country, r.period, *r.responses, r.damage] for r in records])


def build_disaster_covariate(records, threshold=DEFAULT_DAMAGE_THRESHOLD) -> np.ndarray:
    """Binary covariate: 1 where the damage is strictly over ``threshold``."""
    return np.array([1.0 if r.damage > threshold else 0.0 for r in records])


def panel_arrays(records, threshold=DEFAULT_DAMAGE_THRESHOLD):
    """Response matrix ``(N, d)`` and covariate matrix ``(N, 1)``."""
    if not records:
        return np.zeros((0, 0)), np.zeros((0, 1))
    Y = np.array([r.responses for r in records], dtype=float)
    return Y, build_disaster_covariate(records, threshold)[:, None]


def load_events(path):
    """Read an event-level CSV with header ``country, year, value, damage``.

    ``value`` is the yearly response; ``damage`` is the disaster damage in that
    year (0 when no disaster occurred).
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        warnings.warn(f"{path} is empty; no events loaded", stacklevel=2)
        return []
    reader = csv.reader(io.StringIO(text))
    header = [h.strip().lower() for h in next(reader)]
    if header != ["country", "year", "value", "damage"]:
        raise LoadError(path, [(1, f"header must be country,year,value,damage, got {','.join(header)}")])
    rows, problems = [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            problems.append((line, f"expected 4 fields, got {len(row)}"))
            continue
        n_before = len(problems)
        try:
            year = int(row[1])
        except ValueError:
            problems.append((line, f"year is not an integer: {row[1]!r}"))
            year = None
        value = _parse_float(row[2], "value", problems, line)
        if value is not None and not 0.0 <= value <= 1.0:
            problems.append((line, f"value = {value!r} outside [0, 1]"))
        damage = _parse_float(row[3], "damage", problems, line) if row[3].strip() else 0.0
        if len(problems) == n_before:
            rows.append((row[0].strip(), year, value, damage))
    if problems:
        raise LoadError(path, problems)
    return rows


def build_windows(events, width=4) -> list:
    """Turn yearly events into panel windows starting at each disaster year.

    A window covers ``width`` consecutive years beginning with a disaster.
    Windows with a second disaster inside them, a missing year, or that run
    past the end of the series are discarded.
    """
    by_country = {}
    for country, year, value, damage in events:
        by_country.setdefault(country, {})[year] = (value, damage)
    records = []
    for country in sorted(by_country):
        series = by_country[country]
        period = 0
        for year in sorted(series):
            value, damage = series[year]
            if damage <= 0:
                continue
            years = range(year, year + width)
            if not all(y in series for y in years):
                continue
            if any(series[y][1] > 0 for y in years[1:]):
                continue
            period += 1
            records.append(PanelRecord(country, period, tuple(series[y][0] for y in years), damage))
    return records


# --------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Everything a ``fit`` run needs besides the data.

    Dimensions must agree: ``dim`` fixes the edge count of the vine, which
    must match ``families`` and ``links``; the calibration kind and covariate
    count fix ``q``, which must match any explicit coefficient prior mean.
    """

    vine: str = "D"
    dim: int = 4
    families: object = "gaussian"
    links: Optional[list] = None
    calibration: str = "linear"
    n_covariates: int = 1
    covariate_models: object = "bernoulli"
    coef_prior_mean: object = 0.0
    coef_prior_sd: float = 1.0
    total_mass: float = 1.0
    n_iter: int = 1000
    burn_in: int = 200
    thin: int = 1
    proposal_scale: float = 0.2
    n_init_clusters: int = 1
    margin_mode: str = "beta"
    margin_iter: int = 5000
    margin_burn_in: int = 1000
    damage_threshold: float = DEFAULT_DAMAGE_THRESHOLD
    input: Optional[str] = None
    out_dir: Optional[str] = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.vine.upper() not in ("C", "D"):
            raise ConfigError(f"vine must be 'C' or 'D', got {self.vine!r}")
        if int(self.dim) < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        n_edges = vn.n_edges(self.dim)
        if not isinstance(self.families, str) and len(self.families) != n_edges:
            raise ConfigError(
                f"dim {self.dim} needs {n_edges} edge families, got {len(self.families)}"
            )
        if self.links is not None:
            if len(self.links) != n_edges:
                raise ConfigError(f"dim {self.dim} needs {n_edges} links, got {len(self.links)}")
            fams = [self.families] * n_edges if isinstance(self.families, str) else self.families
            for e, (link, fam) in enumerate(zip(self.links, fams)):
                try:
                    _check_link(link, fam)
                except ValueError as exc:
                    raise ConfigError(f"edge {e + 1}: {exc}") from None
        try:
            cal = CalibrationSpec(self.calibration, self.n_covariates)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        mean = np.asarray(self.coef_prior_mean, dtype=float)
        if mean.ndim and mean.size != n_edges * cal.n_coef:
            raise ConfigError(
                f"coefficient prior mean has {mean.size} entries, expected {n_edges} edges x "
                f"{cal.n_coef} coefficients = {n_edges * cal.n_coef}"
            )
        models = self.covariate_models
        models = [models] * self.n_covariates if isinstance(models, str) else list(models)
        if len(models) != self.n_covariates:
            raise ConfigError(f"{len(models)} covariate models given for {self.n_covariates} covariates")
        for m in models:
            if m not in COVARIATE_MODELS:
                raise ConfigError(f"unknown covariate model {m!r}; expected one of {sorted(COVARIATE_MODELS)}")
        if self.margin_mode not in ("known", "empirical", "beta"):
            raise ConfigError(f"margin_mode must be known, empirical or beta, got {self.margin_mode!r}")
        if not self.coef_prior_sd > 0:
            raise ConfigError("coef_prior_sd must be positive")
        try:
            self.dp_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def dp_config(self) -> DPConfig:
        return DPConfig(total_mass=self.total_mass, n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                        proposal_scale=self.proposal_scale, n_init_clusters=self.n_init_clusters, seed=self.seed)

    def coef_mean_array(self):
        mean = np.asarray(self.coef_prior_mean, dtype=float)
        cal = CalibrationSpec(self.calibration, self.n_covariates)
        return mean if not mean.ndim else mean.reshape(vn.n_edges(self.dim), cal.n_coef)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("extra", "out_dir")}
        return json.loads(json.dumps(out))


def load_config(path, **overrides) -> RunConfig:
    """Read a JSON run configuration; ``None`` overrides are ignored.

    Nested ``{"sampler": {...}, "margins": {...}, "model": {...}}`` sections
    are flattened into :class:`RunConfig` fields.
    """
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    flat = {}
    for k, v in raw.items():
        if isinstance(v, dict) and k in ("model", "sampler", "margins", "data"):
            flat.update(v)
        else:
            flat[k] = v
    flat.update({k: v for k, v in overrides.items() if v is not None})
    known = set(RunConfig.__dataclass_fields__) - {"extra"}
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**flat)


# --------------------------------------------------------------------------
# traces


def write_trace(path, trace: PosteriorTrace, header: Optional[dict] = None):
    """NDJSON: one header line, then one line per kept iteration."""
    head = {"type": "header", "total_mass": trace.total_mass, "meta": trace.meta, **(header or {})}
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in trace.records]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_trace(path):
    """Inverse of :func:`write_trace`; returns ``(trace, header)``."""
    path = Path(path)
    if not path.is_file():
        raise TraceNotFoundError(f"trace not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(path, [(1, "empty trace file")])
    try:
        head = json.loads(lines[0])
        if head.get("type") != "header":
            raise LoadError(path, [(1, "first line is not a trace header")])
        records = [TraceRecord.from_dict(json.loads(l)) for l in lines[1:] if l.strip()]
    except (json.JSONDecodeError, KeyError) as exc:
        raise LoadError(path, [(0, f"corrupt trace: {exc}")]) from None
    return PosteriorTrace(records, float(head["total_mass"]), head.get("meta", {})), head


# --------------------------------------------------------------------------
# summary tables

STAT_ROWS = (("E", "mean"), ("SD", "sd"), ("q0.025", "q025"), ("q0.975", "q975"))


def coefficient_table(trace: PosteriorTrace, edge_labels, n=None):
    """Per-cluster coefficient summaries: one block of statistic rows per cluster.

    Returns ``(header, rows)`` with columns ``cluster, statistic,
    beta0[12], beta1[12], ...``.
    """
    summ = trace.summarize(n, {"edges": list(edge_labels)})
    coef = [r for r in summ if r["parameter"].startswith("beta")]
    params = list(dict.fromkeys(r["parameter"] for r in coef))
    clusters = sorted({r["cluster"] for r in coef})
    index = {(r["cluster"], r["parameter"]): r for r in coef}
    rows = [[m, label, *(index[(m, p)][key] for p in params)] for m in clusters for label, key in STAT_ROWS]
    return ["cluster", "statistic", *params], rows


def cluster_table(trace: PosteriorTrace, parameter, phi_names=None, n=None):
    """Statistic rows by cluster column for one scalar parameter (a covariate parameter or ``weight``)."""
    summ = trace.summarize(n, {"phi": phi_names} if phi_names else None)
    sel = {r["cluster"]: r for r in summ if r["parameter"] == parameter}
    clusters = sorted(sel)
    prefix = "w" if parameter == "weight" else "psi="
    return ["statistic", *(f"{prefix}{m}" for m in clusters)], \
        [[label, *(sel[m][key] for m in clusters)] for label, key in STAT_ROWS]


def cluster_count_bins(trace: PosteriorTrace) -> dict:
    """Frequencies of the number of occupied clusters and sizes of the point-estimate clusters."""
    vals, cnt = np.unique(trace.n_clusters, return_counts=True)
    est = trace.point_estimate()
    return {
        "modal_n": trace.modal_n(),
        "n_clusters": {str(int(v)): int(c) for v, c in zip(vals, cnt)},
        "point_estimate_sizes": {str(int(m)): int(c) for m, c in zip(*np.unique(est, return_counts=True))},
    }
