"""Two-stage experiment runner: configuration, sweeps, presets and output files.

Stage one computes the Galerkin spectrum of ``T`` on a coarse space and
selects the eigenvectors inside a window.  Stage two solves ``T + iQ`` (or the
inverse pencil) on a fine space, clusters the eigenvalues lifted to
``lambda + i`` and classifies the stage-one window eigenvalues.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import problems as pb
from .analysis import RateFit, fit_rate
from .dissipative import (DEFAULT_IM_THRESHOLD, ClusterReport, ProjectionQ, auto_targets,
                          build_projection, cluster, dissipative_spectrum,
                          inverse_dissipative_spectrum, pollution_report)
from .galerkin import (Selection, SpectralWindow, Spectrum, WindowError, select_window,
                       spectrum_of_t)
from .matrixio import import_matrices

log = logging.getLogger(__name__)

DIRECT, INVERSE = "direct", "inverse"


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- problem sources

class ProblemSource:
    """Adapter giving the runner a uniform view of a built-in problem."""

    def __init__(self, spec: pb.ProblemSpec):
        self.spec = spec

    def assemble(self, level):
        return pb.assemble(self.spec, level)

    def nesting(self, coarse, fine):
        if pb.is_nested(self.spec, coarse, fine):
            return pb.embed(self.spec, coarse, fine)
        return None

    def cross(self, coarse, fine):
        return pb.couple(self.spec, coarse, fine)

    def references(self) -> list:
        return list(pb.reference_spectrum(self.spec).values())

    def describe(self) -> dict:
        d = {"kind": self.spec.kind}
        if self.spec.kind == pb.SYNTHETIC:
            d.update(eigenvalues=list(self.spec.eigenvalues), seed=self.spec.seed)
        if self.spec.kind == pb.BLOCK_FEM:
            d.update(n_branches=self.spec.n_branches)
        return d


class FileSource:
    """Matrices supplied through container files.

    Level ``0`` is the ``path`` space; level ``1`` is ``fine_path`` with the
    real ``embedding`` (text, ``numpy.loadtxt`` layout) mapping level 0 into it.
    """

    def __init__(self, path, fine_path=None, embedding=None, base: Path = Path(".")):
        self.paths = [base / path] + ([base / fine_path] if fine_path else [])
        self.embedding_path = base / embedding if embedding else None
        if fine_path and not embedding:
            raise ConfigError("file problem with fine_path needs an embedding file")
        self._cache = {}

    def assemble(self, level):
        if level not in (0, 1) or level >= len(self.paths):
            raise ConfigError(f"file problem has no level {level}")
        if level not in self._cache:
            self._cache[level] = import_matrices(self.paths[level])
        return self._cache[level]

    def nesting(self, coarse, fine):
        nc, nf = self.assemble(coarse).dim, self.assemble(fine).dim
        if coarse == fine:
            E = np.eye(nc, dtype=complex)
        else:
            E = np.atleast_2d(np.loadtxt(self.embedding_path)).astype(complex)
            if E.shape != (nf, nc):
                raise ConfigError(f"embedding has shape {E.shape}, expected {(nf, nc)}")
        return pb.NestedSpaces(nc, nf, E)

    def cross(self, coarse, fine):  # pragma: no cover - nesting always available
        raise ConfigError("file problems are always nested")

    def references(self) -> list:
        return []

    def describe(self) -> dict:
        return {"kind": "file", "paths": [str(p) for p in self.paths]}


# --------------------------------------------------------------------------- config

_PI = re.compile(r"^\s*([-+]?\s*[\d./]*)\s*\*?\s*pi\s*$")


def parse_number(x) -> float:
    """Accept numbers, fractions like ``"1/4"`` and multiples of pi like ``"-2*pi"``."""
    if isinstance(x, (int, float)):
        return float(x)
    s = str(x).strip()
    m = _PI.match(s)
    if m:
        coef = m.group(1).replace(" ", "")
        c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(Fraction(coef))
        return c * math.pi
    try:
        return float(Fraction(s))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse number {x!r}") from exc


@dataclass
class ExperimentConfig:
    problem: dict
    window: dict
    coarse_levels: list
    fine_levels: list
    pairing: str = "paired"
    mode: str = DIRECT
    radius: Optional[float] = None
    im_threshold: float = DEFAULT_IM_THRESHOLD
    targets: Optional[list] = None
    unique_window: bool = False
    references: Optional[list] = None
    output: str = "out"
    format: str = "csv"
    vectors: bool = True
    workers: int = 1
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for key in ("problem", "window", "coarse_levels", "fine_levels"):
            if key not in d:
                raise ConfigError(f"missing config key {key!r}")
        d = dict(d)
        d.setdefault("base_dir", str(base_dir))
        cfg = cls(**d)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.mode not in (DIRECT, INVERSE):
            raise ConfigError(f"mode must be 'direct' or 'inverse', got {self.mode!r}")
        if self.pairing not in ("paired", "crossed"):
            raise ConfigError(f"pairing must be 'paired' or 'crossed', got {self.pairing!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")
        if not self.coarse_levels or not self.fine_levels:
            raise ConfigError("coarse_levels and fine_levels must be non-empty")
        if self.pairing == "paired" and len(self.coarse_levels) != len(self.fine_levels):
            raise ConfigError("paired levels need lists of equal length")
        if self.mode == INVERSE and self.window.get("gamma") is None:
            raise ConfigError("inverse mode requires window.gamma")
        if self.radius is not None and not self.radius > 0:
            raise ConfigError("radius must be positive")
        try:
            self.spectral_window()
        except WindowError as exc:
            raise ConfigError(str(exc)) from exc
        self.source()

    def spectral_window(self) -> SpectralWindow:
        w = self.window
        if "a" not in w or "b" not in w:
            raise ConfigError("window needs 'a' and 'b'")
        gamma = w.get("gamma") if self.mode == INVERSE else None
        return SpectralWindow(parse_number(w["a"]), parse_number(w["b"]),
                              None if gamma is None else parse_number(gamma))

    def source(self):
        p = dict(self.problem)
        kind = p.pop("kind", None)
        base = Path(self.base_dir)
        try:
            if kind == "file":
                return FileSource(p.pop("path"), p.pop("fine_path", None),
                                  p.pop("embedding", None), base=base)
            if kind == pb.SYNTHETIC:
                spec = pb.ProblemSpec.synthetic([parse_number(v) for v in p.pop("eigenvalues")],
                                                int(p.pop("seed", 0)))
            elif kind == pb.BLOCK_FEM:
                spec = pb.ProblemSpec.block_fem(int(p.pop("n_branches", 8)))
            elif kind == pb.FOURIER:
                spec = pb.ProblemSpec.fourier()
            else:
                raise ConfigError(f"unknown problem kind {kind!r}")
        except (KeyError, pb.ProblemError) as exc:
            raise ConfigError(f"bad problem block: {exc}") from exc
        if p:
            raise ConfigError(f"unknown problem keys: {sorted(p)}")
        src = ProblemSource(spec)
        for lv in list(self.coarse_levels) + list(self.fine_levels):
            try:
                spec.check_level(lv)
            except pb.ProblemError as exc:
                raise ConfigError(str(exc)) from exc
        return src

    def pairs(self) -> list:
        if self.pairing == "paired":
            return list(zip(self.coarse_levels, self.fine_levels))
        return [(c, f) for c in self.coarse_levels for f in self.fine_levels]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        if path.suffix in (".yaml", ".yml"):
            import yaml
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


# ----------------------------------------------------------------------- pipeline

@dataclass
class PairResult:
    coarse: object
    fine: object
    stage_one: Spectrum
    window_values: np.ndarray  # stage-one values in the window variable
    selection: Selection
    projection: ProjectionQ
    stage_two: Spectrum
    plane: np.ndarray  # stage-two values in the window variable
    targets: list
    clusters: ClusterReport
    verdicts: list
    metrics: list = field(default_factory=list)  # (reference, metric, error)

    @property
    def tag(self) -> str:
        return f"m{self.coarse}_n{self.fine}"


def run_pair(source, coarse, fine, window: SpectralWindow, mode: str = DIRECT,
             radius: Optional[float] = None, im_threshold: float = DEFAULT_IM_THRESHOLD,
             targets: Optional[list] = None, unique_window: bool = False,
             references: Optional[list] = None, vectors: bool = True) -> PairResult:
    """Run both stages for one (coarse, fine) pair.

    In inverse mode every value (window, targets, references, clusters) is in
    the resolvent variable ``w = 1/(lambda - gamma)``; ``references`` are
    always given as eigenvalues ``lambda`` of ``T``.
    """
    if isinstance(source, pb.ProblemSpec):
        source = ProblemSource(source)
    fm_c = source.assemble(coarse)
    stage1 = spectrum_of_t(fm_c)
    gamma = window.gamma if mode == INVERSE else None
    if mode == INVERSE and gamma is None:
        raise WindowError("inverse mode needs window.gamma")
    if mode == DIRECT and window.gamma is not None:
        window = SpectralWindow(window.a, window.b)
    sel = select_window(stage1, window, mass=fm_c.mass)
    lam1 = np.real(stage1.values)
    xvals = lam1 if gamma is None else 1.0 / (lam1 - gamma)

    fm_f = fm_c if fine == coarse else source.assemble(fine)
    nest = source.nesting(coarse, fine)
    if nest is not None:
        q = build_projection(sel.vectors, fm_f, nesting=nest)
    else:
        q = build_projection(sel.vectors, fm_f, cross=source.cross(coarse, fine), coarse=fm_c)
    if gamma is None:
        stage2 = dissipative_spectrum(fm_f, q, vectors=vectors)
        plane = np.asarray(stage2.values)
    else:
        stage2 = inverse_dissipative_spectrum(fm_f, q, gamma, vectors=vectors)
        plane = stage2.resolvent_values()

    if targets is None:
        targets = auto_targets(plane, window, im_threshold)
    report = cluster(plane, targets, radius=radius, im_threshold=im_threshold,
                     window=(window.a, window.b), unique=unique_window)
    verdicts = pollution_report(sel.values, report, indices=sel.indices)

    metrics = []
    if references:
        fine_t = np.real(spectrum_of_t(fm_f).values) if fm_f is not fm_c else lam1
        fine_x = fine_t if gamma is None else 1.0 / (fine_t - gamma)
        for ref in references:
            r = float(ref) if gamma is None else 1.0 / (float(ref) - gamma)
            metrics.append((float(ref), "galerkin", float(np.min(np.abs(fine_x - r)))))
            if window.contains(r):
                metrics.append((float(ref), "dissipative", float(np.min(np.abs(plane - (r + 1j))))))
    return PairResult(coarse, fine, stage1, xvals, sel, q, stage2, plane, list(targets),
                      report, verdicts, metrics)


def fit_metrics(results) -> list:
    """Rate fits per (reference, metric) against the coarse level."""
    series = {}
    for res in results:
        for ref, metric, err in res.metrics:
            series.setdefault((ref, metric), []).append((float(res.coarse), err))
    return _fit_series(series)


def _fit_series(series: dict) -> list:
    rows = []
    for (ref, metric), pts in sorted(series.items()):
        if len(pts) < 4 or any(e <= 0 for _, e in pts):
            continue
        fit = fit_rate(sorted(pts))
        rows.append({"reference": ref, "metric": metric, "points": len(pts),
                     "slope": fit.slope, "intercept": fit.intercept,
                     "r_squared": fit.r_squared})
    return rows


# ------------------------------------------------------------------------- output

def _g(x) -> str:
    return "%.17g" % x


def _role(i, report: ClusterReport) -> str:
    for k, c in enumerate(report.clusters):
        if i in c.members:
            return f"cluster{k}"
    if i in report.unexpected:
        return "unexpected"
    if i in report.echoes:
        return "echo"
    return "real"


def result_tables(res: PairResult) -> dict:
    """Rows of every per-pair table; all floats already formatted at 17 digits."""
    sel = set(res.selection.indices.tolist())
    lam = np.real(res.stage_one.values)
    stage1 = [{"index": i, "lambda": _g(lam[i]), "window_value": _g(res.window_values[i]),
               "residual": _g(res.stage_one.pairs.residual_norms[i]), "selected": int(i in sel)}
              for i in range(len(lam))]
    z = np.asarray(res.stage_two.values)
    stage2 = [{"index": i, "re": _g(z[i].real), "im": _g(z[i].imag),
               "plane_re": _g(res.plane[i].real), "plane_im": _g(res.plane[i].imag),
               "residual": _g(res.stage_two.pairs.residual_norms[i]),
               "role": _role(i, res.clusters)} for i in range(len(z))]
    clusters = [{"cluster": k, "target": _g(c.target), "multiplicity": c.multiplicity,
                 "mean_re": _g(c.mean.real), "mean_im": _g(c.mean.imag),
                 "loc_lo": _g(c.localization[0]), "loc_hi": _g(c.localization[1]),
                 "members": " ".join(map(str, c.members))}
                for k, c in enumerate(res.clusters.clusters)]
    pollution = [{"index": v.index, "value": _g(v.value), "verdict": v.label,
                  "estimate": "" if v.estimate is None else _g(v.estimate),
                  "loc_lo": "" if v.interval is None else _g(v.interval[0]),
                  "loc_hi": "" if v.interval is None else _g(v.interval[1])}
                 for v in res.verdicts]
    metrics = [{"coarse": res.coarse, "fine": res.fine, "reference": _g(r), "metric": m,
                "error": _g(e)} for r, m, e in res.metrics]
    return {"stage1": stage1, "stage2": stage2, "clusters": clusters,
            "pollution": pollution, "metrics": metrics}


STAGE1_COLUMNS = ["index", "lambda", "window_value", "residual", "selected"]
STAGE2_COLUMNS = ["index", "re", "im", "plane_re", "plane_im", "residual", "role"]
CLUSTER_COLUMNS = ["cluster", "target", "multiplicity", "mean_re", "mean_im",
                   "loc_lo", "loc_hi", "members"]
POLLUTION_COLUMNS = ["index", "value", "verdict", "estimate", "loc_lo", "loc_hi"]
METRIC_COLUMNS = ["coarse", "fine", "reference", "metric", "error"]
RATE_COLUMNS = ["reference", "metric", "points", "slope", "intercept", "r_squared"]
COLUMNS = {"stage1": STAGE1_COLUMNS, "stage2": STAGE2_COLUMNS, "clusters": CLUSTER_COLUMNS,
           "pollution": POLLUTION_COLUMNS, "metrics": METRIC_COLUMNS}


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_pair(res: PairResult, outdir: Path, fmt: str) -> list:
    tables = result_tables(res)
    files = []
    if fmt == "json":
        p = outdir / f"{res.tag}.json"
        p.write_text(json.dumps({"coarse": res.coarse, "fine": res.fine,
                                 "targets": [_g(t) for t in res.targets], **tables}, indent=1))
        return [p.name]
    for name, rows in tables.items():
        p = outdir / f"{name}_{res.tag}.csv"
        _write_csv(p, COLUMNS[name], rows)
        files.append(p.name)
    return files


def write_rates(rows, outdir: Path, fmt: str) -> str:
    formatted = [{k: (_g(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]
    if fmt == "json":
        p = outdir / "rates.json"
        p.write_text(json.dumps(formatted, indent=1))
    else:
        p = outdir / "rates.csv"
        _write_csv(p, RATE_COLUMNS, formatted)
    return p.name


def rates_from_outputs(outdir) -> list:
    """Recompute the rates table from the per-pair metric files on disk."""
    outdir = Path(outdir)
    series = {}
    rows = []
    for p in sorted(outdir.glob("metrics_*.csv")):
        with p.open() as fh:
            rows.extend(csv.DictReader(fh))
    for p in sorted(outdir.glob("m*_n*.json")):
        rows.extend(json.loads(p.read_text())["metrics"])
    for r in rows:
        key = (float(r["reference"]), r["metric"])
        series.setdefault(key, []).append((float(r["coarse"]), float(r["error"])))
    return _fit_series(series)


# ------------------------------------------------------------------------ runner

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _run_one(args):
    cfg, coarse, fine = args
    src = cfg.source()
    refs = cfg.references if cfg.references is not None else src.references()
    return run_pair(src, coarse, fine, cfg.spectral_window(), cfg.mode, cfg.radius,
                    cfg.im_threshold,
                    None if cfg.targets is None else [parse_number(t) for t in cfg.targets],
                    cfg.unique_window, [parse_number(r) for r in refs], cfg.vectors)


def _pair_entry(res: PairResult) -> dict:
    entry = {"coarse": res.coarse, "fine": res.fine, "q_rank": res.projection.rank,
             "clusters": [c.multiplicity for c in res.clusters.clusters]}
    if res.projection.rank == 0:
        entry["note"] = "empty window: Q has rank 0, stage two equals the fine Galerkin spectrum"
        log.warning("pair %s: window selects nothing, Q has rank 0", res.tag)
    return entry


def run(cfg: ExperimentConfig, output: Optional[str] = None) -> int:
    """Execute every (coarse, fine) pair of ``cfg`` and write the artefacts.

    Returns the process exit status.  A manifest is always written; when a
    pair fails it records the error and ``complete: false``.
    """
    outdir = Path(output or cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "pairs": [], "files": [], "complete": False,
                "error": None}
    status = EXIT_OK
    results = []
    jobs = [(cfg, c, f) for c, f in cfg.pairs()]
    try:
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(cfg.workers) as ex:
                it = ex.map(_run_one, jobs)
                for res in it:
                    results.append(res)
                    manifest["files"] += write_pair(res, outdir, cfg.format)
                    manifest["pairs"].append(_pair_entry(res))
        else:
            for job in jobs:
                log.info("running pair coarse=%s fine=%s", job[1], job[2])
                res = _run_one(job)
                results.append(res)
                manifest["files"] += write_pair(res, outdir, cfg.format)
                manifest["pairs"].append(_pair_entry(res))
        rates = fit_metrics(results)
        if rates:
            manifest["files"].append(write_rates(rates, outdir, cfg.format))
        manifest["complete"] = True
    except (ConfigError, pb.ProblemError, WindowError) as exc:
        manifest["error"] = f"config error: {exc}"
        status = EXIT_CONFIG
    except Exception as exc:  # numerical failure of any module
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_NUMERIC
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str))
    return status


# ------------------------------------------------------------------------ presets

def _fourier(coarse, fine, pairing="paired"):
    return {"problem": {"kind": pb.FOURIER}, "window": {"a": "-pi", "b": "pi"},
            "coarse_levels": coarse, "fine_levels": fine, "pairing": pairing,
            "targets": None}


def _fem(window, coarse, fine, unique=True):
    return {"problem": {"kind": pb.BLOCK_FEM, "n_branches": 1}, "mode": INVERSE,
            "window": {**window, "gamma": 0}, "coarse_levels": coarse, "fine_levels": fine,
            "unique_window": unique}


PRESETS = {
    "example1-fig1": _fourier([25], [50, 200, 800], pairing="crossed"),
    "example1-rates": _fourier([50, 100, 200, 300, 400, 500],
                               [100, 200, 400, 600, 800, 1000]),
    "example1-seq1": _fourier(list(range(4, 41, 4)), [10 * k for k in range(4, 41, 4)]),
    "example2-pollution": _fem({"a": "1/4", "b": "9/10"}, [49], [576]),
    "example2-lambda1plus": _fem({"a": "1/20", "b": "1/5"}, [49], [576]),
    "example2-table1": _fem({"a": "1/20", "b": "1/5"}, [9, 19, 39, 79, 159, 319],
                            [18, 38, 78, 158, 318, 638]),
    "example2-quarter": _fem({"a": "1/20", "b": "1/5"}, [9, 19, 39, 79], [36, 76, 156, 316]),
    "synthetic-demo": {"problem": {"kind": pb.SYNTHETIC, "seed": 1,
                                   "eigenvalues": [-6, -5, -4, 0, 0.5, 4, 5, 6, 7, 8, 9, 10]},
                       "window": {"a": -1, "b": 2}, "coarse_levels": [9],
                       "fine_levels": [12]},
}


def preset_config(name: str, output: Optional[str] = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    d = {k: v for k, v in PRESETS[name].items() if v is not None}
    d["output"] = output or f"out/{name}"
    return ExperimentConfig.from_dict(d)
