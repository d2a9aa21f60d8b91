"""Config-driven batch run: trials -> features -> matrices -> reports.

Every per-trial stage here is the same function the matching CLI subcommand
calls, so a pipeline run and a manual composition of subcommands produce the
same files byte for byte.
"""
from __future__ import annotations

import csv
import glob
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .calibration import AffineTransform, apply_affine, collect_pairs, fit_affine, residual
from .core import ScreenGeometry, TrialManifest, check_unique_labels, degrees_to_pixels, fmt, load_manifest
from .dissimilarity import DEFAULT_EPSILON, METRICS, FeatureGrid, build_matrix, serialize_matrix
from .evaluation import EvalReport, evaluate, serialize_curve
from .exceptions import DataError, DegenerateFit, DegenerateGroundTruth, EmptyMap, MalformedFile
from .fdm import DEFAULT_GRID, DEFAULT_SIGMA, FixationDensityMap, density_map, serialize_fdm
from .fixations import ClusterParams, Fixation, build_epochs, detect_fixations, fixations_in_epochs, serialize_fixations
from .spectral import spectral_feature, serialize_spectrum
from .ttt import DEFAULT_WINDOW, TttRecord, extract_ttt, serialize_records, serialize_stats, ttt_stats

log = logging.getLogger(__name__)

DOMAINS = ("fdm", "fdm_recal", "dft", "dft_recal")
_DOMAIN_ALIASES = {"fdm'": "fdm_recal", "dft'": "dft_recal"}
ALL_GROUP = "all"


def normalize_domain(name: str) -> str:
    key = name.strip().lower()
    key = _DOMAIN_ALIASES.get(key, key)
    if key not in DOMAINS:
        raise ValueError(f"unknown domain {name!r}; choose from {', '.join(DOMAINS)}")
    return key


def normalize_metric(name: str) -> str:
    key = name.strip().lower()
    key = {"1-min": "min"}.get(key, key)
    if key not in METRICS:
        raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
    return key


@dataclass
class PipelineConfig:
    dataset: list = field(default_factory=list)
    output_dir: str = "out"
    grid_n: int = DEFAULT_GRID
    sigma: float = DEFAULT_SIGMA
    box_limit: int | None = None
    epsilon: float = DEFAULT_EPSILON
    eps_deg: float = 1.0
    min_points: int = 5
    min_duration: float = 0.1
    max_gap: float = 0.1
    ttt_radius_deg: float = 3.0
    ttt_window: tuple = DEFAULT_WINDOW
    recal_radius_deg: float = 3.0
    recal_trim: float = 0.0
    recalibrate: bool = True
    domains: tuple = DOMAINS
    metrics: tuple = METRICS
    seed: int = 0
    synth: dict | None = None
    base_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.dataset, str):
            self.dataset = [self.dataset]
        self.domains = tuple(normalize_domain(d) for d in self.domains)
        self.metrics = tuple(normalize_metric(m) for m in self.metrics)
        self.ttt_window = tuple(float(v) for v in self.ttt_window)
        if not self.recalibrate:
            recal = [d for d in self.domains if d.endswith("_recal")]
            if recal and tuple(self.domains) != DOMAINS:
                raise ValueError(f"domains {recal} need recalibrate=true")
            self.domains = tuple(d for d in self.domains if not d.endswith("_recal"))
        if not self.domains or not self.metrics:
            raise ValueError("at least one domain and one metric are required")
        if self.grid_n < 8 or self.sigma < 0 or not self.epsilon > 0:
            raise ValueError("grid_n >= 8, sigma >= 0 and epsilon > 0 are required")
        lo, hi = self.ttt_window
        if not 0 <= lo < hi:
            raise ValueError(f"bad TTT window {self.ttt_window}")
        if not self.dataset and not self.synth:
            raise ValueError("config names no dataset and no synth block")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        doc = dict(doc)
        if base_dir is not None and doc.get("base_dir") is None:
            doc["base_dir"] = str(base_dir)
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def _path(self, p) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    @property
    def output_path(self) -> Path:
        return self._path(self.output_dir)

    def cluster_params(self, geometry: ScreenGeometry) -> ClusterParams:
        return ClusterParams.default(geometry, self.eps_deg, min_points=self.min_points,
                                     min_duration=self.min_duration, max_gap=self.max_gap)

    def manifest_paths(self) -> list[Path]:
        """Dataset entries expanded (globs) and sorted; each must exist."""
        out = []
        for entry in self.dataset:
            p = self._path(entry)
            if any(ch in str(entry) for ch in "*?["):
                hits = sorted(Path(h) for h in glob.glob(str(p)))
                if not hits:
                    raise DataError(f"dataset pattern matched nothing: {entry}")
                out.extend(hits)
            elif p.is_dir():
                out.extend(sorted(p.glob("*.manifest.json")))
            elif p.exists():
                out.append(p)
            else:
                raise DataError(f"manifest not found: {p}")
        return out

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("base_dir")
        doc["ttt_window"] = list(self.ttt_window)
        doc["domains"] = list(self.domains)
        doc["metrics"] = list(self.metrics)
        return doc


# -- per-trial stages (shared with the CLI) -----------------------------------

def stage_fixations(manifest: TrialManifest, params: ClusterParams) -> list[Fixation]:
    return detect_fixations(manifest.load_trace(), params)


@dataclass(frozen=True)
class RecalResult:
    transform: AffineTransform
    fixations: list
    n_pairs: int
    residual: float | None
    fallback: bool


def stage_recalibrate(fixs: Sequence[Fixation], events, radius: float, trim: float = 0.0) -> RecalResult:
    """Fit the trial's affine correction; falls back to identity if unfittable."""
    pairs = collect_pairs(fixs, events, radius)
    try:
        t = fit_affine(pairs, trim=trim)
    except DegenerateFit as exc:
        log.warning("recalibration fell back to identity: %s", exc)
        return RecalResult(AffineTransform.identity(), list(fixs), len(pairs), None, True)
    return RecalResult(t, apply_affine(t, fixs), len(pairs), residual(t, pairs), False)


def stage_fdm(manifest: TrialManifest, fixs: Sequence[Fixation], n: int, sigma: float) -> FixationDensityMap:
    """Blank-screen density map of one trial; raises EmptyMap if nothing is left."""
    blank = fixations_in_epochs(fixs, build_epochs(manifest.load_events()), "blank")
    return density_map(blank, manifest.geometry, n, sigma, manifest.label)


def group_indices(labels, week: str | None) -> list[int]:
    return [i for i, lab in enumerate(labels) if week is None or lab.week_id == week]


def check_subjects(labels) -> None:
    if len({lab.subject_id for lab in labels}) < 2:
        raise DegenerateGroundTruth("fewer than two usable subjects")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# -- full run -------------------------------------------------------------------

@dataclass
class PipelineResult:
    reports: dict  # (domain, metric, group) -> EvalReport
    excluded: list  # (trial label, domain, reason)
    ttt_records: list
    groups: list

    def summary_rows(self, domains, metrics) -> list[list[str]]:
        rows = []
        for d in domains:
            for m in metrics:
                row = [d, m]
                for g in self.groups:
                    r: EvalReport = self.reports[(d, m, g)]
                    row += [fmt(r.acc_at_max_f1), fmt(r.auc), fmt(r.eer)]
                rows.append(row)
        return rows


def _feature(domain: str, m: FixationDensityMap, box_limit):
    return spectral_feature(m, box_limit) if domain.startswith("dft") else m


def _serialize_feature(domain: str, f) -> str:
    return serialize_spectrum(f) if domain.startswith("dft") else serialize_fdm(f)


def _synth_dataset(cfg: PipelineConfig) -> list[Path]:
    from .synth import generate_dataset

    opts = dict(cfg.synth)
    out = cfg.output_path / opts.pop("dir", "dataset")
    trials = opts.pop("trials", 8)
    weeks = tuple(str(w) for w in opts.pop("weeks", ("1", "2")))
    if opts:
        raise ValueError(f"unknown synth keys: {', '.join(sorted(opts))}")
    return generate_dataset(out, cfg.seed, trials=trials, weeks=weeks)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    out = cfg.output_path
    paths = cfg.manifest_paths() if cfg.dataset else []
    if cfg.synth:
        paths += _synth_dataset(cfg)
    manifests = [load_manifest(p) for p in paths]
    check_unique_labels(manifests)
    manifests.sort(key=lambda m: (m.subject_id, m.week_id, m.trial_index))
    if len(manifests) < 4:
        raise DegenerateGroundTruth(f"need at least 4 trials, got {len(manifests)}")
    check_subjects([m.label for m in manifests])

    need_recal = any(d.endswith("_recal") for d in cfg.domains)
    features = {d: [] for d in cfg.domains}
    excluded = []
    records: list[TttRecord] = []
    recal_rows = []
    for man in manifests:
        label, slug, g = man.label, man.label.slug, man.geometry
        fixs = stage_fixations(man, cfg.cluster_params(g))
        write_text(out / "fixations" / f"{slug}.csv", serialize_fixations(fixs))
        events = man.load_events()
        records += extract_ttt(fixs, events, degrees_to_pixels(cfg.ttt_radius_deg, g),
                               cfg.ttt_window, screen_center=g.center, label=label)
        variants = {"fdm": fixs}
        if need_recal:
            rc = stage_recalibrate(fixs, events, degrees_to_pixels(cfg.recal_radius_deg, g), cfg.recal_trim)
            variants["fdm_recal"] = rc.fixations
            write_text(out / "fixations_recal" / f"{slug}.csv", serialize_fixations(rc.fixations))
            write_text(out / "transforms" / f"{slug}.json", rc.transform.to_json())
            recal_rows.append([str(label), rc.n_pairs, "" if rc.residual is None else fmt(rc.residual),
                               "identity" if rc.fallback else "fit"])
        maps = {}
        for base, fx in variants.items():
            try:
                maps[base] = stage_fdm(man, fx, cfg.grid_n, cfg.sigma)
            except EmptyMap as exc:
                maps[base] = exc
        for d in cfg.domains:
            base = "fdm_recal" if d.endswith("_recal") else "fdm"
            m = maps[base]
            if isinstance(m, Exception):
                excluded.append((label, d, "empty fdm"))
                continue
            f = _feature(d, m, cfg.box_limit)
            write_text(out / d / f"{slug}.csv", _serialize_feature(d, f))
            features[d].append(FeatureGrid.from_map(f))

    weeks = sorted({m.week_id for m in manifests})
    groups = weeks + [ALL_GROUP]
    reports = {}
    for d in cfg.domains:
        for g in groups:
            idx = group_indices([f.label for f in features[d]], None if g == ALL_GROUP else g)
            subset = [features[d][i] for i in idx]
            check_subjects([f.label for f in subset])
            for metric in cfg.metrics:
                mat = build_matrix(subset, metric, cfg.epsilon)
                rep = evaluate(mat)
                stem = f"{d}_{metric}_{g}"
                write_text(out / "matrices" / f"{stem}.csv", serialize_matrix(mat))
                write_text(out / "curves" / f"{stem}.csv", serialize_curve(rep.curve))
                write_text(out / "reports" / f"{stem}.json",
                           rep.to_json(domain=d, metric=metric, group=g, n_trials=mat.size))
                reports[(d, metric, g)] = rep

    result = PipelineResult(reports, excluded, records, groups)
    _write_tables(out, cfg, result, recal_rows, len(manifests))
    return result


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_tables(out: Path, cfg: PipelineConfig, res: PipelineResult, recal_rows, n_trials: int) -> None:
    header = ["domain", "metric"] + [f"{g}_{k}" for g in res.groups for k in ("acc", "auc", "eer")]
    write_text(out / "summary.csv", _csv(res.summary_rows(cfg.domains, cfg.metrics), header))
    write_text(out / "excluded.csv",
               _csv([[str(lab), d, why] for lab, d, why in res.excluded], ["trial", "domain", "reason"]))
    if recal_rows:
        write_text(out / "recalibration.csv", _csv(recal_rows, ["trial", "n_pairs", "residual", "status"]))
    write_text(out / "ttt" / "records.csv", serialize_records(res.ttt_records))
    for grouping in ("all", "direction", "trial"):
        write_text(out / "ttt" / f"stats_{grouping}.csv", serialize_stats(ttt_stats(res.ttt_records, grouping)))
    doc = {**cfg.to_dict(), "n_trials": n_trials}
    write_text(out / "config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
