"""Synthetic corpora, end-to-end runs and (mu, nu) parameter sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import physics
from .detection import Confusion, clusters_mask, detect, pixel_f1, sample_metrics
from .physics import PHANTOM_KINDS, make_phantom, render_projection_pair
from .preprocess import PreprocessConfig, preprocess_pipeline
from .rawio import load_pair, save_pair
from .segmentation import ChanVeseParams, segment

log = logging.getLogger(__name__)

DEFECT_CLASSES = ("fan", "large_rib", "small_rib")
# quarter of a 100/100/96/192 corpus
QUARTER_SCALE_COUNTS = {"fan": 25, "large_rib": 25, "small_rib": 24, "none": 48}
DEFAULT_MU_GRID = tuple(float(m) for m in range(2, 21, 2))
DEFAULT_NU_GRID = tuple(float(n) for n in range(1, 6))
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    path: Path
    defect_class: str
    has_gt: bool = True

    @property
    def has_defect(self) -> bool:
        return self.defect_class != "none"


@dataclass
class DatasetIndex:
    root: Path
    samples: list[SampleRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sample ids in dataset index")

    def class_counts(self) -> dict[str, int]:
        out = {k: 0 for k in PHANTOM_KINDS}
        for s in self.samples:
            out[s.defect_class] += 1
        return out

    def write(self) -> Path:
        path = Path(self.root) / "index.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "class", "has_gt"])
            for s in self.samples:
                w.writerow([s.sample_id, s.defect_class, int(s.has_gt)])
        return path

    @classmethod
    def read(cls, root) -> "DatasetIndex":
        root = Path(root)
        with open(root / "index.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        samples = [
            SampleRecord(r["id"], root / r["id"], r["class"], bool(int(r["has_gt"])))
            for r in rows
        ]
        return cls(root, samples)


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    min_cluster: int = 30


@dataclass
class SampleOutcome:
    """Result of the full chain on one sample at one parameter setting."""

    sample_id: str
    defect_class: str
    has_defect: bool
    mu: float = float("nan")
    nu: float = float("nan")
    verdict: str | None = None
    n_clusters: int = 0
    largest: int = 0
    pixel: Confusion | None = None
    pixel_f1: float = float("nan")
    runtime_ms: float = float("nan")
    error: str | None = None
    segmentation: object = None
    decision: object = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _spawn_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_dataset(root, counts=None, shape=(192, 192), photons=1.0e5, seed=0,
                     bone_peak=(0.12, 0.24), area_scale=1.0) -> DatasetIndex:
    """Render a synthetic corpus to ``root`` and write its ``index.csv``.

    ``counts`` maps each class in ``fan, large_rib, small_rib, none`` to a
    sample count (missing classes count zero). Each sample gets its own
    seed spawned from ``seed``, so the corpus is reproducible.
    """
    counts = dict(QUARTER_SCALE_COUNTS if counts is None else counts)
    for k, v in counts.items():
        if k not in PHANTOM_KINDS:
            raise ValueError(f"unknown class {k!r}")
        if int(v) < 0:
            raise ValueError("class counts must be non-negative")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    plan = [(k, i) for k in PHANTOM_KINDS for i in range(int(counts.get(k, 0)))]
    seeds = _spawn_seeds(seed, len(plan))
    spectra = physics.bundled_spectrum(40), physics.bundled_spectrum(90)
    base, bone = physics.bundled_curve("muscle"), physics.bundled_curve("bone")

    samples = []
    for (kind, i), s in zip(plan, seeds):
        sid = f"{kind}_{i:04d}"
        phantom = make_phantom(kind, shape, seed=s, photons=photons,
                               area_scale=area_scale, bone_peak=bone_peak)
        pair = render_projection_pair(phantom, *spectra, base, bone)
        pair.meta.update(sample_id=sid, defect_class=kind, sample_seed=s)
        save_pair(pair, root / sid)
        samples.append(SampleRecord(sid, root / sid, kind, True))
    index = DatasetIndex(root, samples)
    index.write()
    return index


def prepare_sample(sample: SampleRecord, config: PipelineConfig):
    """Load and preprocess one sample; returns ``(normalized_quotient, ground_truth)``."""
    pair = load_pair(sample.path)
    nq = preprocess_pipeline(pair, config.preprocess)
    return nq, (pair.gt if sample.has_gt else None)


def _evaluate(sample, nq, gt, params, config) -> SampleOutcome:
    t0 = time.perf_counter()
    seg = segment(nq, params)
    runtime = (time.perf_counter() - t0) * 1000.0
    decision = detect(seg.mask, nq.n, config.min_cluster)
    out = SampleOutcome(sample.sample_id, sample.defect_class, sample.has_defect,
                        mu=params.mu, nu=params.nu, verdict=decision.verdict,
                        n_clusters=len(decision.clusters), largest=decision.largest,
                        runtime_ms=runtime, segmentation=seg, decision=decision)
    if gt is not None:
        pred = clusters_mask(decision.clusters, gt.shape)
        out.pixel, out.pixel_f1 = pixel_f1(pred, gt, nq.mask)
    return out


def _failure(sample, params, exc) -> SampleOutcome:
    return SampleOutcome(sample.sample_id, sample.defect_class, sample.has_defect,
                         mu=params.mu, nu=params.nu, error=f"{type(exc).__name__}: {exc}")


def run_sample(sample: SampleRecord, params: ChanVeseParams | None = None,
               config: PipelineConfig | None = None) -> SampleOutcome:
    """Preprocess, segment and detect one sample; failures become error records."""
    params = params or ChanVeseParams()
    config = config or PipelineConfig()
    try:
        nq, gt = prepare_sample(sample, config)
        return _evaluate(sample, nq, gt, params, config)
    except Exception as exc:  # per-sample isolation
        log.warning("sample %s failed: %s", sample.sample_id, exc)
        return _failure(sample, params, exc)


def _run_cells(sample, param_list, config, keep_details=False):
    try:
        nq, gt = prepare_sample(sample, config)
    except Exception as exc:
        log.warning("sample %s failed: %s", sample.sample_id, exc)
        return [_failure(sample, p, exc) for p in param_list]
    outs = []
    for p in param_list:
        try:
            o = _evaluate(sample, nq, gt, p, config)
            if not keep_details:
                o.segmentation = o.decision = None
        except Exception as exc:
            o = _failure(sample, p, exc)
        outs.append(o)
    return outs


@dataclass(frozen=True)
class SweepGrid:
    mu: tuple[float, ...] = DEFAULT_MU_GRID
    nu: tuple[float, ...] = DEFAULT_NU_GRID
    base: ChanVeseParams = field(default_factory=ChanVeseParams)

    def __post_init__(self):
        if not self.mu or not self.nu:
            raise ValueError("sweep grid needs at least one mu and one nu value")
        if min(self.mu) < 0 or min(self.nu) < 0:
            raise ValueError("sweep grid values must be non-negative")

    def params(self) -> list[ChanVeseParams]:
        return [replace(self.base, mu=float(m), nu=float(n))
                for m in sorted(self.mu) for n in sorted(self.nu)]


@dataclass
class CellResult:
    mu: float
    nu: float
    segmentation_f1: float
    detection_f1: float
    tpr: float
    tnr: float
    class_f1: dict[str, float]
    mean_runtime_ms: float
    confusion: Confusion
    n_samples: int
    n_failed: int

    @property
    def valid(self) -> bool:
        return self.n_failed <= MAX_FAILURE_FRACTION * self.n_samples


@dataclass
class Report:
    mu_values: list[float]
    nu_values: list[float]
    cells: list[CellResult]
    records: list[SampleOutcome]
    classes: list[str]

    def cell(self, mu, nu) -> CellResult:
        for c in self.cells:
            if c.mu == mu and c.nu == nu:
                return c
        raise KeyError((mu, nu))

    def _best(self, key):
        ok = [c for c in self.cells if c.valid and not math.isnan(key(c))]
        # ties resolved by grid order (mu, then nu ascending)
        return max(ok, key=key, default=None)

    def best_detection(self) -> CellResult | None:
        return self._best(lambda c: c.detection_f1)

    def best_segmentation(self) -> CellResult | None:
        return self._best(lambda c: c.segmentation_f1)

    def best_for_class(self, cls) -> CellResult | None:
        return self._best(lambda c: c.class_f1.get(cls, float("nan")))


def _nanmean(values):
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def summarize_cell(mu, nu, outcomes) -> CellResult:
    """Aggregate per-sample outcomes of one (mu, nu) cell.

    Segmentation F1 is the unweighted mean of pixel F1 over defect samples
    with ground truth; detection metrics use every sample that ran.
    """
    ok = [o for o in outcomes if not o.failed]
    defect = [o for o in ok if o.has_defect]
    seg_f1 = _nanmean([o.pixel_f1 for o in defect])
    classes = sorted({o.defect_class for o in defect})
    class_f1 = {k: _nanmean([o.pixel_f1 for o in defect if o.defect_class == k]) for k in classes}
    if ok:
        conf, det_f1, tpr, tnr = sample_metrics((o.verdict, o.has_defect) for o in ok)
    else:
        conf, det_f1, tpr, tnr = Confusion(), float("nan"), float("nan"), float("nan")
    return CellResult(mu, nu, seg_f1, det_f1, tpr, tnr, class_f1,
                      _nanmean([o.runtime_ms for o in ok]), conf,
                      len(outcomes), len(outcomes) - len(ok))


def sweep(index: DatasetIndex, grid: SweepGrid | None = None, config: PipelineConfig | None = None,
          jobs: int = 1, keep_details: bool = False) -> Report:
    """Evaluate every (mu, nu) cell of ``grid`` on every sample of ``index``.

    Each sample is preprocessed once and segmented for all cells. With
    ``jobs > 1`` samples are distributed over worker processes; the report
    is assembled in (mu, nu, sample id) order either way.
    """
    grid = grid or SweepGrid()
    config = config or PipelineConfig()
    if len(index) == 0:
        raise ValueError("empty dataset index")
    param_list = grid.params()
    samples = sorted(index.samples, key=lambda s: s.sample_id)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_sample = list(pool.map(_run_cells, samples, [param_list] * len(samples),
                                       [config] * len(samples), [keep_details] * len(samples)))
    else:
        per_sample = [_run_cells(s, param_list, config, keep_details) for s in samples]

    cells, records = [], []
    for k, p in enumerate(param_list):
        outs = [res[k] for res in per_sample]
        records.extend(outs)
        cells.append(summarize_cell(p.mu, p.nu, outs))
    classes = sorted({s.defect_class for s in samples if s.has_defect})
    return Report(sorted(set(float(m) for m in grid.mu)), sorted(set(float(n) for n in grid.nu)),
                  cells, records, classes)


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def _matrix_csv(path, report, key):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu\\nu"] + [f"{n:g}" for n in report.nu_values])
        for m in report.mu_values:
            w.writerow([f"{m:g}"] + [_fmt(key(report.cell(m, n))) for n in report.nu_values])


def _describe(cell, what):
    if cell is None:
        return f"{what}: none (no valid cell)"
    return f"{what}: mu={cell.mu:g} nu={cell.nu:g}"


def emit_report(report: Report, outdir) -> list[Path]:
    """Write metric matrices (rows mu, columns nu), per-sample rows and a summary.

    Everything except ``runtime_ms.csv`` is a deterministic function of the
    corpus, grid and configuration.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def matrix(name, key):
        path = out / name
        _matrix_csv(path, report, key)
        written.append(path)

    matrix("detection_f1.csv", lambda c: c.detection_f1)
    matrix("detection_tpr.csv", lambda c: c.tpr)
    matrix("detection_tnr.csv", lambda c: c.tnr)
    matrix("segmentation_f1.csv", lambda c: c.segmentation_f1)
    for cls in report.classes:
        matrix(f"segmentation_f1_{cls}.csv", lambda c, cls=cls: c.class_f1.get(cls, float("nan")))

    path = out / "per_sample.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", "nu", "sample_id", "class", "verdict", "gt", "n_clusters",
                    "largest_cluster", "pixel_f1", "error"])
        for r in report.records:
            w.writerow([f"{r.mu:g}", f"{r.nu:g}", r.sample_id, r.defect_class,
                        r.verdict or "error", "defected" if r.has_defect else "normal",
                        r.n_clusters, r.largest, _fmt(r.pixel_f1), r.error or ""])
    written.append(path)

    matrix("runtime_ms.csv", lambda c: c.mean_runtime_ms)

    lines = [
        f"grid: {len(report.mu_values)} mu x {len(report.nu_values)} nu = {len(report.cells)} cells",
        f"samples per cell: {report.cells[0].n_samples if report.cells else 0}",
        _describe(report.best_detection(), "best detection"),
        _describe(report.best_segmentation(), "best segmentation"),
    ]
    for cls in report.classes:
        lines.append(_describe(report.best_for_class(cls), f"best segmentation [{cls}]"))
    lines.append("")
    lines.append("mu nu detection_f1 tpr tnr segmentation_f1 failed valid")
    for c in report.cells:
        lines.append(f"{c.mu:g} {c.nu:g} {_fmt(c.detection_f1)} {_fmt(c.tpr)} {_fmt(c.tnr)} "
                     f"{_fmt(c.segmentation_f1)} {c.n_failed} {int(c.valid)}")
    path = out / "report_summary.txt"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    return written
