import csv
import shutil

import numpy as np
import pytest

from dexa_inspect.detection import sample_metrics
from dexa_inspect.harness import (DatasetIndex, PipelineConfig, SampleRecord, SweepGrid, emit_report,
                                  generate_dataset, run_sample, sweep)
from dexa_inspect.physics import make_phantom, render_projection_pair
from dexa_inspect.rawio import load_pair, save_pair
from dexa_inspect.segmentation import ChanVeseParams

SMALL = {"fan": 2, "large_rib": 1, "small_rib": 1, "none": 3}
GRID = SweepGrid((2.0, 4.0), (1.0, 2.0))


def tree_bytes(root, skip=()):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return generate_dataset(root, SMALL, seed=5)


@pytest.fixture(scope="module")
def report(corpus):
    return sweep(corpus, GRID)


def test_empty_counts(tmp_path):
    index = generate_dataset(tmp_path, {"fan": 0, "none": 0})
    assert len(index) == 0
    assert (tmp_path / "index.csv").read_text() == "id,class,has_gt\n"


def test_corpus_layout_and_counts(corpus):
    assert corpus.class_counts() == SMALL
    assert len({s.sample_id for s in corpus.samples}) == len(corpus)
    for s in corpus.samples:
        assert {p.name for p in s.path.iterdir()} == {"m1.raw", "m2.raw", "gt.raw", "meta.json"}
        pair = load_pair(s.path)
        assert pair.gt.any() == s.has_defect
        assert pair.meta["defect_class"] == s.defect_class
    again = DatasetIndex.read(corpus.root)
    assert again.samples == corpus.samples


def test_corpus_deterministic(tmp_path, corpus):
    generate_dataset(tmp_path, SMALL, seed=5)
    assert tree_bytes(tmp_path) == tree_bytes(corpus.root, skip=())


def test_different_seed_differs(tmp_path):
    a = generate_dataset(tmp_path / "a", {"none": 1}, seed=1)
    b = generate_dataset(tmp_path / "b", {"none": 1}, seed=2)
    assert (a.root / "none_0000/m1.raw").read_bytes() != (b.root / "none_0000/m1.raw").read_bytes()


def test_unwritable_root(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_dataset(blocker / "sub", {"none": 1})
    with pytest.raises(ValueError):
        generate_dataset(tmp_path / "neg", {"none": -1})


def test_index_rejects_duplicates(tmp_path):
    rec = SampleRecord("a", tmp_path / "a", "none")
    with pytest.raises(ValueError):
        DatasetIndex(tmp_path, [rec, rec])


def test_run_sample_records(corpus):
    fan = next(s for s in corpus.samples if s.defect_class == "fan")
    out = run_sample(fan, ChanVeseParams(mu=4, nu=2))
    assert not out.failed and out.verdict in ("defected", "normal")
    assert out.pixel is not None and 0 <= out.pixel_f1 <= 1 and out.runtime_ms > 0
    assert out.n_clusters == len(out.decision.clusters)


def test_noiseless_defect_is_detected(tmp_path, spectra, muscle, bone):
    pair = render_projection_pair(make_phantom("small_rib", (192, 192), seed=40), *spectra, muscle, bone,
                                  noise=False)
    save_pair(pair, tmp_path / "s")
    out = run_sample(SampleRecord("s", tmp_path / "s", "small_rib"), ChanVeseParams(mu=4, nu=2))
    assert out.verdict == "defected"


def test_corrupt_sample_isolated(tmp_path, corpus, report):
    root = tmp_path / "copy"
    shutil.copytree(corpus.root, root)
    victim = corpus.samples[0].sample_id
    (root / victim / "m2.raw").unlink()
    damaged = DatasetIndex.read(root)
    out = run_sample(damaged.samples[0])
    assert out.failed and "m2.raw" in out.error
    rep = sweep(damaged, SweepGrid((4.0,), (2.0,)))
    recs = {r.sample_id: r for r in rep.records}
    assert recs[victim].failed
    clean = {r.sample_id: r for r in report.records if (r.mu, r.nu) == (4.0, 2.0)}
    for sid, r in recs.items():
        if sid != victim:
            assert (r.verdict, r.pixel_f1) == (clean[sid].verdict, clean[sid].pixel_f1)
    # one failure in seven samples exceeds the 10% budget
    assert rep.cells[0].n_failed == 1 and not rep.cells[0].valid


def test_grid_validation_and_cardinality():
    assert len(SweepGrid().params()) == 50
    with pytest.raises(ValueError):
        SweepGrid((), (1.0,))
    with pytest.raises(ValueError):
        SweepGrid((-1.0,), (1.0,))


def test_sweep_cells(report, corpus):
    assert [(c.mu, c.nu) for c in report.cells] == [(2, 1), (2, 2), (4, 1), (4, 2)]
    assert all(c.n_samples == len(corpus) and c.valid for c in report.cells)
    assert report.classes == ["fan", "large_rib", "small_rib"]
    with pytest.raises(ValueError):
        sweep(DatasetIndex(corpus.root, []), GRID)


def test_single_cell_matches_run_sample(corpus, report):
    single = sweep(corpus, SweepGrid((4.0,), (2.0,)))
    outs = [run_sample(s, ChanVeseParams(mu=4, nu=2)) for s in sorted(corpus.samples, key=lambda s: s.sample_id)]
    assert [(o.verdict, o.pixel_f1) for o in outs] == [(r.verdict, r.pixel_f1) for r in single.records]
    cell, full = single.cells[0], report.cell(4.0, 2.0)
    # cell independence: the same numbers with or without the other grid cells
    for attr in ("detection_f1", "segmentation_f1", "tpr", "tnr", "class_f1"):
        assert getattr(cell, attr) == getattr(full, attr)


def test_jobs_do_not_change_results(corpus, report):
    par = sweep(corpus, GRID, jobs=2)
    key = lambda r: (r.mu, r.nu, r.sample_id, r.verdict, r.pixel_f1, r.largest)
    assert [key(r) for r in par.records] == [key(r) for r in report.records]


def test_emit_report(tmp_path, report):
    files = {p.name for p in emit_report(report, tmp_path)}
    assert {"detection_f1.csv", "segmentation_f1.csv", "per_sample.csv", "report_summary.txt",
            "segmentation_f1_fan.csv", "segmentation_f1_large_rib.csv",
            "segmentation_f1_small_rib.csv"} <= files
    rows = list(csv.reader(open(tmp_path / "detection_f1.csv")))
    assert rows[0] == ["mu\\nu", "1", "2"] and [r[0] for r in rows[1:]] == ["2", "4"]
    assert float(rows[2][2]) == pytest.approx(report.cell(4.0, 2.0).detection_f1, abs=1e-6)
    summary = (tmp_path / "report_summary.txt").read_text()
    assert "best detection: mu=" in summary and "best segmentation: mu=" in summary


def test_emit_one_cell(tmp_path, corpus):
    emit_report(sweep(corpus, SweepGrid((4.0,), (2.0,))), tmp_path)
    rows = list(csv.reader(open(tmp_path / "segmentation_f1.csv")))
    assert len(rows) == 2 and len(rows[1]) == 2


def test_report_bytes_deterministic(tmp_path, corpus, report):
    emit_report(report, tmp_path / "a")
    emit_report(report, tmp_path / "b")
    emit_report(sweep(corpus, GRID), tmp_path / "c")
    skip = ("runtime_ms.csv",)
    assert tree_bytes(tmp_path / "a", skip) == tree_bytes(tmp_path / "b", skip) == tree_bytes(tmp_path / "c", skip)


def test_detection_f1_recomputed_from_records(tmp_path, report):
    emit_report(report, tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "per_sample.csv")))
    for cell in report.cells:
        mine = [(r["verdict"], r["gt"] == "defected") for r in rows
                if float(r["mu"]) == cell.mu and float(r["nu"]) == cell.nu and r["verdict"] != "error"]
        _, f1, tpr, tnr = sample_metrics(mine)
        assert (f1, tpr, tnr) == (cell.detection_f1, cell.tpr, cell.tnr)


def test_best_cells(report):
    best = report.best_detection()
    assert best.detection_f1 == max(c.detection_f1 for c in report.cells)
    assert report.best_segmentation().segmentation_f1 == max(c.segmentation_f1 for c in report.cells)
    assert not np.isnan(report.best_for_class("fan").class_f1["fan"])


def test_pipeline_config_defaults():
    cfg = PipelineConfig()
    assert (cfg.preprocess.threshold, cfg.preprocess.bin_width, cfg.min_cluster) == (0.2, 0.1, 30)
