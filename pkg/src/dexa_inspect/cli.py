"""Command-line entry point: ``dexa-inspect {simulate,inspect,evaluate,sweep}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .detection import detect
from .harness import (DEFAULT_MU_GRID, DEFAULT_NU_GRID, DatasetIndex, PipelineConfig,
                      SweepGrid, emit_report, generate_dataset, sweep)
from .physics import PHANTOM_KINDS
from .preprocess import PreprocessConfig, preprocess_pipeline
from .rawio import load_pair, write_raw
from .segmentation import ChanVeseParams, segment

log = logging.getLogger("dexa_inspect")


class CliError(Exception):
    pass


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _counts(text):
    parts = text.split(",")
    if len(parts) != len(PHANTOM_KINDS):
        raise argparse.ArgumentTypeError(
            f"--counts needs {len(PHANTOM_KINDS)} values ({','.join(PHANTOM_KINDS)})")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--counts must be integers, got {text!r}")
    if min(values) < 0:
        raise argparse.ArgumentTypeError("--counts must be non-negative")
    return dict(zip(PHANTOM_KINDS, values))


def _dims(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dims must look like 192x192, got {text!r}")
    if h <= 0 or w <= 0:
        raise argparse.ArgumentTypeError("--dims must be positive")
    return h, w


def _add_pipeline_flags(p):
    g = p.add_argument_group("segmentation and detection")
    g.add_argument("--mu", type=float, default=4.0, help="boundary length penalty")
    g.add_argument("--nu", type=float, default=2.0, help="area penalty")
    g.add_argument("--lambda1", type=float, default=1.0)
    g.add_argument("--lambda2", type=float, default=1.0)
    g.add_argument("--dt", type=float, default=1.0)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--max-iter", type=int, default=200)
    g.add_argument("--epsilon", type=float, default=1.0)
    g.add_argument("--eta", type=float, default=1e-8)
    g.add_argument("--t-init", type=float, default=5.0)
    g.add_argument("--mask-threshold", type=float, default=0.2)
    g.add_argument("--bin-width", type=float, default=0.1)
    g.add_argument("--min-cluster", type=int, default=30)
    g.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dexa-inspect", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic corpus")
    p.add_argument("--counts", type=_counts, default="25,25,24,48",
                   help="samples per class: fan,large_rib,small_rib,none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_dims, default=(192, 192))
    p.add_argument("--photons", type=float, default=1.0e5)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("inspect", help="run the inspection chain on one sample directory")
    p.add_argument("sample", type=Path)
    _add_pipeline_flags(p)
    p.add_argument("--dump", action="store_true", help="write R, R', N and mask images")
    p.add_argument("--out", type=Path, help="directory for --dump output (default: sample dir)")

    p = sub.add_parser("evaluate", help="score one (mu, nu) setting on a corpus")
    p.add_argument("corpus", type=Path)
    _add_pipeline_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", help="score a (mu, nu) grid on a corpus")
    p.add_argument("corpus", type=Path)
    _add_pipeline_flags(p)
    p.add_argument("--mu-grid", type=_floats, default=DEFAULT_MU_GRID)
    p.add_argument("--nu-grid", type=_floats, default=DEFAULT_NU_GRID)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _params(args) -> ChanVeseParams:
    try:
        return ChanVeseParams(mu=args.mu, nu=args.nu, lambda1=args.lambda1, lambda2=args.lambda2,
                              dt=args.dt, tol=args.tol, max_iter=args.max_iter,
                              epsilon=args.epsilon, eta=args.eta, t_init=args.t_init)
    except ValueError as exc:
        raise CliError(str(exc))


def _config(args) -> PipelineConfig:
    if args.mask_threshold <= 0 or args.bin_width <= 0:
        raise CliError("--mask-threshold and --bin-width must be positive")
    if args.min_cluster < 0:
        raise CliError("--min-cluster must be non-negative")
    return PipelineConfig(PreprocessConfig(args.mask_threshold, args.bin_width), args.min_cluster)


def _index(path) -> DatasetIndex:
    if not (Path(path) / "index.csv").exists():
        raise CliError(f"{path}: no index.csv")
    index = DatasetIndex.read(path)
    if len(index) == 0:
        raise CliError(f"{path}: corpus is empty")
    return index


def cmd_simulate(args) -> int:
    index = generate_dataset(args.out, args.counts, shape=args.dims, photons=args.photons,
                             seed=args.seed)
    print(Path(args.out) / "index.csv")
    log.info("wrote %d samples", len(index))
    return 0


def cmd_inspect(args) -> int:
    params, config = _params(args), _config(args)
    try:
        pair = load_pair(args.sample)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read sample {args.sample}: {exc}")
    nq = preprocess_pipeline(pair, config.preprocess)
    seg = segment(nq, params)
    decision = detect(seg.mask, nq.n, config.min_cluster)
    sid = pair.meta.get("sample_id", Path(args.sample).name)
    print(f"{sid} {decision.verdict} {len(decision.clusters)} {decision.largest}")
    log.info("fit a=%.6g b=%.6g c=%.6g; %d iterations, converged=%s, c1=%.3f c2=%.3f",
             nq.fit.a, nq.fit.b, nq.fit.c, seg.iterations, seg.converged, seg.c1, seg.c2)
    if args.dump:
        out = Path(args.out or args.sample)
        out.mkdir(parents=True, exist_ok=True)
        write_raw(out / "quotient.raw", nq.quotient)
        write_raw(out / "corrected.raw", nq.corrected)
        write_raw(out / "normalized.raw", nq.n)
        write_raw(out / "mask.raw", seg.mask.astype(float))
    return 0


def _print_best(report):
    det, seg = report.best_detection(), report.best_segmentation()
    for name, cell in (("detection", det), ("segmentation", seg)):
        if cell is None:
            print(f"best {name}: none")
        else:
            print(f"best {name}: mu={cell.mu:g} nu={cell.nu:g} "
                  f"detection_f1={cell.detection_f1:.4f} segmentation_f1={cell.segmentation_f1:.4f}")


def cmd_evaluate(args) -> int:
    index = _index(args.corpus)
    if not all(s.has_gt for s in index.samples):
        raise CliError("evaluate needs ground truth for every sample")
    params, config = _params(args), _config(args)
    report = sweep(index, SweepGrid((params.mu,), (params.nu,), params), config, jobs=args.jobs)
    emit_report(report, args.out)
    cell = report.cells[0]
    print(f"mu={cell.mu:g} nu={cell.nu:g} segmentation_f1={cell.segmentation_f1:.4f} "
          f"detection_f1={cell.detection_f1:.4f} tpr={cell.tpr:.4f} tnr={cell.tnr:.4f}")
    return 0


def cmd_sweep(args) -> int:
    index = _index(args.corpus)
    params, config = _params(args), _config(args)
    try:
        grid = SweepGrid(args.mu_grid, args.nu_grid, params)
    except ValueError as exc:
        raise CliError(str(exc))
    report = sweep(index, grid, config, jobs=args.jobs)
    emit_report(report, args.out)
    _print_best(report)
    return 0


COMMANDS = {"simulate": cmd_simulate, "inspect": cmd_inspect,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"dexa-inspect: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"dexa-inspect: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
