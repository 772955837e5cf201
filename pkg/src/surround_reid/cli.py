"""Command-line driver: simulate, track, evaluate, ablate.

Exit codes: 0 success, 2 malformed config or input file or unknown study,
3 embedding dimension mismatch, 4 results and dataset describe different
sequences.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig, load_config
from .core import CAMERA_ORDER
from .errors import ConfigError, DomainError, RecordError, SequenceMismatch
from .experiments import STUDIES, eval_sequence, run_study
from .mct import DetectionEmbeddings, Inherit
from .metrics import IcReport, count_idsw
from .pipeline import SurroundPipeline
from .records import (
    DatasetSequence,
    ResultsSequence,
    read_dataset,
    read_results,
    write_dataset,
    write_results,
)
from .sct import EventKind
from .sim import OracleTracker, generate_world, render_sequence

EXIT_USAGE = 2
EXIT_DIMENSION = 3
EXIT_SEQUENCE = 4


class DimensionMismatch(DomainError):
    """Embeddings in the dataset do not have the configured dimension."""


# ---------------------------------------------------------------------------
# in-process operations


def simulate(cfg: RunConfig) -> DatasetSequence:
    world = generate_world(cfg.sim)
    frames = list(render_sequence(world))
    return DatasetSequence(f"s{cfg.sim.seed}", cfg.sim.seed, cfg.sim.embedding.dim, frames)


def check_dataset(seq: DatasetSequence, dim: int) -> None:
    """Reject inputs the pipeline cannot run on before any work starts."""
    if seq.embedding_dim != dim:
        raise DimensionMismatch(
            f"sequence {seq.sequence!r} declares embedding_dim {seq.embedding_dim}, config expects {dim}"
        )
    for frames in seq.frames:
        for cf in frames.values():
            for det in cf.detections:
                where = f"sequence {seq.sequence!r} frame {cf.frame} camera {cf.camera.value}"
                if det.embedding is None:
                    raise RecordError(f"{where}: detection without embedding")
                if det.embedding.shape != (dim,):
                    raise DimensionMismatch(f"{where}: embedding of length {det.embedding.size}, expected {dim}")
                if det.gt_id is None:
                    raise RecordError(f"{where}: the oracle tracker needs ground-truth ids on detections")


def track(seq: DatasetSequence, cfg: RunConfig, seed: Optional[int] = None) -> ResultsSequence:
    dim = cfg.sim.embedding.dim
    check_dataset(seq, dim)
    rig = cfg.sim.rig
    backend = OracleTracker(rig, cfg.sim.noise, seq.seed if seed is None else seed)
    pipe = SurroundPipeline(rig, cfg.pipeline(), backend, DetectionEmbeddings(dim))
    return ResultsSequence(seq.sequence, pipe.run(seq.frames))


def evaluate(
    results: Sequence[ResultsSequence], dataset: Sequence[DatasetSequence], cfg: RunConfig
) -> dict[str, IcReport]:
    got = [(r.sequence, r.n_frames) for r in results]
    want = [(d.sequence, d.n_frames) for d in dataset]
    if got != want:
        raise SequenceMismatch(f"results describe {got}, dataset describes {want}")
    return {
        d.sequence: count_idsw(eval_sequence(d.frames, r.ticks), cfg.iou_min, cfg.scope)
        for d, r in zip(dataset, results)
    }


# ---------------------------------------------------------------------------
# formatting


def _ic_text(report: IcReport) -> str:
    return "undefined" if report.ic is None else f"{report.ic:.4f}"


def report_rows(reports: dict[str, IcReport]) -> list[list[str]]:
    rows = []
    for name, rep in reports.items():
        for cam in CAMERA_ORDER:
            sub = rep.per_camera.get(cam, IcReport(0, 0, {}))
            rows.append([name, cam.value, str(sub.total_idsw), str(sub.total_id), _ic_text(sub)])
        rows.append([name, "total", str(rep.total_idsw), str(rep.total_id), _ic_text(rep)])
    return rows


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(x).ljust(w) if i == 0 else str(x).rjust(w) for i, (x, w) in enumerate(zip(r, widths)))
             for r in [header, *rows]]
    return "\n".join(line.rstrip() for line in lines) + "\n"


REPORT_HEADER = ("sequence", "camera", "idsw", "id", "ic")


def format_report(reports: dict[str, IcReport], fmt: str) -> str:
    rows = report_rows(reports)
    if fmt == "csv":
        return _csv(REPORT_HEADER, rows)
    text = _table(REPORT_HEADER, rows)
    for name, rep in reports.items():
        if rep.ic is None:
            text += f"{name}: IC undefined (no ground-truth targets)\n"
    return text


def study_rows(result) -> tuple[list[str], list[list[str]]]:
    metric = result.rows[0].metric if result.rows else "ic"
    header = ["variant", metric, "ci_low", "ci_high", "ic", "template_updates", "deletions", "idsw"]
    if metric == "match_accuracy":
        header.append("inherits")
    rows = []
    for r in result.rows:
        row = [r.variant, f"{r.mean:.4f}", f"{r.ci_low:.4f}", f"{r.ci_high:.4f}", f"{r.extra['ic']:.4f}",
               str(r.extra["template_updates"]), str(r.extra["deletions"]), str(r.extra["idsw"])]
        if metric == "match_accuracy":
            row.append(str(r.extra["inherits"]))
        rows.append(row)
    return header, rows


def study_to_dict(result) -> dict:
    return {
        "study": result.study,
        "seeds": result.seeds,
        "rows": [
            {"variant": r.variant, "metric": r.metric, "mean": r.mean, "ci_low": r.ci_low, "ci_high": r.ci_high,
             "values": r.values, **r.extra}
            for r in result.rows
        ],
    }


# ---------------------------------------------------------------------------
# commands


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_simulate(args, cfg: RunConfig) -> int:
    seq = simulate(cfg)
    write_dataset([seq], args.out)
    records = sum(1 for frames in seq.frames for cf in frames.values() if cf.gt or cf.detections)
    print(f"simulated {seq.sequence}: {cfg.sim.n_vehicles} vehicles, {seq.n_frames} frames, "
          f"{len(CAMERA_ORDER)} cameras, {records} records -> {args.out}")
    return 0


def cmd_track(args, cfg: RunConfig) -> int:
    dataset = read_dataset(args.dataset)
    results = [track(seq, cfg, args.seed) for seq in dataset]
    write_results(results, args.out)
    for res in results:
        kinds = [e.kind for t in res.ticks for fr in t.results.values() for e in fr.events]
        inherits = sum(isinstance(ev.decision, Inherit) for t in res.ticks for ev in t.associations)
        print(f"tracked {res.sequence}: {res.n_frames} frames, {kinds.count(EventKind.TRACK_CREATED)} tracks, "
              f"{inherits} inherited ids, {kinds.count(EventKind.TEMPLATE_UPDATED)} template updates, "
              f"{kinds.count(EventKind.TRACK_DELETED)} deletions -> {args.out}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    reports = evaluate(read_results(args.results), read_dataset(args.dataset), cfg)
    sys.stdout.write(format_report(reports, args.format))
    if args.out:
        doc = {"iou_min": cfg.iou_min, "scope": cfg.scope,
               "sequences": {name: rep.as_dict() for name, rep in reports.items()}}
        _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    if args.study not in STUDIES:
        raise ConfigError(f"unknown study {args.study!r} (choose from {', '.join(STUDIES)})")
    first = 0 if args.seed is None else args.seed
    seeds = list(range(first, first + cfg.ablate_seeds))
    result = run_study(args.study, seeds, cfg.pipeline(), iou_min=cfg.iou_min, scope=cfg.scope)
    header, rows = study_rows(result)
    if args.format == "csv":
        sys.stdout.write(_csv(header, rows))
    else:
        sys.stdout.write(f"{args.study} over {len(seeds)} seeds ({seeds[0]}..{seeds[-1]})\n")
        sys.stdout.write(_table(header, rows))
    if args.out:
        _write_text(args.out, json.dumps(study_to_dict(result), indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--format", choices=("text", "csv"), default="text", help="standard output format")

    parser = argparse.ArgumentParser(prog="surround-reid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="render a scenario to a dataset file")
    p.add_argument("--out", type=Path, required=True, help="dataset file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", parents=[common], help="run the tracking pipeline over a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="results file to write")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", parents=[common], help="identity consistency of a results file")
    p.add_argument("results", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, help="structured report file to write")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="run a Table 1/2/3 ablation study")
    p.add_argument("study", help=", ".join(STUDIES))
    p.add_argument("--out", type=Path, help="machine-readable study file to write")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        return args.func(args, cfg)
    except DimensionMismatch as exc:
        code, msg = EXIT_DIMENSION, str(exc)
    except SequenceMismatch as exc:
        code, msg = EXIT_SEQUENCE, str(exc)
    except (ConfigError, RecordError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except OSError as exc:
        code, msg = EXIT_USAGE, f"cannot write output: {exc}"
    print(f"surround-reid: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
