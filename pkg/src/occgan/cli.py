"""Command-line experiment runner.

Subcommands: ``train``, ``eval``, ``score``, ``ablate``, ``sweep`` and
``pseudo dump``. Exit codes: 0 success, 1 validation error, 2 numeric
failure, 3 eta not reached (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence


from . import data as data_mod
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .experiment import (
    ABLATION_FIELDS,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    PreparedData,
    Streams,
    build_manifest,
    build_models,
    dump_json,
    evaluate_pair,
    git_revision,
    load_config,
    prepare_data,
    run_ablation,
    run_experiment,
    run_proposed,
)
from .metrics import SWEEP_AXES, MetricsReport, ScoreRecord, sweep, write_sweep_csv
from .ndcore import NumericFailure
from .phase1 import AdversarialTrainer
from .pseudo import sample_pseudo_batch
from .scoring import frame_score, gate_frames, score_records

logger = logging.getLogger("occgan")

OUT_ROOT_ENV = "OCCGAN_OUT_ROOT"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_ETA = 0, 1, 2, 3


class EtaNotReached(Exception):
    def __init__(self, ratio: float, eta: float, out: Path):
        self.ratio, self.eta, self.out = ratio, eta, out
        super().__init__(f"eta={eta} not reached; best loss ratio {ratio:.4f} (artifacts in {out})")


# ---------------------------------------------------------------------------
# helpers

def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates: dict = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "mode", None):
        updates["mode"] = args.mode
    return cfg.with_updates(**updates) if updates else cfg


def resolve_out(args, cfg: ExperimentConfig, suffix: str = "") -> Path:
    if getattr(args, "out", None):
        out = Path(args.out)
    elif cfg.out:
        out = Path(cfg.out)
    else:
        root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
        out = root / f"{Path(args.config).stem}-seed{cfg.seed}{suffix}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_scores_csv(records: Sequence[ScoreRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("sample_id", "score", "label"))
        for r in records:
            w.writerow((r.sample_id, repr(float(r.score)), "" if r.true_label is None else int(r.true_label)))


def report_dict(cfg: ExperimentConfig, mode: str, report: MetricsReport | None, notice: str | None) -> dict:
    out: dict = {"mode": mode, "tau": cfg.tau, "seed": cfg.seed, "config_hash": cfg.config_hash()}
    if report is None:
        out["metrics"] = None
        out["notice"] = notice
    else:
        d = report.to_dict()
        out["metrics"] = {k: d[k] for k in cfg.metrics}
        out["n_pos"], out["n_neg"] = report.n_pos, report.n_neg
    return out


def write_series_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("stage", "index", "auc"))
        for s in result.series:
            w.writerow((s.stage, s.index, repr(s.auc)))


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = resolve_out(args, cfg)
    result = run_experiment(cfg)
    written = write_run(result, out)
    dump_json(build_manifest(result, written), out / "manifest.json")
    logger.info("wrote %d files to %s", len(written) + 1, out)
    if result.phase1 is not None and not result.phase1.eta_reached:
        raise EtaNotReached(result.phase1.best_ratio, cfg.phase1.eta, out)
    return EXIT_OK


def write_run(result: ExperimentResult, out: Path) -> list[str]:
    written: list[str] = []

    def mark(name: str) -> Path:
        written.append(name)
        return out / name

    cfg = result.config
    if result.mode == "proposed":
        p1 = result.phase1
        save_checkpoint(mark("g_old.ckpt"), p1.pair.g_old, loss_r=p1.pair.loss_old)
        save_checkpoint(mark("g_new.ckpt"), p1.pair.g_new, loss_r=p1.pair.loss_new)
        save_checkpoint(mark("g_live.ckpt"), p1.generator, optimizer=p1.trainer.opt_g.state,
                        rng=p1.trainer.noise_rng)
        save_checkpoint(mark("d_phase1.ckpt"), p1.discriminator, optimizer=p1.trainer.opt_d.state)
        save_checkpoint(mark("d.ckpt"), result.d)
        p1.trace.write_csv(mark("phase1_trace.csv"))
        result.phase2.write_csv(mark("phase2_trace.csv"))
    else:
        tr = result.baseline_trainer
        save_checkpoint(mark("g_live.ckpt"), result.g_eval, optimizer=tr.opt_g.state, rng=tr.noise_rng)
        save_checkpoint(mark("d_live.ckpt"), result.d, optimizer=tr.opt_d.state)
    if result.data.train.encoder is not None:
        dump_json(result.data.train.encoder.to_dict(), mark("encoder.json"))
    write_series_csv(result, mark("series.csv"))
    write_scores_csv(result.evaluation.records, mark("scores.csv"))
    dump_json(report_dict(cfg, result.mode, result.report, result.evaluation.notice), mark("report.json"))
    return written


def _checkpoint_names(mode: str) -> tuple[str, str]:
    return ("g_new.ckpt", "d.ckpt") if mode == "proposed" else ("g_live.ckpt", "d_live.ckpt")


def load_run_models(cfg: ExperimentConfig, prepared: PreparedData, run_dir: Path):
    g_name, d_name = _checkpoint_names(cfg.mode)
    g_ref, d_ref = build_models(cfg, prepared, Streams(cfg.seed))
    g = load_checkpoint(run_dir / g_name, g_ref.architecture()).model
    d = load_checkpoint(run_dir / d_name, d_ref.architecture()).model
    return g, d


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    run_dir = Path(args.run) if args.run else resolve_out(args, cfg)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepare_data(cfg.dataset, Streams(cfg.seed))
    g, d = load_run_models(cfg, prepared, run_dir)
    ev = evaluate_pair(g, d, prepared, cfg.tau)
    if ev.notice:
        logger.warning(ev.notice)
    write_scores_csv(ev.records, out / f"eval_scores_{cfg.mode}.csv")
    dump_json(report_dict(cfg, cfg.mode, ev.report, ev.notice), out / f"eval_report_{cfg.mode}.json")
    return EXIT_OK


def _score_input(path: Path, run_dir: Path, g, d, prepared: PreparedData) -> list[ScoreRecord]:
    if path.is_dir():
        ids, frames = data_mod.read_pgm_dir(path)
        return [ScoreRecord(grid.frame_id, frame_score(g, d, grid)) for grid in gate_frames(frames, ids=ids)]
    name = path.name
    if name.endswith((".csv", ".txt", ".data")):
        enc_path = run_dir / "encoder.json"
        if not enc_path.exists():
            raise ConfigError([f"score: {enc_path} missing; tabular scoring needs the training encoder"])
        enc = data_mod.TabularEncoder.from_dict(json.loads(enc_path.read_text()))
        ds = data_mod.load_csv_tabular(path, enc.schema, encoder=enc)
        if enc.unknown_count:
            logger.warning("%d unknown categorical values mapped to zeros", enc.unknown_count)
        # raw class names carry no inlier/outlier role outside the protocol, so no labels are emitted
        return score_records(g, d, ds.samples, None, [f"row-{i:06d}" for i in range(len(ds))])
    ds = data_mod.load_mnist_idx(path)
    return score_records(g, d, ds.samples, None, [f"img-{i:06d}" for i in range(len(ds))])


def cmd_score(args) -> int:
    cfg = resolve_config(args)
    run_dir = Path(args.run) if args.run else resolve_out(args, cfg)
    prepared = prepare_data(cfg.dataset, Streams(cfg.seed))
    g, d = load_run_models(cfg, prepared, run_dir)
    if args.input:
        records = _score_input(Path(args.input), run_dir, g, d, prepared)
    else:
        records = evaluate_pair(g, d, prepared, cfg.tau).records
    target = Path(args.out) if args.out else run_dir / "scores_input.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_scores_csv(records, target)
    return EXIT_OK


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    if args.seed is not None:
        return [args.seed]
    return list(cfg.sweep.seeds)


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    out = resolve_out(args, cfg, "-ablate")
    cells = run_ablation(cfg, _seeds(args, cfg))
    with open(out / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ABLATION_FIELDS)
        for c in cells:
            w.writerow(c.as_csv())
    dump_json({"config_hash": cfg.config_hash(), "seeds": _seeds(args, cfg), "outputs": ["ablation.csv"],
               "git_revision": git_revision()},
              out / "manifest.json")
    return EXIT_OK


def _parse_value(axis: str, raw):
    if axis in ("outlier_ratio", "eta"):
        return float(raw)
    if axis in ("epoch", "p", "k"):
        return int(raw)
    return str(raw)


def make_sweep_fn(cfg: ExperimentConfig, axis: str):
    """``run_fn(value, seed) -> MetricsReport`` for one sweep axis."""
    baseline_cache: dict[int, dict[int, MetricsReport]] = {}

    def run(value, seed: int) -> MetricsReport:
        c = cfg.with_updates(seed=seed)
        if axis == "outlier_ratio":
            c = c.with_updates(dataset={"outlier_ratio": value})
        elif axis == "eta":
            c = c.with_updates(phase1={"eta": value, "allow_eta_below_one": value < 1})
        elif axis == "p":
            c = c.with_updates(phase1={"p_burn_in": value})
        elif axis == "fusion_mode":
            c = c.with_updates(fusion={"mode": value})
        elif axis == "k":
            c = c.with_updates(fusion={"k": value})
        elif axis == "epoch":
            if seed not in baseline_cache:
                baseline_cache[seed] = _baseline_reports_per_epoch(c, max(int(v) for v in cfg.sweep.values or [value]))
            per_epoch = baseline_cache[seed]
            if value not in per_epoch:
                raise ValueError(f"epoch {value} was not evaluated")
            return per_epoch[value]
        res = run_proposed(c)
        if res.report is None:
            raise ValueError(res.evaluation.notice)
        return res.report

    return run


def _baseline_reports_per_epoch(cfg: ExperimentConfig, epochs: int) -> dict[int, MetricsReport]:
    streams = Streams(cfg.seed)
    prepared = prepare_data(cfg.dataset, streams)
    g, d = build_models(cfg, prepared, streams)
    trainer = AdversarialTrainer(g, d, cfg.phase1.to_config(cfg.seed), streams.get("noise"), streams.get("sampling"))
    reports = {}
    for epoch in range(1, epochs + 1):
        trainer.epoch(prepared.train.samples)
        reports[epoch] = evaluate_pair(g, d, prepared, cfg.tau).report
    return reports


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    axis = args.axis or cfg.sweep.axis
    if axis is None:
        raise ConfigError(["sweep.axis: required (config or --axis)"])
    if axis not in SWEEP_AXES:
        raise ConfigError([f"--axis: unknown axis {axis!r}; expected one of {SWEEP_AXES}"])
    raw_values = args.values.split(",") if args.values else cfg.sweep.values
    if not raw_values:
        raise ConfigError(["sweep.values: at least one value is required"])
    values = [_parse_value(axis, v) for v in raw_values]
    cfg = cfg.with_updates(sweep={"axis": axis, "values": values})
    out = resolve_out(args, cfg, f"-sweep-{axis}")
    seeds = _seeds(args, cfg)
    rows = sweep(make_sweep_fn(cfg, axis), axis, values, seeds)
    write_sweep_csv(rows, out / "sweep.csv")
    dump_json({"config_hash": cfg.config_hash(), "axis": axis, "values": values, "seeds": seeds,
               "failures": [{"axis_value": r.axis_value, "seed": r.seed, "error": r.error} for r in rows if r.error],
               "git_revision": git_revision(), "outputs": ["sweep.csv"]}, out / "manifest.json")
    return EXIT_OK


def cmd_pseudo_dump(args) -> int:
    cfg = resolve_config(args)
    run_dir = Path(args.run) if args.run else resolve_out(args, cfg)
    out = Path(args.out) if args.out else run_dir / "pseudo"
    out.mkdir(parents=True, exist_ok=True)
    streams = Streams(cfg.seed)
    prepared = prepare_data(cfg.dataset, streams)
    g_ref, _ = build_models(cfg, prepared, streams)
    g_old = load_checkpoint(run_dir / "g_old.ckpt", g_ref.architecture()).model
    g_new = load_checkpoint(run_dir / "g_new.ckpt", g_ref.architecture()).model
    p_o, p_n, groups = sample_pseudo_batch(prepared.train.samples, g_old, g_new, cfg.fusion.fusion(), args.count,
                                           streams.get("pseudo"))
    shape = prepared.image_shape
    if shape is not None:
        for i in range(len(p_o)):
            data_mod.write_pgm(out / f"po_{i:04d}.pgm", p_o[i].reshape(shape))
            data_mod.write_pgm(out / f"pn_{i:04d}.pgm", p_n[i].reshape(shape))
    else:
        for name, arr in (("po.csv", p_o), ("pn.csv", p_n)):
            with open(out / name, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["group"] + [f"f{j}" for j in range(arr.shape[1])])
                for i, row in enumerate(arr):
                    w.writerow([i] + [repr(float(v)) for v in row])
    with open(out / "groups.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["group"] + [f"index_{j}" for j in range(groups.shape[1])])
        for i, g in enumerate(groups):
            w.writerow([i] + [int(prepared.train.source_index[j]) for j in g])
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the root seed")
    common.add_argument("--out", help=f"output directory (default: config 'out', then ${OUT_ROOT_ENV})")
    common.add_argument("--mode", choices=("proposed", "baseline"), help="override the pipeline mode")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="occgan", description="two-phase adversarial one-class novelty detection")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="run the pipeline and write checkpoints, traces and reports")
    for name, helptext in (("eval", "evaluate saved checkpoints on the configured test split"),
                           ("score", "score an input file or directory with saved checkpoints")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--run", help="directory holding the checkpoints (default: the train output dir)")
        if name == "score":
            sp.add_argument("--input", help="IDX file, CSV file or directory of PGM frames")
    ab = sub.add_parser("ablate", parents=[common], help="phase-two source ablation grid")
    ab.add_argument("--seeds", help="comma-separated seeds")
    sw = sub.add_parser("sweep", parents=[common], help="metric series over one axis")
    sw.add_argument("--axis", choices=SWEEP_AXES)
    sw.add_argument("--values", help="comma-separated axis values")
    sw.add_argument("--seeds", help="comma-separated seeds")
    ps = sub.add_parser("pseudo", help="pseudo-anomaly utilities")
    ps_sub = ps.add_subparsers(dest="pseudo_command", required=True)
    dump = ps_sub.add_parser("dump", parents=[common], help="write fused and regenerated pseudo anomalies")
    dump.add_argument("--run", help="directory holding g_old.ckpt and g_new.ckpt")
    dump.add_argument("--count", type=int, default=16)
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "score": cmd_score, "ablate": cmd_ablate, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    fn = cmd_pseudo_dump if args.command == "pseudo" else COMMANDS[args.command]
    try:
        return fn(args)
    except EtaNotReached as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ETA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, data_mod.DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
