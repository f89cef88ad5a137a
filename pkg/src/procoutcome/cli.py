"""``procoutcome`` command-line entry point.

Every command reads one INI run config (see ``configs/synthetic.ini``), prints
a one-line summary on success and writes CSV or binary artifacts to the
output directory. Failures print a single JSON error line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import OUTPUT_DIR_ENV, RunConfig
from .errors import ConfigError, ProcOutcomeError
from .eventlog import ingest_csv, write_csv
from .experiments import (
    ABLATION_COLUMNS,
    REPORT_HEADER,
    SWEEPABLE,
    ablate,
    earliness,
    generate_synthetic_log,
    render_table,
    report_table,
    robustness_sweep,
    write_table,
)
from .features import save_encoders
from .models import KINDS, Network, random_instance
from .nncore import grad_check
from .pipeline import STATS_COLUMNS, Prepared, prepare
from .prefixes import window_log
from .training import (
    TrialRecord,
    best_trial,
    evaluate_network,
    random_search,
    read_ledger,
    shuffle_split,
    train,
)

log = logging.getLogger("procoutcome")

EXIT_CONFIG = 2
EXIT_FAILURE = 1
GRADCHECK_TOLERANCE = 1e-5


class CommandFailed(ProcOutcomeError):
    pass


def _raw(cfg: RunConfig):
    cfg.require("input", "schema", "label", "output")
    try:
        return ingest_csv(cfg.input_path, cfg.schema)
    except ProcOutcomeError as exc:
        exc.file = str(cfg.input_path)
        raise


def _prepared(cfg: RunConfig) -> Prepared:
    return prepare(_raw(cfg), cfg.rule, cfg.test_fraction)


def _out(cfg: RunConfig, name: str) -> Path:
    return cfg.output_dir / name


def _winner_config(cfg: RunConfig, kind: str):
    """Explicit ``[train.<kind>]`` settings, else the best trial of the tune ledger."""
    if kind in cfg.train_configs:
        return cfg.train_configs[kind]
    ledger = _out(cfg, f"tune_{kind}.csv")
    records = list(read_ledger(ledger).values())
    if not records:
        raise ConfigError([f"[train.{kind}]: section required (no tune ledger at {ledger})"])
    c = best_trial(records).config
    return c.replace(max_epochs=cfg.max_epochs, patience=cfg.patience, base_width=cfg.base_width)


# -- commands ---------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> str:
    cfg.require("synth", "synth_output", "output")
    raw = generate_synthetic_log(cfg.synth)
    cfg.input_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(raw, cfg.input_path)
    write_table(_out(cfg, "synth_truth.csv"), ("case_id", "target"), [[c.case_id, c.target] for c in raw.cases])
    pos = sum(c.target for c in raw.cases) / len(raw)
    return f"synth: {len(raw)} cases, {raw.n_events} events, positive rate {pos:.4f} -> {cfg.input_path}"


def cmd_prepare(cfg: RunConfig, args) -> str:
    prep = _prepared(cfg)
    write_table(_out(cfg, "stats.csv"), STATS_COLUMNS, [prep.stats.row()])
    save_encoders(_out(cfg, "encoders.jsonl"), prep.vocabularies, prep.standardizers)
    write_table(_out(cfg, "split.csv"), ("case_id", "side"),
                [[c.case_id, "pool"] for c in prep.pool.cases] + [[c.case_id, "test"] for c in prep.test.cases])
    window_log(prep.pool, cfg.prepare_seq_len).save(_out(cfg, "pool.pfx"))
    window_log(prep.test, cfg.prepare_seq_len).save(_out(cfg, "test.pfx"))
    s = prep.stats
    return (f"prepare: {s.n_cases} cases, {s.n_events} events, median events {s.median_events:g}, "
            f"pos cases {s.pos_cases:.2f} -> pool {len(prep.pool)} / test {len(prep.test)} cases")


def cmd_tune(cfg: RunConfig, args) -> str:
    prep = _prepared(cfg)
    grid = cfg.search_grid(prep.median_case_length)
    winners: dict[str, TrialRecord] = {}
    timing, n_trials = {}, {}
    for kind in cfg.kinds:
        records = random_search(kind, prep.pool, grid, cfg.n_trials, seed=cfg.seed, test=prep.test,
                                ledger=_out(cfg, f"tune_{kind}.csv"), jobs=args.jobs,
                                max_epochs=cfg.max_epochs, base_width=cfg.base_width, patience=cfg.patience)
        winners[kind] = best_trial(records)
        n_trials[kind] = len(records)
        timing[kind] = winners[kind].wall_seconds
        rows = []
        for hp in SWEEPABLE:
            if kind != "cnn" and hp == "kernel_size":
                continue
            rows += [[hp, v, m, n] for v, m, n in robustness_sweep(records, hp)]
        write_table(_out(cfg, f"robustness_{kind}.csv"), ("hyperparameter", "value", "mean_auc_roc", "count"), rows)
    rows = report_table(winners, timing)
    write_table(_out(cfg, "report.csv"), REPORT_HEADER, rows)
    _out(cfg, "report.txt").write_text(render_table(REPORT_HEADER, rows) + "\n", encoding="utf-8")
    best = max(winners.values(), key=lambda t: t.best_val_auc)
    counts = ", ".join(f"{k}={n}" for k, n in n_trials.items())
    return f"tune: trials {counts}; best {best.config.kind} val AUC_ROC {best.best_val_auc:.4f}"


TRAIN_SUMMARY = ("kind", "batch_size", "seq_len", "size_multiplier", "kernel_size", "seed",
                 "best_epoch", "best_val_auc", "n_epochs", "wall_seconds")


def cmd_train(cfg: RunConfig, args) -> str:
    prep = _prepared(cfg)
    parts = []
    for kind in cfg.kinds:
        c = _winner_config(cfg, kind)
        tr, va = shuffle_split(prep.pool, 0.8, seed=c.seed)
        run = train(c, window_log(tr, c.seq_len), window_log(va, c.seq_len))
        run.network.save(_out(cfg, f"model_{kind}.pcnet"))
        with _out(cfg, f"history_{kind}.csv").open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(run.history_rows())
        write_table(_out(cfg, f"train_{kind}.csv"), TRAIN_SUMMARY,
                    [[kind, c.batch_size, c.seq_len, c.size_multiplier, c.kernel_size, c.seed,
                      run.best_epoch, run.best_val_auc, run.n_epochs, run.wall_seconds]])
        parts.append(f"{kind} best epoch {run.best_epoch} val AUC_ROC {run.best_val_auc:.4f}")
    return "train: " + "; ".join(parts)


def _models(cfg: RunConfig) -> dict[str, Network]:
    found = {k: _out(cfg, f"model_{k}.pcnet") for k in cfg.kinds}
    missing = [str(p) for p in found.values() if not p.exists()]
    if missing:
        raise ConfigError([f"model file {m} not found; run `train` first" for m in missing])
    return {k: Network.load(p) for k, p in found.items()}


def _train_seconds(cfg: RunConfig, kind: str) -> float | None:
    p = _out(cfg, f"train_{kind}.csv")
    if not p.exists():
        return None
    with p.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return float(rows[0]["wall_seconds"]) if rows else None


def cmd_evaluate(cfg: RunConfig, args) -> str:
    prep = _prepared(cfg)
    winners, timing = {}, {}
    for kind, net in _models(cfg).items():
        rec = TrialRecord(0, net.config)
        rec.test = evaluate_network(net, window_log(prep.test, net.config.seq_len))
        winners[kind] = rec
        secs = _train_seconds(cfg, kind)
        if secs:
            timing[kind] = secs
    rows = report_table(winners, timing if len(timing) == len(winners) else {})
    write_table(_out(cfg, "evaluate.csv"), REPORT_HEADER, rows)
    _out(cfg, "evaluate.txt").write_text(render_table(REPORT_HEADER, rows) + "\n", encoding="utf-8")
    return "evaluate: " + "; ".join(f"{r[0]} AUC_ROC {r[1]:.4f}" if r[1] is not None else f"{r[0]} AUC_ROC n/a"
                                    for r in rows)


def cmd_earliness(cfg: RunConfig, args) -> str:
    prep = _prepared(cfg)
    agg = []
    for kind, net in _models(cfg).items():
        curve = earliness(net, window_log(prep.test, net.config.seq_len), cfg.max_prefix)
        curve.write_csv(_out(cfg, f"earliness_{kind}.csv"))
        agg.append([kind, curve.aggregate_auc, sum(curve.counts)])
    write_table(_out(cfg, "earliness_aggregate.csv"), ("model", "auc_roc", "n"), agg)
    return "earliness: " + "; ".join(f"{k} over {n} prefixes AUC_ROC {a:.4f}" if a is not None else f"{k} n/a"
                                     for k, a, n in agg)


def cmd_ablate(cfg: RunConfig, args) -> str:
    raw = _raw(cfg)
    parts = []
    for kind in cfg.kinds:
        c = _winner_config(cfg, kind)
        rows = ablate(c, raw, cfg.rule, cfg.variants, cfg.n_seeds, seed=cfg.seed, test_fraction=cfg.test_fraction)
        table = [r.row() for r in rows]
        write_table(_out(cfg, f"ablation_{kind}.csv"), ABLATION_COLUMNS, table)
        _out(cfg, f"ablation_{kind}.txt").write_text(render_table(ABLATION_COLUMNS, table) + "\n", encoding="utf-8")
        parts.append(f"{kind} " + ", ".join(f"{r.variant}={r.mean:.3f}" if r.mean is not None else f"{r.variant}=n/a"
                                            for r in rows))
    return "ablate: " + "; ".join(parts)


def cmd_gradcheck(cfg: RunConfig | None, args) -> str:
    n = cfg.gradcheck_instances if cfg else 3
    rows = []
    for kind in KINDS:
        worst = max(grad_check(*random_instance(kind, seed=i)) for i in range(n))
        rows.append([kind, worst, n])
    if cfg is not None:
        cfg.require("output")
        write_table(_out(cfg, "gradcheck.csv"), ("model", "max_relative_error", "n_instances"), rows)
    summary = "gradcheck: " + "; ".join(f"{k} {e:.2e}" for k, e, _ in rows)
    bad = [k for k, e, _ in rows if not e < GRADCHECK_TOLERANCE]
    if bad:
        raise CommandFailed(f"{summary}; above {GRADCHECK_TOLERANCE:g} for {bad}")
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "earliness": cmd_earliness,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--jobs", type=int, default=1, help="concurrent search trials (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="procoutcome", description="Outcome prediction for business processes.",
                                     epilog=f"{OUTPUT_DIR_ENV} overrides [paths] output_dir.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("config", nargs="?" if name == "gradcheck" else None, help="run config (INI)")
    return parser


def _error_line(kind: str, message: str, **extra) -> str:
    return json.dumps({"error": kind, "message": message, **extra}, ensure_ascii=False)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError(["--jobs: must be >= 1"])
        cfg = RunConfig.from_file(args.config, args.set) if args.config else None
        print(COMMANDS[args.command](cfg, args))
        return 0
    except ConfigError as exc:
        print(_error_line("ConfigError", str(exc), problems=exc.problems), file=sys.stderr)
        return EXIT_CONFIG
    except ProcOutcomeError as exc:
        extra = {"file": exc.file} if getattr(exc, "file", None) else {}
        print(_error_line(type(exc).__name__, str(exc), **extra), file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError) as exc:
        print(_error_line(type(exc).__name__, str(exc)), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
