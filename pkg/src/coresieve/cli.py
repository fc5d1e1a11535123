"""Command-line runner: ``generate``, ``train``, ``oracle`` and ``compare``.

Every run is driven by a YAML config (see ``configs/default.yaml``); the
fully resolved config is echoed into ``run_report.json`` so a report can be
passed back as ``--config`` to replay the run. Errors are written to stderr
as one JSON object and mapped to distinct exit codes (see ``EXIT_CODES``).
Set ``CORESIEVE_LOG`` to DEBUG/INFO/WARNING to control progress logging.
"""
import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np
import yaml

from .config import RunConfig, apply_overrides, load_config
from .consistency import run_cores_star
from .datagen import DiscreteWorld, save_dataset
from .errors import ConfigError, DecouplingMismatch, InvalidWorld, TrainingDiverged
from .metrics import write_loss_histogram, write_rows
from .model import save_checkpoint
from .sieve import METRIC_COLUMNS, build_datasets, run_cores
from .theory import oracle_report

log = logging.getLogger("coresieve")

EXIT_CODES = {
    "ok": 0,
    "usage": 1,
    "invalid_config": 2,
    "training_diverged": 3,
    "io_error": 4,
    "decoupling_mismatch": 5,
    "parse_error": 6,
}

SIEVE_REPORT_COLUMNS = ["epoch", "num_selected", "num_clean", "num_selected_clean", "precision", "recall",
                        "f_score"]


class CliError(Exception):
    def __init__(self, kind, message, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


def _configure_logging():
    level = os.environ.get("CORESIEVE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def resolve_config(path=None, overrides=(), out=None):
    cfg = load_config(path) if path else RunConfig()
    cfg = apply_overrides(cfg, list(overrides))
    if out:
        cfg = _with_output(cfg, out)
    return cfg.resolved()


def _with_output(cfg, out):
    d = cfg.to_dict()
    d["output_dir"] = str(out)
    return RunConfig.from_dict(d)


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


# -- subcommands ----------------------------------------------------------------

def cmd_generate(cfg):
    """Write ``train.csv``/``train.json`` (and ``test.*`` when requested) to the output dir."""
    if cfg.data.source != "blobs":
        raise ConfigError("data.source", "generate needs 'blobs'")
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    train, test, spec = build_datasets(cfg)
    extra = {"seeds": {"data": cfg.seeds.data, "noise": cfg.seeds.noise}}
    paths = [os.path.join(out, "train.csv"), os.path.join(out, "train.json")]
    save_dataset(train, paths[0], paths[1], spec, extra)
    if test is not None:
        paths += [os.path.join(out, "test.csv"), os.path.join(out, "test.json")]
        save_dataset(test, paths[2], paths[3], None, extra)
    log.info("wrote %s", ", ".join(paths))
    return paths


def train_arm(cfg, train=None, test=None):
    """Run CORES2 (or CORES2-star when consistency is enabled) in memory.

    Returns ``(result, rows, columns)`` where ``rows`` are the per-epoch metric rows.
    """
    if train is None:
        train, test, _ = build_datasets(cfg)
    if cfg.consistency.enabled:
        res, rows = run_cores_star(train, cfg, test)
        columns = METRIC_COLUMNS + ["ce_loss", "kl_loss"]
    else:
        res = run_cores(train, cfg, test)
        rows, columns = res.rows, METRIC_COLUMNS
    return res, rows, columns


def cmd_train(cfg):
    """Train from a config and write every run artifact; returns the run report dict."""
    start = time.perf_counter()
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    train, test, spec = build_datasets(cfg)
    res, rows, columns = train_arm(cfg, train, test)
    write_rows(rows, os.path.join(out, "metrics.csv"), columns)
    report_rows = [dict(r.as_row(), epoch=e) for e, r in enumerate(res.state.history)]
    write_rows(report_rows, os.path.join(out, "sieve_report.csv"), SIEVE_REPORT_COLUMNS)
    write_rows([{"index": n, "v": int(v)} for n, v in enumerate(res.state.v)], os.path.join(out, "split.csv"))
    for epoch, hist in sorted(res.histograms.items()):
        write_loss_histogram(hist, os.path.join(out, f"loss_hist_epoch{epoch}.csv"))
    save_checkpoint(res.model, os.path.join(out, "model.ckpt"), epoch=rows[-1]["epoch"])
    last = rows[-1]
    final_rep = res.state.history[-1]
    report = {
        "config_echo": cfg.to_dict(),
        "per_epoch": [{c: _json_value(r.get(c)) for c in columns} for r in rows],
        "final": {
            "test_accuracy": _json_value(last["test_acc"]),
            "f_score": final_rep.f_score,
            "precision": final_rep.precision,
            "recall": final_rep.recall,
            "num_selected": final_rep.num_selected,
            "corruption_rate": train.corruption_rate(),
        },
        "noise": spec.to_dict() if spec is not None else None,
        "wall_time": time.perf_counter() - start,
    }
    _write_json(report, os.path.join(out, "run_report.json"))
    log.info("train done: acc=%s f=%.4f (%.1fs)", last["test_acc"], final_rep.f_score, report["wall_time"])
    return report


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def load_world(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return DiscreteWorld.from_dict(raw)
    except OSError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("parse_error", f"{path}: {exc}") from None


def cmd_oracle(world_path, beta=1.0, table_path=None, out=None):
    world = load_world(world_path)
    f = None
    if table_path:
        with open(table_path, encoding="utf-8") as fh:
            f = np.asarray(json.load(fh), dtype=float)
    try:
        report = oracle_report(world, f, beta)
    except InvalidWorld as exc:
        raise CliError("parse_error", str(exc)) from None
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(report, os.path.join(out, "oracle.json"))
    return report


def cmd_compare(cfg_a, cfg_b, seeds):
    """Run two configs on shared seeds; deltas are B minus A."""
    per_seed = []
    for s in seeds:
        arms = []
        for cfg in (cfg_a, cfg_b):
            c = apply_overrides(cfg, [f"seeds.data={s}", f"seeds.noise={s}", f"seeds.train={s}"])
            res, rows, _ = train_arm(c)
            arms.append((res.state.history[-1].f_score, rows[-1]["test_acc"]))
        (fa, aa), (fb, ab) = arms
        row = {"seed": s, "f_score_a": fa, "f_score_b": fb, "f_score_delta": fb - fa,
               "test_acc_a": aa, "test_acc_b": ab,
               "test_acc_delta": None if aa is None or ab is None else ab - aa}
        per_seed.append(row)
        log.info("seed %s: dF=%.4f dacc=%s", s, row["f_score_delta"], row["test_acc_delta"])
    accs = [r["test_acc_delta"] for r in per_seed if r["test_acc_delta"] is not None]
    return {
        "seeds": list(seeds),
        "per_seed": per_seed,
        "mean": {
            "f_score_a": float(np.mean([r["f_score_a"] for r in per_seed])),
            "f_score_b": float(np.mean([r["f_score_b"] for r in per_seed])),
            "f_score_delta": float(np.mean([r["f_score_delta"] for r in per_seed])),
            "test_acc_delta": float(np.mean(accs)) if accs else None,
        },
        "config_a": cfg_a.to_dict(),
        "config_b": cfg_b.to_dict(),
    }


# -- argument parsing -----------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="coresieve", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_help="YAML run config (defaults if omitted)"):
        sp.add_argument("--config", help=config_help)
        sp.add_argument("--seed-override", action="append", default=[], metavar="K=V",
                        help="override a config key; bare names refer to seeds.<name>")
        sp.add_argument("--out", help="output directory (overrides output_dir)")

    common(sub.add_parser("generate", help="write the synthetic train/test datasets"))
    common(sub.add_parser("train", help="run the sieve (and consistency phase) and write artifacts"))
    o = sub.add_parser("oracle", help="exact decoupling / beta-interval report for a world file")
    o.add_argument("--world", required=True, help="DiscreteWorld JSON")
    o.add_argument("--beta", type=float, default=1.0)
    o.add_argument("--table", help="JSON M x K prediction table (default: Bayes-optimal)")
    o.add_argument("--out")
    c = sub.add_parser("compare", help="paired runs of two configs over a seed list")
    c.add_argument("--config", action="append", required=True, help="pass twice: arm A then arm B")
    c.add_argument("--seed-override", action="append", default=[], metavar="K=V",
                   help="applied to both arms")
    c.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    c.add_argument("--out")
    return p


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; keep --help at 0, bad flags at "usage"
        if exc.code in (0, None):
            raise
        raise CliError("usage", "invalid command line") from None
    if args.command == "generate":
        cfg = resolve_config(args.config, args.seed_override, args.out)
        return {"written": cmd_generate(cfg)}
    if args.command == "train":
        cfg = resolve_config(args.config, args.seed_override, args.out)
        report = cmd_train(cfg)
        return {"output_dir": cfg.output_dir, "final": report["final"], "wall_time": report["wall_time"]}
    if args.command == "oracle":
        return cmd_oracle(args.world, args.beta, args.table, args.out)
    if len(args.config) != 2:
        raise ConfigError("--config", "compare needs exactly two configs")
    cfg_a, cfg_b = (resolve_config(p, args.seed_override) for p in args.config)
    result = cmd_compare(cfg_a, cfg_b, args.seeds)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(result, os.path.join(args.out, "compare.json"))
    return result


def _fail(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return EXIT_CODES[kind]


def main(argv=None):
    _configure_logging()
    try:
        result = run(argv)
    except ConfigError as exc:
        return _fail("invalid_config", exc.message, field=exc.field)
    except CliError as exc:
        return _fail(exc.kind, str(exc), **exc.extra)
    except TrainingDiverged as exc:
        return _fail("training_diverged", str(exc))
    except DecouplingMismatch as exc:
        return _fail("decoupling_mismatch", str(exc))
    except InvalidWorld as exc:
        return _fail("parse_error", str(exc))
    except OSError as exc:
        return _fail("io_error", str(exc), path=getattr(exc, "filename", None))
    except (ValueError, yaml.YAMLError) as exc:
        return _fail("invalid_config", str(exc))
    print(json.dumps(result, indent=1, sort_keys=True, default=_json_value))
    return 0


if __name__ == "__main__":
    sys.exit(main())
