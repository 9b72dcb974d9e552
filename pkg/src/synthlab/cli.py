"""Command-line entry point: ``synthlab <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print one
line ``error[<category>]: <message>`` to stderr.

Every subcommand writes ``<out>.manifest.json`` next to its output with the
resolved arguments, seed, library versions and output checksums.

Options can also come from ``--config FILE`` (``key = value`` per line, keys
named like the long flags). Explicit flags win over the file, the file wins
over built-in defaults.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

import synthlab
from synthlab import baselines, datasets, evaluation, pfn, prior, reporting, scalers
from synthlab.errors import ConfigError, SynthlabError

logger = logging.getLogger("synthlab")


class UsageError(Exception):
    """Bad arguments, missing inputs or an invalid combination (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# argument types -----------------------------------------------------------------

def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def str_list(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# parser ----------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="defaults to $SYNTHLAB_SEED, then 0")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="key = value option file")
    p.add_argument("--log-level", default="WARNING")


def _eval_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--registry", default=None)
    p.add_argument("--metrics", type=str_list, default="mse,mae")
    p.add_argument("--jobs", type=int, default=None, help="parallel jobs (default: all cores)")
    p.add_argument("--raw", action="store_true", help="score in raw units instead of train-standardized")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthlab", description="Synthetic-prior forecasting benchmark toolkit")
    parser.add_argument("--version", action="version", version=f"synthlab {synthlab.__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="draw prior samples or write the stand-in corpus")
    _common(g)
    g.add_argument("--kind", choices=["samples", "corpus"], default="samples")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--format", choices=["csv", "bin"], default="csv")
    g.add_argument("--max-history", type=int, default=500)
    g.add_argument("--period-min", type=int, default=8)
    g.add_argument("--period-max", type=int, default=199)
    g.add_argument("--length", type=int, default=6000, help="corpus length")
    g.add_argument("--names", type=str_list, default="ETT-synth", help="corpus dataset names")

    t = sub.add_parser("train-pfn", help="train the prior-fitted network on synthetic draws")
    _common(t)
    t.add_argument("--preset", choices=["desk", "full"], default="desk", help="full: the default model and 500k-sample schedule")
    t.add_argument("--layers", type=int, default=None)
    t.add_argument("--heads", type=int, default=None)
    t.add_argument("--dmodel", type=int, default=None)
    t.add_argument("--dffn", type=int, default=None)
    t.add_argument("--max-history", type=int, default=None,
                   help="context length; prior periods are capped at half of it unless --period-max is given")
    t.add_argument("--period-min", type=int, default=None)
    t.add_argument("--period-max", type=int, default=None)
    t.add_argument("--samples", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--validation", type=int, default=None)

    b = sub.add_parser("train-baseline", help="fit a supervised baseline on a dataset's training part")
    _common(b)
    b.add_argument("--kind", choices=["snaive", "last", "linear", "dlinear"], default=None)
    b.add_argument("--registry", default=None)
    b.add_argument("--dataset", default=None)
    b.add_argument("--lookback", type=int, default=336)
    b.add_argument("--horizon", type=int, default=96)
    b.add_argument("--budget", type=int, default=None, help="fit on the last B training points only")

    e = sub.add_parser("eval", help="long-term sliding-window evaluation")
    _common(e)
    _eval_common(e)
    e.add_argument("--datasets", type=str_list, default=None)
    e.add_argument("--models", type=str_list, default="last,snaive,dlinear")
    e.add_argument("--horizons", type=int_list, default=None)
    e.add_argument("--lookback", type=int, default=336)
    e.add_argument("--pfn", default=None, help="PFN checkpoint used for the 'pfn' model")

    f = sub.add_parser("fewshot", help="few-shot sweep over a budget plan")
    _common(f)
    _eval_common(f)
    f.add_argument("--datasets", type=str_list, default=None)
    f.add_argument("--models", type=str_list, default="pfn,dlinear")
    f.add_argument("--horizon", type=int, default=96)
    f.add_argument("--lookback", type=int, default=336)
    f.add_argument("--budgets", type=int_list, default=None, help="explicit budgets instead of the plan")
    f.add_argument("--pfn", default=None)

    x = sub.add_parser("transfer", help="zero-shot transfer from a source dataset to targets")
    _common(x)
    _eval_common(x)
    x.set_defaults(metrics="mse,mae,smape")
    x.add_argument("--sources", type=str_list, default=None, help="default: every dataset")
    x.add_argument("--targets", type=str_list, default=None, help="default: every other dataset")
    x.add_argument("--kind", choices=["linear", "dlinear"], default="dlinear")
    x.add_argument("--lookback", type=int, default=104)
    x.add_argument("--horizon", type=int, default=6)
    x.add_argument("--scaler", choices=[*scalers.KINDS, "none"], default="standard")
    x.add_argument("--per", choices=["series", "dataset"], default="series")

    r = sub.add_parser("report", help="summary statistics from evaluation records")
    _common(r)
    r.add_argument("--in", dest="inputs", type=str_list, default=None)
    r.add_argument("--stat", choices=[*reporting.STATS, "matrix"], default="winrate")
    r.add_argument("--metric", choices=list(evaluation.METRICS), default="mae")
    r.add_argument("--format", choices=["md", "csv"], default="md")
    r.add_argument("--horizon", type=int, default=None)
    r.add_argument("--budget", type=int, default=None)
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing subcommand")
    if args.config:
        cfg = read_config_file(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    for key, value in vars(args).items():  # string defaults from set_defaults bypass type=
        if key in ("metrics", "names", "datasets", "models", "inputs", "sources", "targets") and isinstance(value, str):
            setattr(args, key, str_list(value))
        if key in ("horizons", "budgets") and isinstance(value, str):
            setattr(args, key, int_list(value))
        if key == "raw" and isinstance(value, str):
            args.raw = value.lower() in ("1", "true", "yes", "on")
    if args.command != "report" and not args.out:
        raise UsageError("missing --out")
    if args.command == "train-baseline" and not args.kind:
        raise UsageError("missing --kind")
    if args.seed is None:
        env = os.environ.get("SYNTHLAB_SEED")
        try:
            args.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise UsageError(f"SYNTHLAB_SEED must be an integer, got {env!r}")
    return args


# manifests ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(args: argparse.Namespace, outputs: Sequence[Path], extra: dict | None = None) -> Path:
    primary = Path(outputs[0])
    manifest = primary.with_name(primary.name + ".manifest.json")
    doc = {
        "command": args.command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("log_level",)},
        "seed": args.seed,
        "versions": {
            "synthlab": synthlab.__version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).is_file()},
    }
    if extra:
        doc.update(extra)
    manifest.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


# subcommands ---------------------------------------------------------------------------

def _registry(args) -> dict[str, datasets.DatasetMeta]:
    if not args.registry:
        raise UsageError("missing registry")
    if not Path(args.registry).is_file():
        raise UsageError(f"missing registry file {args.registry}")
    return datasets.load_registry(args.registry)


def _select(registry: dict, names) -> list[datasets.DatasetMeta]:
    if not names:
        return [registry[k] for k in sorted(registry)]
    missing = [n for n in names if n not in registry]
    if missing:
        raise UsageError(f"datasets not in registry: {', '.join(missing)}")
    return [registry[n] for n in names]


def _load_pfn(path) -> pfn.PfnForecaster:
    if not path:
        raise UsageError("model 'pfn' needs --pfn CHECKPOINT")
    if not Path(path).is_file():
        raise UsageError(f"missing checkpoint {path}")
    model = pfn.load(path)
    return pfn.PfnForecaster(model)


def _model_factory(name: str, args, meta: datasets.DatasetMeta, pfn_model=None):
    """A forecaster or a ``horizon -> forecaster`` factory for the evaluation protocols."""
    if name == "pfn":
        return pfn_model
    if name in ("last", "snaive"):
        return baselines.make_forecaster(name, args.lookback, 1, meta.period)
    if name in ("linear", "dlinear"):
        return lambda h: baselines.LinearForecaster(args.lookback, h, name)
    if Path(name).is_file():  # written by train-baseline
        if name.endswith(".json"):
            spec = json.loads(Path(name).read_text())
            return baselines.make_forecaster(spec["kind"], args.lookback, 1, spec["period"])
        return baselines.load_linear(name)
    raise UsageError(f"unknown model {name!r}")


def cmd_generate(args) -> list[Path]:
    out = Path(args.out)
    if args.kind == "corpus":
        registry = datasets.write_corpus(out, args.seed, args.length, args.names)
        outputs = [registry] + [out / f"{n}.csv" for n in args.names]
        write_manifest(args, outputs)
        return outputs
    if args.n < 1:
        raise UsageError("--n must be positive")
    config = prior.PriorConfig(max_history=args.max_history, period_range=(args.period_min, args.period_max))
    samples = [prior.draw_sample(config, args.seed, i)[1] for i in range(args.n)]
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        with out.open("w", newline="") as fh:
            prior.write_samples_csv(samples, fh)
    else:
        with out.open("wb") as fh:
            prior.write_samples_binary(samples, fh)
    write_manifest(args, [out], {"prior_config": asdict(config)})
    return [out]


def cmd_train_pfn(args) -> list[Path]:
    if args.preset == "desk":
        prior_cfg, model_cfg, train_cfg = pfn.desk_configs(args.seed)
    else:
        prior_cfg, model_cfg, train_cfg = prior.PriorConfig(), pfn.PfnConfig(), pfn.TrainConfig(seed=args.seed)
    overrides = {
        "n_layers": args.layers, "n_heads": args.heads, "d_model": args.dmodel,
        "d_ffn": args.dffn, "max_history": args.max_history,
    }
    model_cfg = replace(model_cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.max_history is not None or args.period_min is not None or args.period_max is not None:
        history = args.max_history or prior_cfg.max_history
        p_lo = args.period_min or prior_cfg.period_range[0]
        p_hi = args.period_max or min(prior_cfg.period_range[1], history // 2)
        prior_cfg = replace(prior_cfg, max_history=history, period_range=(p_lo, p_hi))
    train_over = {
        "n_samples": args.samples, "epochs": args.epochs, "batch_size": args.batch,
        "base_lr": args.lr, "n_validation": args.validation,
    }
    train_cfg = replace(train_cfg, **{k: v for k, v in train_over.items() if v is not None})
    model = pfn.PfnModel.init(model_cfg, args.seed)
    result = pfn.train(model, prior_cfg, train_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": args.seed,
        "steps": result.steps,
        "initial_val_loss": result.initial_val_loss,
        "final_val_loss": result.final_val_loss,
        "epoch_losses": result.epoch_losses,
        "train_config": asdict(train_cfg),
        "prior_config": asdict(prior_cfg),
    }
    pfn.save(model, out, meta)
    write_manifest(args, [out], {"training": meta, "model_config": asdict(model_cfg)})
    print(f"steps {result.steps}  val loss {result.initial_val_loss:.5f} -> {result.final_val_loss:.5f}")
    return [out]


def cmd_train_baseline(args) -> list[Path]:
    registry = _registry(args)
    names = [args.dataset] if args.dataset else None
    metas = _select(registry, names)
    if len(metas) != 1:
        raise UsageError("--dataset is required when the registry holds several datasets")
    meta = metas[0]
    store = datasets.load_dataset(meta)
    if args.budget is not None:
        store = datasets.fewshot_slice(store, args.budget)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind in ("last", "snaive"):
        out.write_text(json.dumps({"kind": args.kind, "period": meta.period}, sort_keys=True) + "\n")
    else:
        fitted = evaluation.train_on_source(args.kind, store, args.lookback, args.horizon)
        baselines.save_linear(fitted, out)
    write_manifest(args, [out], {"dataset": meta.to_record()})
    return [out]


def _n_jobs(args) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def _write_records(args, records, extra=None) -> list[Path]:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaluation.write_records_csv(records, out)
    log = out.with_suffix(".jsonl")
    evaluation.write_records_jsonl(records, log)
    write_manifest(args, [out, log], extra)
    return [out, log]


def cmd_eval(args) -> list[Path]:
    registry = _registry(args)
    pfn_model = _load_pfn(args.pfn) if "pfn" in args.models else None
    jobs = []
    for meta in _select(registry, args.datasets):
        store = datasets.load_dataset(meta)
        horizons = tuple(args.horizons or meta.horizons)
        window = max(args.lookback, pfn_model.look_back if pfn_model else 1)
        for name in args.models:
            model = _model_factory(name, args, meta, pfn_model)
            source = "synthetic" if name == "pfn" else "self"
            jobs.append(
                lambda model=model, store=store, horizons=horizons, window=window, source=source:
                evaluation.evaluate_long_term(
                    model, store, horizons, args.metrics, source=source,
                    standardized=not args.raw, window_length=window,
                )
            )
    records = evaluation.run_jobs(jobs, _n_jobs(args))
    return _write_records(args, records)


def cmd_fewshot(args) -> list[Path]:
    registry = _registry(args)
    pfn_model = _load_pfn(args.pfn) if "pfn" in args.models else None
    jobs = []
    for meta in _select(registry, args.datasets):
        store = datasets.load_dataset(meta)
        plan = (
            datasets.BudgetPlan(meta.period, tuple(args.budgets))
            if args.budgets else datasets.budgets_for(meta.period, meta.budget_kind)
        )
        window = max(args.lookback, pfn_model.look_back if pfn_model else 1)
        for name in args.models:
            model = _model_factory(name, args, meta, pfn_model)
            source = "synthetic" if name == "pfn" else "self"
            jobs.append(
                lambda model=model, store=store, plan=plan, window=window, source=source: evaluation.evaluate_fewshot(
                    model, store, plan, args.horizon, args.metrics, source=source,
                    standardized=not args.raw, window_length=window,
                )
            )
    records = evaluation.run_jobs(jobs, _n_jobs(args))
    return _write_records(args, records)


def cmd_transfer(args) -> list[Path]:
    registry = _registry(args)
    sources = _select(registry, args.sources)
    all_targets = _select(registry, args.targets)
    stores = {m.name: datasets.load_dataset(m) for m in {*sources, *all_targets}}
    kind = None if args.scaler == "none" else args.scaler
    jobs = []
    for src in sources:
        source_store = stores[src.name]
        model = evaluation.train_on_source(args.kind, source_store, args.lookback, args.horizon)
        src_scaler = evaluation.fit_source_scaler(kind, source_store) if kind else None
        for tgt in all_targets:
            if tgt.name == src.name and args.targets is None:
                continue
            job = evaluation.TransferJob(
                model=model, source=src.name, target=stores[tgt.name], scaler_kind=kind,
                look_back=args.lookback, horizon=args.horizon, source_scaler=src_scaler,
                per=args.per, metrics=tuple(args.metrics), standardized=not args.raw,
            )
            jobs.append(lambda job=job: evaluation.evaluate_zero_shot_transfer(job))
    if not jobs:
        raise UsageError("no (source, target) pairs to evaluate")
    records = evaluation.run_jobs(jobs, _n_jobs(args))
    return _write_records(args, records)


def cmd_report(args) -> list[Path]:
    if not args.inputs:
        raise UsageError("report needs --in records.csv")
    records = []
    for path in args.inputs:
        if not Path(path).is_file():
            raise UsageError(f"missing records file {path}")
        records += evaluation.read_records_csv(path)
    matrix = reporting.ResultsMatrix.from_records(records, args.metric, args.horizon, args.budget)
    if args.stat == "matrix":
        text = reporting.render(matrix, args.format)
    else:
        text = reporting.render(reporting.summarize(matrix, args.stat), args.format)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        write_manifest(args, [out])
        return [out]
    sys.stdout.write(text)
    return []


COMMANDS = {
    "generate": cmd_generate,
    "train-pfn": cmd_train_pfn,
    "train-baseline": cmd_train_baseline,
    "eval": cmd_eval,
    "fewshot": cmd_fewshot,
    "transfer": cmd_transfer,
    "report": cmd_report,
}


def dispatch(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
        COMMANDS[args.command](args)
        return 0
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    except SynthlabError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
