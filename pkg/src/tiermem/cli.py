"""Command-line entry point: ``tiermem <command> [options]``.

Every command exits 0 on success. On failure a single JSON object
``{"error": <type>, "message": <text>}`` is written to stderr and the exit
code is 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .backends.http import Endpoint, HttpChatModel, HttpEmbedder, HttpTokenScorer
from .core import PipelineConfig, load_config
from .harness.dataset import EvalInstance, load_dataset
from .harness.run import (
    Backends,
    answer_question,
    eval_segmentation,
    feed_turns,
    mock_backends,
    render_sweep,
    run_dataset,
    sweep,
)
from .harness.synthetic import FIXTURE_PATH
from .ltm import LtmStore, build_update_queues, consolidate
from .metering import UsageMeter, report
from .pipeline import MemoryPipeline

logger = logging.getLogger("tiermem")

USAGE_FILE = "usage.json"


def http_backends(cfg: PipelineConfig) -> Backends:
    """Endpoints come from TIERMEM_<ROLE>_{BASE_URL,API_KEY,MODEL}, falling back to OPENAI_*."""
    chat = Endpoint.from_env("chat")
    judge_set = any(k.startswith("TIERMEM_JUDGE_") for k in os.environ)
    chat_model = HttpChatModel(chat)
    return Backends(
        scorer=HttpTokenScorer(Endpoint.from_env("scorer"), context_window=max(512, cfg.sensory_buffer_capacity)),
        embedder=HttpEmbedder(Endpoint.from_env("embedder")),
        summarizer=chat_model,
        updater=chat_model,
        qa=chat_model,
        judge=HttpChatModel(Endpoint.from_env("judge")) if judge_set else chat_model,
    )


def _parse_sets(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _config(args) -> PipelineConfig:
    return load_config(args.config, _parse_sets(args.set))


def _backends(args, cfg: PipelineConfig) -> Backends:
    return mock_backends(args.seed, cfg) if args.backend == "mock" else http_backends(cfg)


def _dataset(args) -> list[EvalInstance]:
    return load_dataset(args.dataset or FIXTURE_PATH)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False))


def _save_usage(directory: Path, meter: UsageMeter, instances: int = 1) -> None:
    path = directory / USAGE_FILE
    state = {"instances": instances, "phases": meter.state()}
    if path.exists():
        prev = json.loads(path.read_text(encoding="utf-8"))
        meter = UsageMeter.from_state(prev["phases"]).merge(meter)
        state = {"instances": max(prev.get("instances", 1), instances), "phases": meter.state()}
    path.write_text(json.dumps(state, indent=2, sort_keys=True), encoding="utf-8")


def cmd_ingest(args) -> int:
    cfg = _config(args)
    backends = _backends(args, cfg)
    out = _out(args)
    (out / "config.txt").write_text(cfg.to_flat(), encoding="utf-8")
    summary = []
    for inst in _dataset(args):
        if args.instance and inst.question_id not in args.instance:
            continue
        if inst.skipped:
            summary.append({"question_id": inst.question_id, "skipped": inst.skip_reason})
            continue
        store_dir = out / inst.question_id
        if (store_dir / "manifest.json").exists():
            raise FileExistsError(f"{store_dir} already holds a store")
        meter = UsageMeter()
        pipeline = MemoryPipeline(cfg, backends.scorer, backends.embedder, backends.summarizer, meter,
                                  store_dir=store_dir)
        feed_turns(inst, pipeline, backends.updater if args.consolidate else None)
        if not len(pipeline.store):
            LtmStore().save(store_dir)
        _save_usage(store_dir, meter)
        summary.append({"question_id": inst.question_id, "entries": len(pipeline.store),
                        "turns": pipeline.turns_fed, "store": str(store_dir)})
    _emit({"ingested": summary})
    return 0


def cmd_consolidate(args) -> int:
    cfg = _config(args)
    backends = _backends(args, cfg)
    store = LtmStore.load(args.store)
    meter = UsageMeter()
    queues = build_update_queues(store, cfg.queue_topk, cfg.queue_length)
    new = consolidate(store, queues, backends.updater, backends.embedder, meter, args.workers)
    new.save(args.store)
    _save_usage(Path(args.store), meter)
    _emit({"generation": new.generation, "entries": len(new), "updated_queues": sum(1 for q in queues if q.sources),
           "failures": new.update_failures})
    return 0


def cmd_qa(args) -> int:
    cfg = _config(args)
    backends = _backends(args, cfg)
    store = LtmStore.load(args.store)
    inst = EvalInstance("cli", "single-session-user", args.question, "", args.question_date or "")
    meter = UsageMeter()
    answer, ids = answer_question(inst, store, backends.qa, backends.embedder, cfg, meter)
    _save_usage(Path(args.store), meter)
    _emit({"answer": answer, "retrieved": ids})
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    instances = _dataset(args)
    result = run_dataset(instances, cfg, _backends(args, cfg), args.seed, args.workers, not args.no_consolidate)
    out = _out(args)
    (out / "run_result.json").write_text(result.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report(result.meter, "text", result.total), encoding="utf-8")
    _save_usage(out, result.meter, result.total)
    _emit({"accuracy": result.accuracy, "correct": result.correct, "total": result.total,
           "result": str(out / "run_result.json")})
    return 0


def cmd_segeval(args) -> int:
    cfg = _config(args)
    backends = _backends(args, cfg)
    instances = _dataset(args)
    modes = ["attention", "similarity", "hybrid"] if args.mode == "all" else [args.mode]
    _emit({m: asdict(eval_segmentation(instances, cfg, backends.scorer, backends.embedder, m)) for m in modes})
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    ratios = [float(x) for x in args.ratios.split(",")]
    thresholds = [int(x) for x in args.thresholds.split(",")]
    grid = [(r, th) for r in ratios for th in thresholds]
    rows = sweep(_dataset(args), grid, cfg, lambda c: _backends(args, c), args.seed, not args.no_consolidate)
    text = render_sweep(rows)
    if args.out:
        out = _out(args)
        (out / "sweep.tsv").write_text(text, encoding="utf-8")
        (out / "sweep.json").write_text(json.dumps(
            [{k: v for k, v in asdict(replace(r, result=None)).items() if k != "result"} for r in rows],
            indent=2), encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    path = Path(args.usage)
    if path.is_dir():
        path = path / USAGE_FILE
    state = json.loads(path.read_text(encoding="utf-8"))
    meter = UsageMeter.from_state(state["phases"])
    sys.stdout.write(report(meter, args.format, args.instances or state.get("instances", 1)))
    if args.format == "json":
        sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--backend", choices=("mock", "http"), default="mock")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tiermem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build one LTM store per dataset instance")
    p.add_argument("--dataset", help="LongMemEval-format JSON (default: bundled fixture)")
    p.add_argument("--instance", action="append", help="only this question_id (repeatable)")
    p.add_argument("--consolidate", action="store_true", help="run a consolidation pass at end of stream")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("consolidate", parents=[common], help="one offline update pass over a store")
    p.add_argument("--store", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_consolidate)

    p = sub.add_parser("qa", parents=[common], help="answer a question from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--question-date")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("eval", parents=[common], help="ingest, answer and judge every instance")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-consolidate", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("segeval", parents=[common], help="segmentation accuracy against session boundaries")
    p.add_argument("--dataset")
    p.add_argument("--mode", choices=("attention", "similarity", "hybrid", "all"), default="all")
    p.set_defaults(func=cmd_segeval)

    p = sub.add_parser("sweep", parents=[common], help="grid over compression ratio and STM threshold")
    p.add_argument("--dataset")
    p.add_argument("--ratios", default="0.4,0.6,0.8")
    p.add_argument("--thresholds", default="256,512,1024")
    p.add_argument("--out")
    p.add_argument("--no-consolidate", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a saved usage file")
    p.add_argument("--usage", required=True, help="usage.json or a directory holding one")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--instances", type=int, help="divide totals by this many instances")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - top-level error reporting
        payload = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        field = getattr(exc, "field", None)
        if field:
            payload["field"] = field
        sys.stderr.write(json.dumps(payload) + "\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
