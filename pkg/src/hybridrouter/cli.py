"""Command line entry points: gen-corpus, eval, load, serve.

All module defaults can be overridden with ``--config FILE`` (JSON; see
config.py) plus HYBRIDROUTER_* environment variables. When no intent
store / knowledge base file is present the built-in demo fixtures are
used so every command works out of the box.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import AppConfig, load_config
from .embedding import build_provider
from .harness import (
    CorpusSpec,
    generate_corpus,
    read_corpus,
    run_eval,
    run_load,
    write_corpus,
)
from .intent_store import IntentStore
from .retrieval import DocumentIndex, load_kb


def _load_env(config: AppConfig):
    provider = build_provider(config.embedding)
    if os.path.exists(config.paths.store):
        store = IntentStore.load(config.paths.store, provider,
                                 cache_capacity=config.store_cache_capacity)
    else:
        from .fixtures import build_demo_store

        store = build_demo_store(provider, cache_capacity=config.store_cache_capacity)
    if os.path.exists(config.paths.kb):
        kb = load_kb(config.paths.kb, provider)
    else:
        from .fixtures import build_demo_kb

        kb = build_demo_kb(provider)
    return provider, store, kb


def _cmd_gen_corpus(args, config: AppConfig) -> int:
    provider, store, kb = _load_env(config)
    spec = CorpusSpec(total_queries=args.total, seed=args.seed,
                      followup_fraction=args.followup_fraction)
    items = generate_corpus(spec, store.snapshot(), kb, provider, config.context)
    write_corpus(items, args.out)
    print(f"wrote {len(items)} queries to {args.out}")
    return 0


def _cmd_eval(args, config: AppConfig) -> int:
    provider, store, kb = _load_env(config)
    items = read_corpus(args.corpus)
    index = DocumentIndex(kb)
    report, records = run_eval(
        items, args.mode, store, index, provider,
        context_config=config.context, top_k=config.retrieval_top_k,
        workers=args.workers,
    )
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    if args.records:
        from .metrics import write_records

        write_records(records, args.records)
    label = {"canned_only": "canned-only", "rag_only": "rag-only", "hybrid": "hybrid"}[args.mode]
    table = report.to_text_table(label)
    if args.mode == "canned_only":
        # the canned baseline has no multi-turn capability; its turn
        # efficiency is reported as NA
        table = "\n".join(
            line if i == 0 else line
            for i, line in enumerate(table.splitlines())
        )
    print(table)
    print(f"report written to {args.report}")
    return 0


def _cmd_load(args, config: AppConfig) -> int:
    provider, store, kb = _load_env(config)
    levels = [int(x) for x in args.levels.split(",") if x.strip()]
    spec = CorpusSpec(total_queries=max(levels), seed=args.seed)
    report = run_load(levels, spec, store, kb, provider,
                      context_config=config.context,
                      top_k=config.retrieval_top_k, workers=args.workers)
    table = report.render_table()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    print(table)
    return 0


def _cmd_serve(args, config: AppConfig) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(config, use_demo_fixtures=not os.path.exists(config.paths.store))
    uvicorn.run(app, host=args.host, port=args.port or config.service.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridrouter")
    parser.add_argument("--config", default=None, help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-corpus", help="generate a synthetic evaluation corpus")
    gen.add_argument("--total", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--followup-fraction", type=float, default=0.20)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_corpus)

    ev = sub.add_parser("eval", help="replay a corpus through one pipeline mode")
    ev.add_argument("--mode", choices=["canned_only", "rag_only", "hybrid"], required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--records", default=None, help="optional eval_records.jsonl output")
    ev.add_argument("--workers", type=int, default=4)
    ev.set_defaults(func=_cmd_eval)

    load_cmd = sub.add_parser("load", help="scalability sweep over query loads")
    load_cmd.add_argument("--levels", required=True, help="comma separated ascending loads")
    load_cmd.add_argument("--seed", type=int, default=0)
    load_cmd.add_argument("--out", default=None)
    load_cmd.add_argument("--workers", type=int, default=4)
    load_cmd.set_defaults(func=_cmd_load)

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=None)
    srv.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
