"""Seeded API server for the console test suite.

Builds a small deterministic corpus, runs the pipeline once so the review
queue has pending items, then serves the review API on the given port.
"""

import argparse
from dataclasses import replace
from pathlib import Path

import uvicorn

from kbassist.api import create_app
from kbassist.config import PipelineConfig, ServeConfig
from kbassist.domain import dump_transcripts
from kbassist.pipeline import make_embedder, run_pipeline
from kbassist.store import KnowledgeStore
from kbassist.synth import generate_synthetic_corpus


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--port", type=int, required=True)
    ap.add_argument("--root", required=True, help="scratch directory for corpus, runs and store")
    args = ap.parse_args()

    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    corpus, _ = generate_synthetic_corpus(seed=21, n_transcripts=12, companies=("acme", "globex"))
    corpus_path = root / "corpus.jsonl"
    dump_transcripts(corpus.transcripts, corpus_path)

    cfg = replace(
        PipelineConfig(),
        out_dir=str(root / "runs"),
        store_dir=str(root / "kb"),
        serve=ServeConfig(
            tokens={"console": "console-token"},
            corpus_path=str(corpus_path),
        ),
    )
    store = KnowledgeStore(cfg.store_dir, make_embedder(cfg.embedding), policy=cfg.policy)
    run_pipeline(corpus, cfg, store=store)

    uvicorn.run(create_app(cfg, store=store), host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
