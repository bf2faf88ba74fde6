"""Command-line entry point for the full pipeline.

ingest -> chunk -> embed -> index build produce the searchable corpus;
index query / litsearch / eval are one-shot utilities; mcp-serve and
serve run the tool server and the HTTP API.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import EvragError

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evrag",
        description="Dual-source evidence-grounded Q&A engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract + normalize a corpus manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("chunk", help="split normalized text into chunks")
    p.add_argument("--in", dest="in_path", required=True, type=Path)
    p.add_argument("--target", type=int, default=1000)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--doc-id", default=None, help="defaults to the input file stem")

    p = sub.add_parser("embed", help="embed chunks into a vector file")
    p.add_argument("--in", dest="in_path", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--dim", type=int, default=None)

    p = sub.add_parser("index", help="build or query the vector index")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    b = index_sub.add_parser("build", help="build an index from chunks + vectors")
    b.add_argument("--chunks", required=True, type=Path)
    b.add_argument("--vectors", required=True, type=Path)
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--seed", type=int, default=None)
    q = index_sub.add_parser("query", help="query an index with free text")
    q.add_argument("--index", required=True, type=Path)
    q.add_argument("--text", required=True)
    q.add_argument("--k", type=int, default=3)

    p = sub.add_parser("litsearch", help="search the literature API")
    p.add_argument("--term", required=True)
    p.add_argument("--k", type=int, default=3)

    sub.add_parser("mcp-serve", help="serve tools over JSON-RPC on stdio")

    p = sub.add_parser("eval", help="evaluation utilities")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    d = eval_sub.add_parser("dedup", help="drop semantically duplicate questions")
    d.add_argument("--in", dest="in_path", required=True, type=Path)
    d.add_argument("--threshold", type=float, default=0.90)
    s = eval_sub.add_parser("summarize", help="Likert summary tables")
    s.add_argument("--in", dest="in_path", required=True, type=Path)
    s.add_argument("--by", choices=["criterion", "category"], default="criterion")
    k = eval_sub.add_parser("kappa", help="two-rater agreement")
    k.add_argument("--in", dest="in_path", required=True, type=Path)
    k.add_argument("--binarize", type=int, default=3)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--index", type=Path, default=None)
    p.add_argument("--sessions", type=Path, default=None)
    p.add_argument("--no-literature", action="store_true")
    p.add_argument("--ui", type=Path, default=None,
                   help="serve a built web UI from this directory")

    return parser


def _cmd_ingest(args) -> int:
    from .ingest import run_ingest
    reports = run_ingest(args.manifest, args.out)
    print(f"ingested {len(reports)} documents -> {args.out}")
    return 0


def _cmd_chunk(args) -> int:
    from .chunker import chunk_text, write_chunks
    text = args.in_path.read_text(encoding="utf-8")
    doc_id = args.doc_id or args.in_path.stem
    chunks = chunk_text(text, doc_id, target_chars=args.target)
    write_chunks(chunks, args.out)
    print(f"wrote {len(chunks)} chunks -> {args.out}")
    return 0


def _cmd_embed(args) -> int:
    from .chunker import read_chunks
    from .embedding import DIM, EmbedderConfig, embed_texts
    from .hnsw import write_vectors
    chunks = read_chunks(args.in_path)
    if not chunks:
        print("no chunks to embed", file=sys.stderr)
        return 1
    cfg = EmbedderConfig.from_env(dim=args.dim or DIM)
    vectors = embed_texts([c.text for c in chunks], cfg)
    write_vectors(args.out, [(c.chunk_id, v) for c, v in zip(chunks, vectors)], cfg.dim)
    print(f"embedded {len(vectors)} chunks ({cfg.provider}, dim={cfg.dim}) -> {args.out}")
    return 0


def _cmd_index_build(args) -> int:
    from .chunker import read_chunks
    from .hnsw import HnswIndex, HnswParams, read_vectors
    chunks = {c.chunk_id: c for c in read_chunks(args.chunks)}
    dim, pairs = read_vectors(args.vectors)
    params = HnswParams(dim=dim)
    if args.seed is not None:
        params.rng_seed = args.seed
    index = HnswIndex(params)
    for chunk_id, vec in pairs:
        chunk = chunks.get(chunk_id)
        payload = json.dumps({
            "doc_id": chunk.doc_id if chunk else "",
            "title": chunk.doc_id if chunk else chunk_id,
            "ordinal": chunk.ordinal if chunk else 0,
            "char_span": list(chunk.char_span) if chunk else [0, 0],
            "text": chunk.text if chunk else "",
        }).encode("utf-8")
        index.insert(chunk_id, vec, payload)
    index.persist(args.out)
    print(f"indexed {len(index)} items -> {args.out}")
    return 0


def _cmd_index_query(args) -> int:
    from .embedding import EmbedderConfig, make_embedder
    from .hnsw import HnswIndex
    index = HnswIndex.load(args.index)
    embed_one = make_embedder(EmbedderConfig.from_env(dim=index.dim))
    hits = index.search(embed_one(args.text), k=args.k)
    print(json.dumps([h.to_dict() for h in hits], indent=2))
    return 0


def _cmd_litsearch(args) -> int:
    from .pubmed import DEFAULT_BASE_URL, LitQuery, PubMedClient
    client = PubMedClient(
        api_key=os.environ.get("NCBI_API_KEY", ""),
        base_url=os.environ.get("NCBI_BASE_URL", "") or DEFAULT_BASE_URL,
    )
    articles = client.lookup(LitQuery(term=args.term, max_results=args.k))
    print(json.dumps([a.to_dict() for a in articles], indent=2))
    return 0


def _cmd_mcp_serve(args) -> int:
    from . import mcp
    from .pubmed import DEFAULT_BASE_URL, PubMedClient
    client = PubMedClient(
        api_key=os.environ.get("NCBI_API_KEY", ""),
        base_url=os.environ.get("NCBI_BASE_URL", "") or DEFAULT_BASE_URL,
    )
    mcp.serve(mcp.default_registry(client))
    return 0


def _cmd_eval_dedup(args) -> int:
    from .embedding import DIM, deterministic_embed
    from .evalkit import dedup_questions
    questions = [
        line.strip() for line in args.in_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    kept, removed = dedup_questions(
        questions, lambda q: deterministic_embed(q, DIM), threshold=args.threshold
    )
    print(json.dumps({
        "kept": kept,
        "removed_pairs": [
            {"kept_index": i, "removed_index": j, "similarity": round(sim, 4)}
            for i, j, sim in removed
        ],
    }, indent=2))
    print(f"# kept {len(kept)} of {len(questions)} questions", file=sys.stderr)
    return 0


def _render_rows(rows) -> str:
    header = f"{'group':<32} {'mean (SD)':>12} {'range':>7} {'n':>5}  source"
    lines = [header, "-" * len(header)]
    for row in rows:
        source = row.source or ""
        lines.append(
            f"{row.label:<32} {row.formatted():>12} {row.min}-{row.max:>3} "
            f"{row.n:>5}  {source}"
        )
    return "\n".join(lines)


def _cmd_eval_summarize(args) -> int:
    from .evalkit import category_summary, likert_summary, load_ratings_csv
    ratings = load_ratings_csv(args.in_path)
    if args.by == "criterion":
        rows = likert_summary(ratings, group_by="criterion")
    else:
        mapping = {r.question_id: r.category for r in ratings}
        rows = category_summary(ratings, mapping)
    print(_render_rows(rows))
    print(json.dumps([r.to_dict() for r in rows], indent=2))
    return 0


def _cmd_eval_kappa(args) -> int:
    from .evalkit import cohen_kappa, load_ratings_csv, paired_scores
    ratings = load_ratings_csv(args.in_path)
    a, b = paired_scores(ratings)
    kappa = cohen_kappa(a, b, binarize_at=args.binarize)
    print(json.dumps({"kappa": kappa, "pairs": len(a), "binarize_at": args.binarize}))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn
    from .service import config_from_env, create_app
    if args.index:
        os.environ["INDEX_PATH"] = str(args.index)
    if args.sessions:
        os.environ["SESSIONS_DIR"] = str(args.sessions)
    if args.no_literature:
        os.environ["LIT_DISABLED"] = "1"
    if args.ui:
        os.environ["UI_DIR"] = str(args.ui)
    bind = os.environ.get("BIND_ADDR", "127.0.0.1:8080")
    host, _, port = bind.partition(":")
    app = create_app(config_from_env())
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="info")
    return 0


_HANDLERS = {
    "ingest": _cmd_ingest,
    "chunk": _cmd_chunk,
    "embed": _cmd_embed,
    "litsearch": _cmd_litsearch,
    "mcp-serve": _cmd_mcp_serve,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; map the latter to 1
        return 0 if exc.code == 0 else 1

    try:
        if args.command == "index":
            handler = _cmd_index_build if args.index_command == "build" else _cmd_index_query
        elif args.command == "eval":
            handler = {
                "dedup": _cmd_eval_dedup,
                "summarize": _cmd_eval_summarize,
                "kappa": _cmd_eval_kappa,
            }[args.eval_command]
        else:
            handler = _HANDLERS[args.command]
        return handler(args)
    except EvragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
