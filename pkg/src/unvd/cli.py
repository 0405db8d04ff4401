"""Operator entry point: serve, work, ingest, search, visualize, evaluate,
bench, compact."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import embedding
from .errors import SchemaViolation, UnvdError
from .fixtures import build_bench_fixture
from .ingestion import FixtureProvider, ProviderConfig, bench_providers, fetch_media
from .metadata_store import MetadataStore
from .pipeline import FileBroker, InMemoryBroker, Pipeline
from .reduction import run_reduction_experiment, tsne
from .vector_store import VectorStore


class AppContext:
    def __init__(self, data_dir: str, fixture: str | None, broker: str,
                 page_size: int, namespace: str):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.vectors = VectorStore(directory=self.data_dir / "vectors")
        self.metadata = MetadataStore(self.data_dir / "meta")
        if broker == "file":
            self.broker = FileBroker(self.data_dir / "queue.bin")
        else:
            self.broker = InMemoryBroker()
        self.provider = None
        if fixture:
            self.provider = FixtureProvider(
                fixture, ProviderConfig(kind="fixture", page_size=page_size)
            )
        self.namespace = namespace
        self.pipeline = Pipeline(
            broker=self.broker,
            metadata=self.metadata,
            vectors=self.vectors,
            provider=self.provider,
            embed_fn=embedding.embed_bytes,
            fetch_fn=fetch_media,
            namespace=namespace,
        )


def _emit(obj, fmt: str):
    if fmt == "ndjson":
        if isinstance(obj, list):
            for row in obj:
                click.echo(json.dumps(row))
        else:
            click.echo(json.dumps(obj))
    else:
        click.echo(obj if isinstance(obj, str) else json.dumps(obj, indent=2))


@click.group()
@click.option("--data-dir", default="./unvd-data", show_default=True)
@click.option("--fixture", default=None, help="fixture directory for the local provider")
@click.option("--broker", type=click.Choice(["memory", "file"]), default="file")
@click.option("--page-size", default=50, type=click.IntRange(10, 100))
@click.option("--namespace", default="main")
@click.option("--format", "fmt", type=click.Choice(["table", "ndjson"]), default="table")
@click.pass_context
def main(ctx, data_dir, fixture, broker, page_size, namespace, fmt):
    """Self-hosted NFT similarity system."""
    ctx.obj = {"args": (data_dir, fixture, broker, page_size, namespace), "fmt": fmt}


def _app(ctx) -> AppContext:
    return AppContext(*ctx.obj["args"])


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.option("--with-worker/--no-worker", default=True,
              help="run an embedded worker thread alongside the API")
@click.option("--concurrency", default=2, type=int)
@click.pass_context
def serve(ctx, host, port, with_worker, concurrency):
    """Run the HTTP API (optionally with embedded workers)."""
    import threading

    import uvicorn

    from .api import ServiceContext, create_app

    app_ctx = _app(ctx)
    service = ServiceContext.from_env(app_ctx.vectors, app_ctx.metadata, app_ctx.pipeline)
    app = create_app(service)
    if with_worker:
        stop = threading.Event()
        t = threading.Thread(
            target=app_ctx.pipeline.worker_loop,
            kwargs={"concurrency": concurrency, "stop": stop},
            daemon=True,
        )
        t.start()
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--concurrency", default=1, type=click.IntRange(min=1))
@click.option("--visibility-timeout", default=30.0, type=float)
@click.option("--max-attempts", default=3, type=int)
@click.option("--drain", is_flag=True, help="exit when the queue is empty")
@click.pass_context
def work(ctx, concurrency, visibility_timeout, max_attempts, drain):
    """Run worker consumers against the shared broker."""
    app_ctx = _app(ctx)
    app_ctx.pipeline.visibility_timeout = visibility_timeout
    app_ctx.pipeline.max_attempts = max_attempts
    app_ctx.pipeline.worker_loop(concurrency=concurrency, drain=drain)


@main.command()
@click.option("--contract", required=True)
@click.option("--chain", default="ethereum")
@click.pass_context
def ingest(ctx, contract, chain):
    """Enqueue a contract-expansion task."""
    app_ctx = _app(ctx)
    try:
        task_id = app_ctx.pipeline.enqueue_contract(chain, contract)
    except SchemaViolation as e:
        raise click.UsageError(str(e))
    except UnvdError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    _emit({"task_id": task_id}, ctx.obj["fmt"])


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--top-k", default=10, type=click.IntRange(1, 100))
@click.pass_context
def search(ctx, image, top_k):
    """Embed an image file and query the vector store."""
    app_ctx = _app(ctx)
    try:
        vec = embedding.embed_bytes(Path(image).read_bytes())
        results = app_ctx.vectors.query(app_ctx.namespace, vec, top_k)
    except UnvdError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    rows = [{"id": r.id, "distance": r.distance, "metadata": r.metadata} for r in results]
    if ctx.obj["fmt"] == "table":
        for r in rows:
            click.echo(f"{r['id']}\t{r['distance']:.6g}")
    else:
        _emit(rows, "ndjson")


@main.command()
@click.option("--ids", "ids_file", required=True, type=click.Path(exists=True),
              help="file with one stored vector id per line")
@click.option("--seed", default=0, type=int)
@click.option("--perplexity", default=None, type=float)
@click.pass_context
def visualize(ctx, ids_file, seed, perplexity):
    """t-SNE projection of stored vectors to 2-D."""
    app_ctx = _app(ctx)
    ids = [l.strip() for l in Path(ids_file).read_text().splitlines() if l.strip()]
    rows = []
    try:
        for vid in ids:
            rec = app_ctx.vectors.fetch(app_ctx.namespace, vid)
            if rec is None:
                click.echo(f"error: unknown id {vid}", err=True)
                sys.exit(1)
            rows.append(rec.vector)
        X = np.stack(rows).astype(np.float64)
        p = perplexity if perplexity is not None else min(15.0, (len(ids) - 1) / 3)
        Y = tsne(X, perplexity=p, seed=seed)
    except UnvdError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    out = [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in zip(ids, Y)]
    _emit(out, "ndjson" if ctx.obj["fmt"] == "ndjson" else "ndjson")


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True),
              help="two-collection fixture directory (manifest.ndjson + media/)")
@click.option("--seed", default=0, type=int)
@click.option("--tsne-iters", default=1000, type=int)
@click.pass_context
def evaluate(ctx, dataset, seed, tsne_iters):
    """Run the dimensionality-reduction comparison experiment."""
    dataset = Path(dataset)
    images = sorted((dataset / "media").glob("*.png")) if (dataset / "media").is_dir() \
        else sorted(dataset.glob("*.png"))
    if len(images) < 4:
        raise click.UsageError(f"dataset {dataset} has too few images")
    X = np.stack([embedding.embed_bytes(p.read_bytes()) for p in images]).astype(np.float64)
    report = run_reduction_experiment(X, seed=seed, tsne_iters=tsne_iters)
    if ctx.obj["fmt"] == "ndjson":
        click.echo(report.to_ndjson(), nl=False)
    else:
        click.echo(report.to_table())


@main.command()
@click.option("--sizes", default="10,100,1000", show_default=True)
@click.option("--page-latency", default=0.05, type=float)
@click.option("--token-latency", default=0.001, type=float)
@click.pass_context
def bench(ctx, sizes, page_latency, token_latency):
    """Benchmark the two provider styles with injected latencies."""
    import tempfile

    size_list = [int(s) for s in sizes.split(",") if s]
    with tempfile.TemporaryDirectory() as tmp:
        build_bench_fixture(tmp, [n for n in size_list if n > 0])
        provider = FixtureProvider(tmp, page_latency=page_latency,
                                   token_latency=token_latency)
        report = bench_providers(provider, size_list)
    rows = report.rows()
    if ctx.obj["fmt"] == "ndjson":
        _emit(rows, "ndjson")
        _emit({"api_slope": report.api_slope, "api_r2": report.api_r2}, "ndjson")
    else:
        for r in rows:
            click.echo(f"n={r['n']:>6}  subgraph={r['subgraph_seconds']}  api={r['api_seconds']}")
        click.echo(f"api fit: slope={report.api_slope:.6g} r2={report.api_r2:.4f}")


@main.command()
@click.pass_context
def compact(ctx):
    """Fold the vector-store logs into snapshots."""
    app_ctx = _app(ctx)
    man = app_ctx.vectors.compact()
    _emit({"dimension": man.dimension,
           "namespaces": {n: c for n, c in man.namespaces}}, ctx.obj["fmt"])


if __name__ == "__main__":
    main()
