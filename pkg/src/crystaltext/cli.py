"""Command-line front end for the whole pipeline.

One binary, subcommand per stage: corpus construction (synth/ingest/split/
fetch-abstracts/gen-keywords), the two training stages, embedding/eval,
the hyperparameter sweep, atlas construction, and the HTTP service. Every
command derives its randomness from --seed, writes only under --out-dir
(or the explicitly named output files), and records a run manifest with
the resolved configuration and input checksums.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from .clients import HttpDoiClient, HttpLlmClient, StubDoiClient, StubLlmClient
from .encoders import encode_text, init_dual_encoder, load_model
from .errors import CrystalTextError
from .graphs import GraphConfig
from .retrieval import (
    evaluate_keywords,
    load_index,
    rule_for_keyword,
    save_index,
    write_curve_csv,
    write_metrics_csv,
)
from .training import (
    LossConfig,
    TrainConfig,
    prepare_dataset,
    embed_records,
    sweep as run_sweep,
    train_run,
)

logger = logging.getLogger(__name__)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir, command: str, config: dict, seed, inputs: list) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "input_checksums": {
            str(p): _sha256(p) for p in inputs if p and Path(p).is_file()
        },
    }
    (out_dir / "run-manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".toml"):
        import tomllib

        return tomllib.loads(text)
    return json.loads(text)


def _merged(ctx: click.Context, **params) -> dict:
    """Config-file values fill in anything not given explicitly on the line."""
    file_config = ctx.obj.get("config", {})
    merged = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        explicit = source == click.core.ParameterSource.COMMANDLINE
        if not explicit and name in file_config:
            merged[name] = file_config[name]
        else:
            merged[name] = value
    return merged


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_keywords(text: str) -> list[str]:
    return [k.strip() for k in text.split(",") if k.strip()]


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON or TOML file with default option values (flags win).")
@click.option("--offline", is_flag=True, help="Forbid all network clients.")
@click.option("--threads", type=int, default=4, show_default=True,
              help="Worker cap for network fetch stages.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, offline, threads, verbose):
    """Crossmodal crystal/text embeddings: train, screen, map, serve."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config_file(config_path)
    ctx.obj["offline"] = offline
    ctx.obj["threads"] = threads


@main.command()
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--n-per-class", type=int, default=50, show_default=True)
@click.pass_context
def synth(ctx, out_dir, seed, n_per_class):
    """Generate the 4-family synthetic corpus (CIFs + captions + splits)."""
    params = _merged(ctx, out_dir=out_dir, seed=seed, n_per_class=n_per_class)
    try:
        records = corpus_mod.synth_toy_corpus(
            params["out_dir"], seed=params["seed"], n_per_class=params["n_per_class"]
        )
    except CrystalTextError as exc:
        _fail(str(exc))
    _write_manifest(params["out_dir"], "synth", params, params["seed"], [])
    counts = corpus_mod.split_counts(records)
    click.echo(f"wrote {len(records)} records to {params['out_dir']}/corpus.jsonl {counts}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--cif-root", type=click.Path(), default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
def ingest(ctx, manifest, cif_root, out_dir):
    """Build corpus records from a manifest of ids, CIF paths, and titles."""
    try:
        records = corpus_mod.ingest(manifest, cif_root)
    except CrystalTextError as exc:
        _fail(str(exc))
    out_path = Path(out_dir) / "corpus.jsonl"
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    corpus_mod.save_corpus(records, out_path)
    _write_manifest(out_dir, "ingest", {"manifest": manifest}, None, [manifest])
    click.echo(f"ingested {len(records)} records to {out_path}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratios", default="8:1:1", show_default=True)
@click.pass_context
def split(ctx, corpus_path, seed, ratios):
    """Assign train/val/test tags by seeded shuffle at the given ratios."""
    params = _merged(ctx, corpus_path=corpus_path, seed=seed, ratios=ratios)
    try:
        ratio_values = tuple(float(r) for r in str(params["ratios"]).split(":"))
        records = corpus_mod.load_corpus(params["corpus_path"])
        corpus_mod.split(records, ratios=ratio_values, seed=params["seed"])
        corpus_mod.save_corpus(records, params["corpus_path"])
    except (CrystalTextError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"split {len(records)} records: {corpus_mod.split_counts(records)}")


def _stub_or_http_doi(ctx, stub_fixtures):
    if stub_fixtures:
        return StubDoiClient.from_fixture(stub_fixtures)
    if ctx.obj["offline"]:
        _fail("offline mode requires --stub-fixtures")
    return HttpDoiClient(offline=ctx.obj["offline"])


def _stub_or_http_llm(ctx, stub_fixtures):
    if stub_fixtures:
        return StubLlmClient.from_fixture(stub_fixtures)
    if ctx.obj["offline"]:
        _fail("offline mode requires --stub-fixtures")
    return HttpLlmClient(offline=ctx.obj["offline"])


@main.command("fetch-abstracts")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--stub-fixtures", type=click.Path(exists=True), default=None,
              help="JSON file mapping doi -> abstract (hermetic mode).")
@click.pass_context
def fetch_abstracts(ctx, corpus_path, stub_fixtures):
    """Fill in abstracts from the DOI metadata service (resumable)."""
    client = _stub_or_http_doi(ctx, stub_fixtures)
    try:
        records = corpus_mod.load_corpus(corpus_path)
        fetched = corpus_mod.fetch_abstracts(records, client, max_workers=ctx.obj["threads"])
        corpus_mod.save_corpus(records, corpus_path)
    except CrystalTextError as exc:
        _fail(str(exc))
    click.echo(f"fetched {fetched} abstracts")


@main.command("gen-keywords")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--stub-fixtures", type=click.Path(exists=True), default=None,
              help="JSON file mapping record id -> keyword list (hermetic mode).")
@click.pass_context
def gen_keywords(ctx, corpus_path, stub_fixtures):
    """Generate and filter keyword captions for records with abstracts."""
    client = _stub_or_http_llm(ctx, stub_fixtures)
    try:
        records = corpus_mod.load_corpus(corpus_path)
        generated = corpus_mod.generate_keywords(records, client, max_workers=ctx.obj["threads"])
        corpus_mod.save_corpus(records, corpus_path)
    except CrystalTextError as exc:
        _fail(str(exc))
    click.echo(f"generated keywords for {generated} records")


def _train_options(fn):
    fn = click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))(fn)
    fn = click.option("--out-dir", required=True, type=click.Path())(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--batch-size", type=int, default=32, show_default=True)(fn)
    fn = click.option("--margin", type=float, default=0.5, show_default=True)(fn)
    fn = click.option("--scale", type=float, default=3.0, show_default=True)(fn)
    fn = click.option("--weight-decay", type=float, default=0.0, show_default=True)(fn)
    fn = click.option("--val-every", type=int, default=10, show_default=True)(fn)
    fn = click.option("--eval-keywords", default="", help="Comma-separated validation keywords.")(fn)
    return fn


def _run_training(ctx, params, stage: str, model, corpus_path, out_dir):
    records = corpus_mod.load_corpus(corpus_path)
    rules = [rule_for_keyword(k) for k in _parse_keywords(params["eval_keywords"])]
    train_cfg = TrainConfig(
        batch_size=params["batch_size"],
        epochs=params["epochs"],
        lr=params["lr"],
        stage=stage,
        seed=params["seed"],
        weight_decay=params["weight_decay"],
        val_every=params["val_every"],
    )
    loss_cfg = LossConfig(s=params["scale"], m=params["margin"])
    result = train_run(records, model, train_cfg, loss_cfg, out_dir, rules or None)
    _write_manifest(out_dir, stage, params, params["seed"], [corpus_path])
    click.echo(
        f"{stage} done: final loss {result.epoch_losses[-1]:.4f}, "
        f"best val AUC {result.best_val_auc}, checkpoints in {out_dir}"
    )
    return result


@main.command()
@_train_options
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.pass_context
def train(ctx, corpus_path, out_dir, seed, batch_size, margin, scale,
          weight_decay, val_every, eval_keywords, epochs, lr):
    """Stage 1: contrastive pre-training on publication titles."""
    params = _merged(ctx, corpus_path=corpus_path, out_dir=out_dir, seed=seed,
                     batch_size=batch_size, margin=margin, scale=scale,
                     weight_decay=weight_decay, val_every=val_every,
                     eval_keywords=eval_keywords, epochs=epochs, lr=lr)
    try:
        model = init_dual_encoder(params["seed"])
        _run_training(ctx, params, "pretrain", model, params["corpus_path"], params["out_dir"])
    except CrystalTextError as exc:
        _fail(str(exc))


@main.command()
@_train_options
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.pass_context
def finetune(ctx, corpus_path, out_dir, seed, batch_size, margin, scale,
             weight_decay, val_every, eval_keywords, checkpoint, epochs, lr):
    """Stage 2: fine-tune a pre-trained checkpoint on keyword captions."""
    params = _merged(ctx, corpus_path=corpus_path, out_dir=out_dir, seed=seed,
                     batch_size=batch_size, margin=margin, scale=scale,
                     weight_decay=weight_decay, val_every=val_every,
                     eval_keywords=eval_keywords, checkpoint=checkpoint,
                     epochs=epochs, lr=lr)
    try:
        model, _meta = load_model(params["checkpoint"])
        _run_training(ctx, params, "finetune", model, params["corpus_path"], params["out_dir"])
    except CrystalTextError as exc:
        _fail(str(exc))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--split", "split_name", default="test", show_default=True,
              type=click.Choice(["train", "val", "test", "all"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--include-structures/--no-include-structures", default=True, show_default=True)
@click.pass_context
def embed(ctx, corpus_path, checkpoint, split_name, out_path, include_structures):
    """Embed a corpus split into a persisted index (plus metadata sidecar)."""
    try:
        model, _meta = load_model(checkpoint)
        records = corpus_mod.load_corpus(corpus_path)
        if split_name != "all":
            records = [r for r in records if r.split == split_name]
        prepared = prepare_dataset(
            records, "title", GraphConfig(), model.text.config.vocab_size
        )
        index = embed_records(prepared, model, include_structures=include_structures)
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        save_index(index, out_path)
    except CrystalTextError as exc:
        _fail(str(exc))
    click.echo(f"embedded {index.n} structures to {out_path}")


@main.command("eval")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--keywords", required=True, help="Comma-separated query keywords.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
def eval_cmd(ctx, index_path, checkpoint, keywords, seed, out_dir):
    """Zero-shot retrieval metrics (ROC-AUC, balanced AP) per keyword."""
    params = _merged(ctx, index_path=index_path, checkpoint=checkpoint,
                     keywords=keywords, seed=seed, out_dir=out_dir)
    try:
        model, _meta = load_model(params["checkpoint"])
        index = load_index(params["index_path"])
        rules = [rule_for_keyword(k) for k in _parse_keywords(params["keywords"])]
        if not rules:
            raise CrystalTextError("no keywords given")
        rows, curves = evaluate_keywords(
            index, rules, lambda kw: encode_text(kw, model.text), seed=params["seed"]
        )
    except CrystalTextError as exc:
        _fail(str(exc))
    out = Path(params["out_dir"])
    (out / "curves").mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, out / "metrics.csv")
    for keyword, (fpr, tpr) in curves.items():
        write_curve_csv(fpr, tpr, out / "curves" / f"{keyword.replace(' ', '_')}.csv")
    _write_manifest(out, "eval", params, params["seed"],
                    [params["index_path"], params["checkpoint"]])
    for row in rows:
        auc = "n/a" if row.roc_auc is None else f"{row.roc_auc:.4f}"
        ap = "n/a" if row.balanced_ap is None else f"{row.balanced_ap:.4f}"
        click.echo(f"{row.keyword}: n_pos={row.n_pos} roc_auc={auc} balanced_ap={ap}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--margins", default="0,0.3,0.5", show_default=True)
@click.option("--scales", default="1.0,1.5,2.0,2.5,3.0,3.5", show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--val-every", type=int, default=10, show_default=True)
@click.option("--eval-keywords", required=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
def sweep(ctx, corpus_path, margins, scales, epochs, batch_size, lr, seed,
          val_every, eval_keywords, out_dir):
    """Grid over (margin, scale): train, fine-tune, tabulate validation AUC."""
    params = _merged(ctx, corpus_path=corpus_path, margins=margins, scales=scales,
                     epochs=epochs, batch_size=batch_size, lr=lr, seed=seed,
                     val_every=val_every, eval_keywords=eval_keywords, out_dir=out_dir)
    try:
        records = corpus_mod.load_corpus(params["corpus_path"])
        rules = [rule_for_keyword(k) for k in _parse_keywords(params["eval_keywords"])]
        base_cfg = TrainConfig(
            batch_size=params["batch_size"], epochs=params["epochs"], lr=params["lr"],
            stage="pretrain", seed=params["seed"], val_every=params["val_every"],
        )
        rows = run_sweep(
            [float(m) for m in str(params["margins"]).split(",")],
            [float(s) for s in str(params["scales"]).split(",")],
            records, base_cfg, rules, params["out_dir"],
        )
    except (CrystalTextError, ValueError) as exc:
        _fail(str(exc))
    _write_manifest(params["out_dir"], "sweep", params, params["seed"],
                    [params["corpus_path"]])
    for row in rows:
        click.echo(
            f"m={row.margin} s={row.scale} pretrain={row.pretrain_val_auc} "
            f"finetune={row.finetune_val_auc}" + (f" error={row.error}" if row.error else "")
        )


@main.command("atlas")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--clusters", "k", type=int, default=20, show_default=True)
@click.option("--perplexity", type=float, default=30.0, show_default=True)
@click.option("--iters", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def atlas_cmd(ctx, index_path, out_path, k, perplexity, iters, seed):
    """Build the 2-D map: t-SNE coords, k-means++ clusters, JSD matrices."""
    from .atlas import build_atlas, save_atlas

    params = _merged(ctx, index_path=index_path, out_path=out_path, k=k,
                     perplexity=perplexity, iters=iters, seed=seed)
    try:
        index = load_index(params["index_path"])
        model = build_atlas(
            index, k=params["k"], perplexity=params["perplexity"],
            seed=params["seed"], iters=params["iters"],
        )
        Path(params["out_path"]).parent.mkdir(parents=True, exist_ok=True)
        save_atlas(model, params["out_path"])
    except CrystalTextError as exc:
        _fail(str(exc))
    click.echo(f"atlas with {len(model.ids)} points, k={params['k']} -> {params['out_path']}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--atlas", "atlas_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--cors-origin", multiple=True, help="Allowed CORS origin (repeatable).")
@click.pass_context
def serve(ctx, checkpoint, index_path, atlas_path, host, port, cors_origin):
    """Serve the read-only JSON API over a trained model and index."""
    import uvicorn

    from .service import create_app, load_state

    try:
        state = load_state(checkpoint, index_path, atlas_path,
                           cors_origins=list(cors_origin) or None)
    except CrystalTextError as exc:
        _fail(str(exc))
    app = create_app(state)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
