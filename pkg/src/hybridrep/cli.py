"""Command-line interface: one subcommand per pipeline stage plus an
end-to-end `pipeline` command and the synthetic dataset generator.

Exit codes: 0 success, 2 validation/config error, 1 runtime error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys

import click
import numpy as np

from . import cfv as cfv_mod
from . import classify, dictionary, gmm as gmm_mod, proposals, report, synth
from .datamodel import (
    ManifestError,
    FeatureStoreError,
    load_manifest,
    load_store_index,
    read_feature_store,
    write_feature_store,
)
from .pipeline import ConfigError, Pipeline, RunConfig

logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")


def guarded(fn):
    """Map validation failures to exit 2 and runtime failures to exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ManifestError, ValueError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - stage failures become exit 1
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _config(config_path, **overrides) -> RunConfig:
    if config_path:
        cfg = RunConfig.from_json(config_path)
        merged = {**cfg.__dict__, **{k: v for k, v in overrides.items() if v is not None}}
        return RunConfig(**merged)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


common_opts = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None),
    click.option("--manifest", default=None),
    click.option("--workdir", default=None),
]


def add_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@click.group()
def main():
    """Hybrid image-representation pipeline (MLR + CFV + FCR)."""


@main.command("synth-dataset")
@click.option("--out", required=True)
@click.option("--classes", default=3, show_default=True)
@click.option("--per-class", default=40, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--domains", default=1, type=click.IntRange(1, 2), show_default=True)
@guarded
def synth_dataset(out, classes, per_class, seed, domains):
    """Generate the deterministic toy texture dataset."""
    manifest = synth.generate_dataset(
        out, n_classes=classes, per_class=per_class, seed=seed, domains=domains
    )
    click.echo(f"wrote {len(manifest.records)} images and manifest to {out}")


@main.command("proposals-filter")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@guarded
def proposals_filter(manifest, out):
    """Apply the area/aspect proposal constraints; write kept boxes as JSON."""
    mani = load_manifest(manifest)
    kept = {
        rec.id: [
            [b.x1, b.y1, b.x2, b.y2]
            for b in proposals.dedupe_boxes(proposals.filter_proposals(rec.proposals))
        ]
        for rec in mani.records
    }
    with open(out, "w") as fh:
        json.dump(kept, fh, indent=1, sort_keys=True)
    total = sum(len(v) for v in kept.values())
    click.echo(f"kept {total} boxes across {len(kept)} images -> {out}")


@main.command("cluster-parts")
@add_options(common_opts)
@click.option("--lambda-b", type=float, default=None)
@click.option("--lambda-f", type=float, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--clusters", type=int, default=None)
@click.option("--top", type=int, default=None)
@click.option("--var-threshold", type=float, default=None)
@click.option("--da-filter/--no-da-filter", default=None)
@click.option("--seed", "proto_seed", type=int, default=None)
@guarded
def cluster_parts(config_path, **overrides):
    """Stage-1 prototype extraction (graph + spectral clustering + selection)."""
    cfg = _config(config_path, **overrides)
    protos = Pipeline(cfg).prototype_features()
    total = sum(len(v) for v in protos.values())
    click.echo(f"{total} prototypes across {len(protos)} images (workdir {cfg.workdir})")


@main.command("build-dictionary")
@add_options(common_opts)
@click.option("--mode", "dict_mode", type=click.Choice([dictionary.CLASS_SPECIFIC, dictionary.CLASS_MIXTURE]), default=None)
@click.option("--per-class-k", type=int, default=None)
@click.option("--seed", "dict_seed", type=int, default=None)
@guarded
def build_dictionary_cmd(config_path, **overrides):
    """Stage-2 k-means part dictionary over training prototypes."""
    cfg = _config(config_path, **overrides)
    part_dict = Pipeline(cfg).part_dictionary()
    click.echo(f"dictionary: K={part_dict.size}, d={part_dict.dim}, mode={part_dict.mode}")


@main.command("encode-mlr")
@add_options(common_opts)
@click.option("--dict", "dict_path", type=click.Path(), default=None,
              help="dictionary store path (with .json sidecar next to it)")
@click.option("--out", default=None, help="output feature store")
@guarded
def encode_mlr_cmd(config_path, dict_path, out, **overrides):
    """Encode the mid-level local representation for every image."""
    cfg = _config(config_path, **overrides)
    pipe = Pipeline(cfg)
    if dict_path:
        from .coding import LlcParams, default_tau
        from . import mlr as mlr_mod

        part_dict = dictionary.load_dictionary(dict_path, str(dict_path).replace(".hfrs", ".json"))
        tau = cfg.llc_tau or default_tau(part_dict.atoms)
        mcfg = mlr_mod.MlrConfig(
            squares=cfg.squares, stride=cfg.stride,
            llc=LlcParams(cfg.llc_lambda, tau, min(cfg.llc_knn, part_dict.size)),
            normalize=cfg.mlr_normalize,
        )
        vectors = pipe._map_records(
            lambda rec: mlr_mod.encode_mlr(rec, pipe.extractor, part_dict, mcfg)
        )
    else:
        vectors = pipe.mlr_vectors()
    if out:
        write_feature_store(out, [(f"{rid}#mlr", v) for rid, v in sorted(vectors.items())])
    dim = next(iter(vectors.values())).shape[0]
    click.echo(f"encoded MLR for {len(vectors)} images, dim {dim}")


@main.command("train-gmm")
@add_options(common_opts)
@click.option("--components", "gmm_components", type=int, default=None)
@click.option("--budget", "sample_budget", type=int, default=None)
@click.option("--seed", "gmm_seed", type=int, default=None)
@guarded
def train_gmm_cmd(config_path, **overrides):
    """Train the diagonal GMM on scale-proportional conv descriptor samples."""
    cfg = _config(config_path, **overrides)
    model = Pipeline(cfg).gmm_model()
    click.echo(f"GMM: M={model.n_components}, d={model.dim}")


@main.command("encode-cfv")
@add_options(common_opts)
@click.option("--gmm", "gmm_path", type=click.Path(), default=None)
@click.option("--scales", "n_scales", type=click.Choice(["5", "10"]), default=None)
@click.option("--out", default=None)
@guarded
def encode_cfv_cmd(config_path, gmm_path, n_scales, out, **overrides):
    """Encode the convolutional Fisher vector for every image."""
    if n_scales is not None:
        overrides["n_scales"] = int(n_scales)
    cfg = _config(config_path, **overrides)
    pipe = Pipeline(cfg)
    if gmm_path:
        model = gmm_mod.load_gmm(gmm_path, str(gmm_path).replace(".hfrs", ".json"))
        fcfg = cfv_mod.FvConfig(
            scales=cfg.scales, power=cfg.power_alpha,
            include_weight_grad=cfg.include_weight_grad,
        )
        vectors = pipe._map_records(
            lambda rec: cfv_mod.encode_cfv(rec, pipe.extractor, model, fcfg)
        )
    else:
        vectors = pipe.cfv_vectors()
    if out:
        write_feature_store(out, [(f"{rid}#cfv", v) for rid, v in sorted(vectors.items())])
    dim = next(iter(vectors.values())).shape[0]
    click.echo(f"encoded CFV for {len(vectors)} images, dim {dim}")


@main.command("encode-fcr")
@add_options(common_opts)
@click.option("--crop", "fcr_crop", type=click.Choice(["whole", "central"]), default=None)
@guarded
def encode_fcr_cmd(config_path, **overrides):
    """Extract and L2-normalize the fully connected representations."""
    cfg = _config(config_path, **overrides)
    vectors = Pipeline(cfg).fcr_vectors()
    click.echo(f"encoded FCR1/FCR2 for {len(vectors)} images")


@main.command("assemble")
@add_options(common_opts)
@click.option("--blocks", default=None, help="comma-separated subset, e.g. MLR,CFV,FCR1")
@click.option("--out", default=None, help="hybrid feature store output")
@guarded
def assemble_cmd(config_path, blocks, out, **overrides):
    """Assemble selected blocks into hybrid vectors (canonical order)."""
    if blocks is not None:
        overrides["blocks"] = tuple(blocks.split(","))
    cfg = _config(config_path, **overrides)
    features = Pipeline(cfg).hybrid_features()
    if out:
        write_feature_store(out, [(f"{rid}#hybrid", v) for rid, v in sorted(features.items())])
    dim = next(iter(features.values())).shape[0]
    click.echo(f"assembled {'+'.join(cfg.blocks)} for {len(features)} images, dim {dim}")


def _save_svm(model, path):
    entries = [(f"svm#w:{i}", model.weights[i].astype(np.float32)) for i in range(len(model.classes))]
    entries.append(("svm#b", model.biases.astype(np.float32)))
    write_feature_store(path, entries)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"classes": model.classes, "C": model.C}, fh)


def _load_svm(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    entries = dict(read_feature_store(path))
    weights = np.stack([entries[f"svm#w:{i}"] for i in range(len(meta["classes"]))])
    return classify.SvmModel(weights.astype(np.float64),
                             np.asarray(entries["svm#b"], dtype=np.float64),
                             meta["C"], meta["classes"])


def _load_hybrid(store_path):
    return {
        eid.split("#")[0]: np.asarray(v, dtype=np.float32)
        for eid, v in read_feature_store(store_path)
    }


@main.command("train-svm")
@add_options(common_opts)
@click.option("--features", "features_path", type=click.Path(exists=True), default=None,
              help="hybrid feature store; defaults to running the assembly stages")
@click.option("--c", "svm_c", type=float, default=None)
@click.option("--out", default=None, help="model output path")
@guarded
def train_svm_cmd(config_path, features_path, out, **overrides):
    """Train the one-vs-rest linear SVM on the training split."""
    cfg = _config(config_path, **overrides)
    mani = load_manifest(cfg.manifest)
    features = _load_hybrid(features_path) if features_path else Pipeline(cfg, mani).hybrid_features()
    train_ids, _ = mani.splits[cfg.split]
    label_of = {r.id: r.label for r in mani.records}
    model = classify.svm_train(
        [features[i] for i in train_ids], [label_of[i] for i in train_ids],
        C=cfg.svm_c, epochs=cfg.svm_epochs, seed=cfg.svm_seed,
    )
    if out:
        _save_svm(model, out)
    click.echo(f"trained SVM on {len(train_ids)} samples, {len(model.classes)} classes")


@main.command("evaluate")
@add_options(common_opts)
@click.option("--features", "features_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--report-dir", default=None, help="emit delimited results and figures here")
@guarded
def evaluate_cmd(config_path, features_path, model_path, report_dir, **overrides):
    """Evaluate on the test split (macro average class accuracy)."""
    cfg = _config(config_path, **overrides)
    mani = load_manifest(cfg.manifest)
    pipe = Pipeline(cfg, mani)
    features = _load_hybrid(features_path) if features_path else pipe.hybrid_features()
    label_of = {r.id: r.label for r in mani.records}
    train_ids, test_ids = mani.splits[cfg.split]
    if model_path:
        model = _load_svm(model_path)
    else:
        model = classify.svm_train(
            [features[i] for i in train_ids], [label_of[i] for i in train_ids],
            C=cfg.svm_c, epochs=cfg.svm_epochs, seed=cfg.svm_seed,
        )
    preds = [classify.svm_predict(model, features[i]) for i in test_ids]
    acc, per_class = classify.evaluate_scene(
        [label_of[i] for i in test_ids], preds, len(mani.classes)
    )
    row = {
        "blocks": "+".join(cfg.blocks),
        "accuracy": round(acc, 6),
        "per_class": {mani.classes[c]: round(v, 6) for c, v in per_class.items()},
    }
    if report_dir:
        paths = report.write_results(row, report_dir)
        figs = report.render_figures(row, report_dir)
        click.echo(f"report: {paths['csv']} (+{len(figs)} figures)")
    click.echo(f"average class accuracy: {acc:.4f}")


@main.command("da-run")
@add_options(common_opts)
@click.option("--source", "da_source", required=True)
@click.option("--target", "da_target", required=True)
@click.option("--mode", type=click.Choice(["unsup", "semi"]), default="unsup")
@click.option("--cap", "da_cap", type=click.Choice(["std", "all"]), default=None)
@click.option("--features", "features_path", type=click.Path(exists=True), default=None)
@click.option("--report-dir", default=None)
@guarded
def da_run_cmd(config_path, mode, features_path, report_dir, **overrides):
    """Domain-adaptation evaluation over five seeded partitions."""
    overrides["da_mode"] = {"unsup": "unsupervised", "semi": "semi_supervised"}[mode]
    overrides["da_filter"] = True
    cfg = _config(config_path, **overrides)
    mani = load_manifest(cfg.manifest)
    pipe = Pipeline(cfg, mani)
    features = _load_hybrid(features_path) if features_path else pipe.hybrid_features()
    result = classify.run_da(
        mani, features, cfg.da_source, cfg.da_target,
        classify.DaSetting(mode=cfg.da_mode, source_cap=cfg.da_cap, seeds=cfg.da_seeds),
        C=cfg.svm_c, svm_seed=cfg.svm_seed,
    )
    row = {
        "blocks": "+".join(cfg.blocks),
        "task": f"{cfg.da_source}->{cfg.da_target}",
        "mode": cfg.da_mode,
        "cap": cfg.da_cap,
        "mean": round(result.mean, 6),
        "std": round(result.std, 6),
    }
    if report_dir:
        paths = report.write_results(row, report_dir, name="da_results")
        figs = report.render_figures(row, report_dir, name="da_results")
        click.echo(f"report: {paths['csv']} (+{len(figs)} figures)")
    click.echo(f"{row['task']} ({row['mode']}, cap={row['cap']}): "
               f"{result.mean * 100:.2f} +/- {result.std * 100:.2f}")


@main.command("pipeline")
@add_options(common_opts)
@click.option("--blocks", default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--report-dir", default=None)
@guarded
def pipeline_cmd(config_path, blocks, report_dir, **overrides):
    """Run the full hybrid-representation pipeline end to end."""
    if blocks is not None:
        overrides["blocks"] = tuple(blocks.split(","))
    cfg = _config(config_path, **overrides)
    table = Pipeline(cfg).run()
    if report_dir:
        paths = report.write_results({k: v for k, v in table.items() if k != "results_path"},
                                     report_dir)
        report.render_figures(table, report_dir)
        click.echo(f"report: {paths['csv']}")
    click.echo(json.dumps(table, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
