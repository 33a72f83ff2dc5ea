"""End-to-end orchestration: prototypes -> dictionary -> MLR/CFV/FCR encoding ->
assembly -> SVM, with per-stage caching keyed by config hashes."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import cfv as cfv_mod
from . import classify, dictionary, gmm as gmm_mod, mlr as mlr_mod, proposals
from .coding import LlcParams, default_tau
from .datamodel import (
    DatasetManifest,
    load_manifest,
    read_feature_store,
    resolve_pixels,
    write_feature_store,
)
from .extractors import ExtractorSpec, make_extractor

log = logging.getLogger("hybridrep.pipeline")


class ConfigError(Exception):
    """Invalid run configuration; reported before any work starts."""


@dataclass
class RunConfig:
    manifest: str = "manifest.json"
    workdir: str = "runs"
    split: str = "default"
    # extractor
    extractor_kind: str = "synthetic"
    feature_dim: int = 32
    extractor_seed: int = 0
    store_paths: tuple[str, ...] = ()
    # stage-1 proposals / prototypes
    lambda_b: float = 0.5
    lambda_f: float = 0.5
    sigma: float = 1.0
    clusters: int = 10
    top: int = 5
    pad: int = 16
    var_threshold: float = 125.0
    da_filter: bool = False  # variance filtering is a DA-only trick
    proto_seed: int = 0
    # dictionary
    dict_mode: str = dictionary.CLASS_SPECIFIC
    per_class_k: int = 10
    dict_seed: int = 0
    # LLC / MLR
    llc_lambda: float = 1e-4
    llc_tau: float | None = None  # None -> 10 * mean pairwise atom distance squared
    llc_knn: int = 5
    squares: tuple[int, ...] = mlr_mod.DEFAULT_SQUARES
    stride: int = mlr_mod.DEFAULT_STRIDE
    mlr_normalize: bool = True
    # GMM / CFV
    gmm_components: int = 64
    gmm_seed: int = 0
    sample_budget: int = 256_000
    n_scales: int = 5  # 5 or 10
    power_alpha: float = 0.5
    include_weight_grad: bool = False
    # FCR
    fcr_crop: str = "whole"
    # assembly / SVM
    blocks: tuple[str, ...] = ("MLR", "CFV", "FCR1", "FCR2")
    svm_c: float = 1.0
    svm_seed: int = 0
    svm_epochs: int = 1000
    # domain adaptation
    da_source: str | None = None
    da_target: str | None = None
    da_mode: str = "unsupervised"
    da_cap: str = "std"
    da_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    # worker pool for image-parallel stages
    jobs: int = 1

    def __post_init__(self):
        if abs(self.lambda_b + self.lambda_f - 1.0) > 1e-9:
            raise ConfigError("lambda_b + lambda_f must equal 1")
        if self.top > self.clusters:
            raise ConfigError("top T must not exceed cluster count Q")
        if self.n_scales != 10 and not 1 <= self.n_scales <= 5:
            raise ConfigError("n_scales must be 10 or between 1 and 5")
        if self.fcr_crop not in ("whole", "central"):
            raise ConfigError(f"unknown FCR crop {self.fcr_crop!r}")
        unknown = set(self.blocks) - {"MLR", "CFV", "FCR1", "FCR2"}
        if unknown:
            raise ConfigError(f"unknown blocks {sorted(unknown)}")

    @property
    def scales(self) -> tuple[float, ...]:
        if self.n_scales == 10:
            return cfv_mod.TEN_SCALES
        return cfv_mod.FIVE_SCALES[: self.n_scales]

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            doc = json.load(fh)
        params = dict(doc.get("params", doc))
        for key in ("store_paths", "squares", "blocks", "da_seeds"):
            if key in params:
                params[key] = tuple(params[key])
        valid = set(cls.__dataclass_fields__)
        bad = set(params) - valid
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        try:
            return cls(**params)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _subset(cfg: RunConfig, keys) -> dict:
    full = asdict(cfg)
    return {k: full[k] for k in keys}


_EXTRACTOR_KEYS = ("manifest", "extractor_kind", "feature_dim", "extractor_seed", "store_paths")
_PROTO_KEYS = _EXTRACTOR_KEYS + (
    "lambda_b", "lambda_f", "sigma", "clusters", "top", "pad",
    "var_threshold", "da_filter", "proto_seed", "split",
)
_DICT_KEYS = ("dict_mode", "per_class_k", "dict_seed")
_MLR_KEYS = ("llc_lambda", "llc_tau", "llc_knn", "squares", "stride", "mlr_normalize")
_GMM_KEYS = _EXTRACTOR_KEYS + ("gmm_components", "gmm_seed", "sample_budget", "n_scales", "split")
_CFV_KEYS = ("power_alpha", "include_weight_grad")


class Pipeline:
    """Executes the hybrid-representation stages for one configuration."""

    def __init__(self, cfg: RunConfig, manifest: DatasetManifest | None = None):
        self.cfg = cfg
        self.workdir = Path(cfg.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest or load_manifest(cfg.manifest)
        if cfg.split not in self.manifest.splits:
            raise ConfigError(f"split {cfg.split!r} not in manifest")
        self.extractor = make_extractor(
            ExtractorSpec(
                kind=cfg.extractor_kind,
                d=cfg.feature_dim,
                seed=cfg.extractor_seed,
                store_paths=cfg.store_paths,
            )
        )
        self._base = str(Path(cfg.manifest).parent)

    def _pixels(self, record):
        return resolve_pixels(record, self._base)

    def _map_records(self, fn) -> dict[str, np.ndarray]:
        """Apply a pure per-image function, optionally on a bounded worker pool."""
        records = self.manifest.records
        for rec in records:
            self._pixels(rec)  # image decode stays single-threaded
        if self.cfg.jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=self.cfg.jobs) as pool:
                values = list(pool.map(fn, records))
        else:
            values = [fn(rec) for rec in records]
        return {rec.id: val for rec, val in zip(records, values)}

    def _stage(self, name: str, keys_hash: str, build, write, read):
        path = self.workdir / f"{name}-{keys_hash}"
        if path.exists():
            log.info("stage %s: cache hit (%s)", name, path.name)
            return read(path)
        start = time.perf_counter()
        result = build()
        write(result, path)
        log.info("stage %s: built in %.2fs -> %s", name, time.perf_counter() - start, path.name)
        return result

    # ---- stage 1: prototypes -------------------------------------------------

    def prototype_features(self) -> dict[str, np.ndarray]:
        """Per-image prototype feature matrix (<= T rows each)."""
        key = _hash(_subset(self.cfg, _PROTO_KEYS))

        def build():
            out = {}
            for rec in self.manifest.records:
                feats = self._prototypes_for(rec)
                if feats is not None and len(feats):
                    out[rec.id] = feats
            return out

        def write(result, path):
            entries = [
                (f"{rid}#proto", np.asarray(mat, dtype=np.float32))
                for rid, mat in sorted(result.items())
            ]
            write_feature_store(str(path) + ".hfrs", entries)

        def read(path):
            return {
                eid.split("#")[0]: np.asarray(mat)
                for eid, mat in read_feature_store(str(path) + ".hfrs")
            }

        path = self.workdir / f"protos-{key}"
        if (Path(str(path) + ".hfrs")).exists():
            return read(path)
        result = build()
        write(result, path)
        return result

    def _prototypes_for(self, rec):
        cfg = self.cfg
        self._pixels(rec)  # load relative to the manifest directory
        boxes = proposals.dedupe_boxes(proposals.filter_proposals(rec.proposals))
        if not boxes:
            return None
        feats = None
        if cfg.lambda_f > 0:
            feats = np.stack(
                [self.extractor.extract_region(rec, b) for b in boxes]
            )
        graph = proposals.build_graph(boxes, feats, cfg.lambda_b, cfg.lambda_f, cfg.sigma)
        q = min(cfg.clusters, len(boxes))
        labels = proposals.spectral_cluster(graph, q, seed=cfg.proto_seed)
        img_seed = int(hashlib.sha256(f"{cfg.proto_seed}:{rec.id}".encode()).hexdigest()[:8], 16)
        picked = proposals.select_prototypes(labels, boxes, cfg.top, seed=img_seed)
        padded = [proposals.context_pad(b, cfg.pad) for b in picked]
        if cfg.da_filter:
            pixels = self._pixels(rec)
            padded = [
                b for b in padded
                if proposals.variance_filter(pixels, b, cfg.var_threshold)
            ]
        if not padded:
            return None
        return np.stack([self.extractor.extract_region(rec, b) for b in padded])

    # ---- stage 2: dictionary -------------------------------------------------

    def part_dictionary(self) -> dictionary.PartDictionary:
        key = _hash(_subset(self.cfg, _PROTO_KEYS + _DICT_KEYS))
        store = self.workdir / f"dict-{key}.hfrs"
        sidecar = self.workdir / f"dict-{key}.json"
        if store.exists() and sidecar.exists():
            return dictionary.load_dictionary(store, sidecar)
        protos = self.prototype_features()
        train_ids = set(self.manifest.splits[self.cfg.split][0])
        label_of = {r.id: r.label for r in self.manifest.records}
        rows, labels = [], []
        for rid, mat in sorted(protos.items()):
            if rid in train_ids:
                rows.append(mat)
                labels.extend([label_of[rid]] * len(mat))
        if not rows:
            raise RuntimeError("no training prototypes; check proposals and split")
        part_dict = dictionary.build_dictionary(
            np.concatenate(rows), labels,
            mode=self.cfg.dict_mode,
            per_class_k=self.cfg.per_class_k,
            seed=self.cfg.dict_seed,
        )
        dictionary.save_dictionary(part_dict, store, sidecar)
        return part_dict

    # ---- stage 3: MLR --------------------------------------------------------

    def mlr_vectors(self) -> dict[str, np.ndarray]:
        key = _hash(_subset(self.cfg, _PROTO_KEYS + _DICT_KEYS + _MLR_KEYS))
        store = self.workdir / f"mlr-{key}.hfrs"
        if store.exists():
            return {e.split("#")[0]: v for e, v in read_feature_store(store)}
        part_dict = self.part_dictionary()
        tau = self.cfg.llc_tau or default_tau(part_dict.atoms)
        llc = LlcParams(
            lam=self.cfg.llc_lambda, tau=tau,
            knn=min(self.cfg.llc_knn, part_dict.size),
        )
        mcfg = mlr_mod.MlrConfig(
            squares=self.cfg.squares, stride=self.cfg.stride,
            llc=llc, normalize=self.cfg.mlr_normalize,
        )
        out = self._map_records(
            lambda rec: mlr_mod.encode_mlr(rec, self.extractor, part_dict, mcfg)
        )
        write_feature_store(store, [(f"{rid}#mlr", v) for rid, v in sorted(out.items())])
        return out

    # ---- stage 4: GMM --------------------------------------------------------

    def gmm_model(self) -> gmm_mod.GmmModel:
        key = _hash(_subset(self.cfg, _GMM_KEYS))
        store = self.workdir / f"gmm-{key}.hfrs"
        sidecar = self.workdir / f"gmm-{key}.json"
        if store.exists() and sidecar.exists():
            return gmm_mod.load_gmm(store, sidecar)
        train_ids = set(self.manifest.splits[self.cfg.split][0])
        tensors = []
        for rec in self.manifest.records:
            if rec.id not in train_ids:
                continue
            self._pixels(rec)
            tensors.append(
                [
                    self.extractor.extract_conv(rec, s, scale_index=i)
                    for i, s in enumerate(self.cfg.scales)
                ]
            )
        descriptors = gmm_mod.sample_descriptors(
            tensors, self.cfg.sample_budget, seed=self.cfg.gmm_seed
        )
        model = gmm_mod.train_gmm(
            descriptors, self.cfg.gmm_components, seed=self.cfg.gmm_seed
        )
        gmm_mod.save_gmm(model, store, sidecar)
        return model

    # ---- stage 5: CFV --------------------------------------------------------

    def cfv_vectors(self) -> dict[str, np.ndarray]:
        key = _hash(_subset(self.cfg, _GMM_KEYS + _CFV_KEYS))
        store = self.workdir / f"cfv-{key}.hfrs"
        if store.exists():
            return {e.split("#")[0]: v for e, v in read_feature_store(store)}
        model = self.gmm_model()
        fcfg = cfv_mod.FvConfig(
            scales=self.cfg.scales, power=self.cfg.power_alpha,
            include_weight_grad=self.cfg.include_weight_grad,
        )
        out = self._map_records(
            lambda rec: cfv_mod.encode_cfv(rec, self.extractor, model, fcfg)
        )
        write_feature_store(store, [(f"{rid}#cfv", v) for rid, v in sorted(out.items())])
        return out

    # ---- stage 6: FCR --------------------------------------------------------

    def fcr_vectors(self) -> dict[str, dict[str, np.ndarray]]:
        key = _hash(_subset(self.cfg, _EXTRACTOR_KEYS + ("fcr_crop",)))
        store = self.workdir / f"fcr-{key}.hfrs"
        if store.exists():
            out: dict[str, dict[str, np.ndarray]] = {}
            for eid, v in read_feature_store(store):
                rid, tag = eid.split("#")
                out.setdefault(rid, {})[tag.upper().split(":")[0]] = v
            return out
        crop = self.cfg.fcr_crop
        out = {}
        entries = []
        for rec in self.manifest.records:
            self._pixels(rec)
            blocks = {
                "FCR1": classify.l2_normalize_fcr(
                    self.extractor.extract_fcr(rec, crop, layer=1)
                ),
                "FCR2": classify.l2_normalize_fcr(
                    self.extractor.extract_fcr(rec, crop, layer=2)
                ),
            }
            out[rec.id] = blocks
            entries.append((f"{rec.id}#fcr1:{crop[0]}", blocks["FCR1"]))
            entries.append((f"{rec.id}#fcr2:{crop[0]}", blocks["FCR2"]))
        write_feature_store(store, entries)
        return out

    # ---- assembly / results --------------------------------------------------

    def hybrid_features(self) -> dict[str, np.ndarray]:
        want = set(self.cfg.blocks)
        blocks: dict[str, dict[str, np.ndarray]] = {r.id: {} for r in self.manifest.records}
        if "MLR" in want:
            for rid, v in self.mlr_vectors().items():
                blocks[rid]["MLR"] = v
        if "CFV" in want:
            for rid, v in self.cfv_vectors().items():
                blocks[rid]["CFV"] = v
        if want & {"FCR1", "FCR2"}:
            for rid, named in self.fcr_vectors().items():
                for tag in want & {"FCR1", "FCR2"}:
                    blocks[rid][tag] = named[tag]
        return {
            rid: classify.assemble(named, self.cfg.blocks).concat()
            for rid, named in blocks.items()
        }

    def run(self) -> dict:
        """Execute the full pipeline and return the results table."""
        cfg = self.cfg
        features = self.hybrid_features()
        label_of = {r.id: r.label for r in self.manifest.records}
        if cfg.da_source:
            result = classify.run_da(
                self.manifest, features, cfg.da_source, cfg.da_target,
                classify.DaSetting(mode=cfg.da_mode, source_cap=cfg.da_cap, seeds=cfg.da_seeds),
                C=cfg.svm_c, svm_seed=cfg.svm_seed,
            )
            table = {
                "task": f"{cfg.da_source}->{cfg.da_target}",
                "mode": cfg.da_mode,
                "cap": cfg.da_cap,
                "blocks": "+".join(cfg.blocks),
                "mean": round(result.mean, 6),
                "std": round(result.std, 6),
                "per_seed": [round(a, 6) for a in result.per_seed],
            }
        else:
            train_ids, test_ids = self.manifest.splits[cfg.split]
            model = classify.svm_train(
                [features[i] for i in train_ids],
                [label_of[i] for i in train_ids],
                C=cfg.svm_c, epochs=cfg.svm_epochs, seed=cfg.svm_seed,
            )
            preds = [classify.svm_predict(model, features[i]) for i in test_ids]
            acc, per_class = classify.evaluate_scene(
                [label_of[i] for i in test_ids], preds, len(self.manifest.classes)
            )
            table = {
                "blocks": "+".join(cfg.blocks),
                "accuracy": round(acc, 6),
                "per_class": {
                    self.manifest.classes[c]: round(v, 6) for c, v in per_class.items()
                },
                "n_train": len(train_ids),
                "n_test": len(test_ids),
            }
        results_path = self.workdir / f"results-{_hash(asdict(self.cfg))}.json"
        with open(results_path, "w") as fh:
            json.dump(table, fh, indent=1, sort_keys=True)
        table["results_path"] = str(results_path)
        return table


def run_pipeline(cfg: RunConfig) -> dict:
    return Pipeline(cfg).run()
