"""Experiment orchestration behind the CLI: load inputs, build and train a
model of the configured kind, persist it, predict, and score predictions."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..aes_model import AesConfig, AesModel, ScoreScale, train_aes, unscale_score
from ..diffcore import grad_check, ops
from ..joint_model import DetectionThreshold, JointConfig, JointModel, assign_gold, prediction_rows, train_joint
from ..lc_model import LcConfig, LcModel, train_lc
from ..metrics import macro_average, pool_from_rows, pra, qwk_from_scores, tpra
from ..synthdata import PromptSpec, load_prompt_specs
from ..textpipe import (
    Essay,
    Vocab,
    atomic_write_bytes,
    build_vocab,
    essay_token_stream,
    load_embeddings,
    read_corpus,
    write_jsonl,
)
from ..training import RngStreams, TrainLog
from ..vecconcat import KernelRidgeModel, feature_matrix, kernel_ridge_fit
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    parameter_tensors,
    restore_parameters,
    save_checkpoint,
)
from .config import ConfigError, RunConfig

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test", "synthetic_train", "synthetic_dev", "synthetic_test")
LC_KINDS = ("lc", "lc_mul")
JOINT_KINDS = ("joint", "joint_no_share", "joint_zero_score")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dumps_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


@dataclass
class Inputs:
    specs: dict[int, PromptSpec]
    splits: dict[str, list[Essay]] = field(default_factory=dict)

    @property
    def scales(self) -> dict[int, ScoreScale]:
        return {pid: s.scale for pid, s in self.specs.items()}

    def get(self, name: str) -> list[Essay]:
        return self.splits.get(name, [])


def load_inputs(cfg: RunConfig) -> Inputs:
    inputs = Inputs(load_prompt_specs(cfg.prompts))
    for name in SPLITS:
        path = getattr(cfg, name)
        if path:
            inputs.splits[name] = read_corpus(path)
    return inputs


def input_hashes(cfg: RunConfig) -> dict:
    out = {}
    for name in SPLITS + ("embeddings", "prompts", "lc_checkpoint", "aes_checkpoint"):
        path = getattr(cfg, name)
        if path:
            out[name] = {"path": path, "sha256": sha256_file(path)}
    return out


def unique_essays(*groups: Sequence[Essay]) -> list[Essay]:
    seen, out = set(), []
    for group in groups:
        for e in group:
            if e.id not in seen:
                seen.add(e.id)
                out.append(e)
    return out


def require(inputs: Inputs, *names: str) -> None:
    missing = [n for n in names if not inputs.get(n)]
    if missing:
        raise ConfigError(f"kind needs non-empty data: {', '.join(missing)}")


# ---------------------------------------------------------------- models

def build_model(cfg: RunConfig, vocab: Vocab, rng: np.random.Generator, embeddings: Optional[str] = None):
    emb = load_embeddings(embeddings, vocab, rng, cfg.init_scale) if embeddings else None
    if emb is not None and emb.k != cfg.embedding_dim:
        raise ConfigError(f"embedding file has {emb.k} dimensions, config says {cfg.embedding_dim}")
    if cfg.kind in LC_KINDS:
        return LcModel.init(vocab, cfg.lc_config(), rng, embedding=emb)
    if cfg.kind == "aes":
        return AesModel.init(vocab, cfg.aes_config(), rng, embedding=emb)
    if cfg.kind in JOINT_KINDS:
        return JointModel.init(vocab, cfg.joint_config(), rng, embedding=emb)
    raise ConfigError(f"kind {cfg.kind!r} has no trainable network")


@dataclass
class VecConcatModel:
    lc: LcModel
    aes: AesModel
    regressor: KernelRidgeModel

    def predict_scaled(self, essays: Sequence[Essay]) -> np.ndarray:
        if not essays:
            return np.zeros(0)
        return np.clip(self.regressor.predict(feature_matrix(essays, self.lc, self.aes)), 0.0, 1.0)


def to_checkpoint(cfg: RunConfig, model, extra: Optional[dict] = None) -> Checkpoint:
    if isinstance(model, VecConcatModel):
        tensors = {"krr.train_features": model.regressor.train_features, "krr.dual_coef": model.regressor.dual_coef}
        tensors.update(parameter_tensors(model.lc.parameters(), "lc/"))
        tensors.update(parameter_tensors(model.aes.parameters(), "aes/"))
        sub = {"lc": {"config": model.lc.config.to_dict(), "vocab": model.lc.vocab.to_list()},
               "aes": {"config": model.aes.config.to_dict(), "vocab": model.aes.vocab.to_list()},
               "alpha": model.regressor.alpha, "gamma": model.regressor.gamma}
        return Checkpoint(cfg.kind, cfg.to_dict(), Vocab(), tensors, {**sub, **(extra or {})})
    return Checkpoint(cfg.kind, cfg.to_dict(), model.vocab, parameter_tensors(model.parameters()), extra or {})


def from_checkpoint(ckpt: Checkpoint):
    cfg = RunConfig(**ckpt.config)
    if cfg.kind == "vecconcat":
        lc_info, aes_info = ckpt.extra["lc"], ckpt.extra["aes"]
        rng = np.random.default_rng(0)
        lc = LcModel.init(Vocab.from_list(lc_info["vocab"]), LcConfig(**lc_info["config"]), rng)
        aes = AesModel.init(Vocab.from_list(aes_info["vocab"]), AesConfig(**aes_info["config"]), rng)
        restore_parameters(lc.parameters(), ckpt.tensors, "lc/")
        restore_parameters(aes.parameters(), ckpt.tensors, "aes/")
        reg = KernelRidgeModel(ckpt.tensors["krr.train_features"], ckpt.tensors["krr.dual_coef"],
                               ckpt.extra["alpha"], ckpt.extra["gamma"])
        return cfg, VecConcatModel(lc, aes, reg)
    model = build_model(cfg, ckpt.vocab, np.random.default_rng(0))
    restore_parameters(model.parameters(), ckpt.tensors)
    return cfg, model


def load_sub_model(path, kinds: Sequence[str]):
    cfg, model = from_checkpoint(load_checkpoint(path))
    if cfg.kind not in kinds:
        raise CheckpointError(f"{path}: expected a {' or '.join(kinds)} checkpoint, got {cfg.kind}")
    return model


# ------------------------------------------------------------ prediction

def base_row(e: Essay) -> dict:
    return {"id": e.id, "prompt": e.prompt_id, "gold": e.gold_score, "is_synthetic": e.is_synthetic,
            "origin_id": e.origin_id}


def predict_rows(kind: str, model, essays: Sequence[Essay], scales, threshold: Optional[DetectionThreshold] = None):
    if not essays:
        return []
    if kind in JOINT_KINDS:
        if threshold is None:
            esy, coh = model.predict(essays)
            return [{**base_row(e), "essay_scaled": float(s), "coherence": float(c),
                     "essay_score": unscale_score(float(np.clip(s, 0, 1)), scales[e.prompt_id])}
                    for e, s, c in zip(essays, esy, coh)]
        return prediction_rows(model, essays, threshold, scales)
    if kind in LC_KINDS:
        return [{**base_row(e), "coherence": float(c)} for e, c in zip(essays, model.coherence(essays))]
    if kind == "aes":
        _, scores = model.predict(essays)
    else:
        scores = model.predict_scaled(essays)
    return [{**base_row(e), "essay_scaled": float(s), "essay_score": unscale_score(float(s), scales[e.prompt_id])}
            for e, s in zip(essays, scores)]


# -------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: object
    log: Optional[TrainLog]
    threshold: Optional[DetectionThreshold]
    manifest: dict


def fit_model(cfg: RunConfig, inputs: Inputs):
    """Build and train the configured model; returns (model, log, threshold)."""
    rngs = RngStreams.from_seed(cfg.seed)
    tcfg = cfg.train_config()
    if cfg.kind == "vecconcat":
        return fit_vecconcat(cfg, inputs), None, None
    if cfg.kind in LC_KINDS:
        require(inputs, "synthetic_train", "synthetic_dev")
        training = inputs.get("synthetic_train")
    elif cfg.kind == "aes":
        require(inputs, "train", "dev")
        training = inputs.get("train")
    else:
        require(inputs, "train", "dev")
        if cfg.lambda_lc > 0:
            require(inputs, "synthetic_train")
        training = unique_essays(inputs.get("train"), inputs.get("synthetic_train"))
    vocab = build_vocab(essay_token_stream(training), cfg.min_count)
    model = build_model(cfg, vocab, rngs.init, cfg.embeddings)
    if cfg.kind in LC_KINDS:
        return model, train_lc(training, inputs.get("synthetic_dev"), model, tcfg, rngs), None
    if cfg.kind == "aes":
        return model, train_aes(training, inputs.get("dev"), inputs.scales, model, tcfg, rngs), None
    synthetic = [e for e in inputs.get("synthetic_train") if e.is_synthetic]
    res = train_joint(inputs.get("train"), synthetic, inputs.get("dev"), inputs.get("synthetic_dev"),
                      inputs.scales, model, tcfg, rngs)
    return model, res.log, res.threshold


def fit_vecconcat(cfg: RunConfig, inputs: Inputs) -> VecConcatModel:
    if not (cfg.lc_checkpoint and cfg.aes_checkpoint):
        raise ConfigError("vecconcat needs lc_checkpoint and aes_checkpoint")
    require(inputs, "train")
    lc = load_sub_model(cfg.lc_checkpoint, LC_KINDS)
    aes = load_sub_model(cfg.aes_checkpoint, ("aes",))
    essays = unique_essays(inputs.get("train"), inputs.get("synthetic_train"))
    lookup = {e.id: e for e in essays if not e.is_synthetic}
    targets = [assign_gold(e, "main", inputs.scales, lookup).essay_gold_scaled for e in essays]
    reg = kernel_ridge_fit(feature_matrix(essays, lc, aes), targets, cfg.alpha, cfg.gamma)
    return VecConcatModel(lc, aes, reg)


def train_run(cfg: RunConfig, out_dir) -> TrainResult:
    """Train, then write checkpoint, test predictions and manifest into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    model, tlog, threshold = fit_model(cfg, inputs)
    if cfg.kind != "vecconcat":
        cfg = cfg.replace(embedding_dim=model.parameters()[0].shape[1])
    extra = {"threshold": threshold.to_dict() if threshold else None}
    blob = save_checkpoint(out / "checkpoint.bin", to_checkpoint(cfg, model, extra))
    outputs = {"checkpoint": {"path": "checkpoint.bin", "sha256": hashlib.sha256(blob).hexdigest()}}
    test = unique_essays(inputs.get("test"), inputs.get("synthetic_test"))
    if test:
        rows = predict_rows(cfg.kind, model, test, inputs.scales, threshold)
        write_jsonl(out / "predictions.jsonl", rows)
        outputs["predictions"] = {"path": "predictions.jsonl", "sha256": sha256_file(out / "predictions.jsonl")}
    manifest = {
        "config": cfg.to_dict(),
        "inputs": input_hashes(cfg),
        "epochs": tlog.epochs if tlog else [],
        "selected_epoch": tlog.selected_epoch if tlog else None,
        "selection_metric": tlog.selection_metric if tlog else None,
        "threshold": extra["threshold"],
        "outputs": outputs,
    }
    atomic_write_bytes(out / "manifest.json", dumps_json(_finite(manifest)))
    return TrainResult(model, tlog, threshold, manifest)


def _finite(obj):
    """Replace NaN/inf by None so reports stay strict JSON."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


# ------------------------------------------------------------ evaluation

def _safe(fn, *args) -> Optional[float]:
    try:
        return float(fn(*args))
    except (ValueError, ZeroDivisionError):
        return None


def evaluate_rows(rows: Sequence[dict], specs: dict[int, PromptSpec], pooled_tpra: bool = False) -> dict:
    """Per-prompt QWK / PRA / TPRA (and flag rates when present), macro-averaged.

    Rows from several folds may be passed together; they are evaluated as one
    set. QWK uses ``final`` when the rows carry it, else ``essay_score``;
    ranking uses ``coherence`` when present, else ``essay_scaled``.
    """
    ids = [r["id"] for r in rows]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate essay ids across prediction files")
    if not rows:
        raise ValueError("no prediction rows")
    qwk_key = "final" if "final" in rows[0] else ("essay_score" if "essay_score" in rows[0] else None)
    rank_key = "coherence" if "coherence" in rows[0] else "essay_scaled"
    per_prompt = {}
    for pid in sorted({int(r["prompt"]) for r in rows}):
        sub = [r for r in rows if int(r["prompt"]) == pid]
        real = [r for r in sub if not r["is_synthetic"]]
        entry = {"n_essays": len(real), "n_permutations": len(sub) - len(real), "qwk": None, "pra": None, "tpra": None}
        if qwk_key and real:
            if pid not in specs:
                raise ValueError(f"no prompt spec for prompt {pid}")
            spec = specs[pid]
            entry["qwk"] = _safe(qwk_from_scores, [r["gold"] for r in real], [r[qwk_key] for r in real],
                                 (int(spec.min_score), int(spec.max_score)))
        pool = pool_from_rows(sub, rank_key)
        entry["pra"] = _safe(pra, pool)
        entry["tpra"] = _safe(tpra, pool)
        if "flagged" in rows[0]:
            perm = [r["flagged"] for r in sub if r["is_synthetic"]]
            entry["flagged_permuted"] = float(np.mean(perm)) if perm else None
            entry["flagged_coherent"] = float(np.mean([r["flagged"] for r in real])) if real else None
        per_prompt[str(pid)] = entry
    macro = {key: macro_average([e[key] for e in per_prompt.values()])
             for key in ("qwk", "pra", "tpra", "flagged_permuted", "flagged_coherent")
             if any(key in e for e in per_prompt.values())}
    report = {"per_prompt": per_prompt, "macro": macro, "n_rows": len(rows)}
    if pooled_tpra:
        report["pooled_tpra"] = _safe(tpra, pool_from_rows(rows, rank_key))
    return report


# ------------------------------------------------------------- gradcheck

def gradcheck_suite(n_configs: int = 21, seed: int = 0, tolerance: float = 1e-4) -> list[dict]:
    """Finite-difference checks of the LC, AES and joint losses on random
    small configurations (dropout off)."""
    vocab = Vocab([f"t{i}" for i in range(6)])
    kinds = ("lc", "aes", "joint", "joint_no_share")
    results = []
    for i in range(n_configs):
        rng = np.random.default_rng([seed, i])
        kind = kinds[i % len(kinds)]
        k, d, dc, m = (int(x) for x in rng.integers(1, 4, 4))
        scale = 0.5
        batch = [[list(rng.integers(2, len(vocab), rng.integers(1, 4))) for _ in range(rng.integers(1, 5))]
                 for _ in range(int(rng.integers(1, 3)))]
        golds = rng.random(len(batch))
        flat = [[t for s in essay for t in s] for essay in batch]
        lc_cfg = LcConfig(k, d, dc, m, 0.0, scale)
        aes_cfg = AesConfig(k, d, scale)
        if kind == "lc":
            model = LcModel.init(vocab, lc_cfg, rng)
            f = lambda model=model, batch=batch, golds=golds: model.batch_loss(batch, golds)
        elif kind == "aes":
            model = AesModel.init(vocab, aes_cfg, rng)
            f = lambda model=model, flat=flat, golds=golds: ops.weighted_squared_error(
                model.forward(flat)[1], golds, np.full(len(flat), 1.0 / len(flat)))
        else:
            model = JointModel.init(vocab, JointConfig(aes_cfg, lc_cfg, share_embeddings=kind == "joint"), rng)
            coh = np.where(rng.random(len(batch)) < 0.5, 0.0, golds)
            f = lambda model=model, batch=batch, flat=flat, golds=golds, coh=coh: model.batch_loss(
                flat, batch, golds, coh)
        params = model.parameters()
        for p in params:
            if p.name.endswith("gate_biases"):
                p.data[:] = rng.uniform(-scale, scale, p.shape)
        err = grad_check(f, params)
        results.append({"index": i, "kind": kind, "embedding_dim": k, "hidden_size": d, "cnn_size": dc,
                        "window": m, "essays": len(batch), "max_rel_error": err, "passed": err < tolerance})
    return results
