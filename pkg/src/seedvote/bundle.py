"""Save and load trained models.

A head file is one JSON document holding the head type, its seed, the
training-config echo, scalar hyperparameters and its arrays. Arrays are
stored as base64 of little-endian IEEE-754 float64 bytes, so a load/save
round trip is bit-exact.

A bundle is a directory::

    manifest.json        kind, n, seeds, head file list (authoritative for n)
    config.json          model, train and encoder configuration
    heads/head_00.json   one head file per member
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from seedvote.encoder import EncoderConfig
from seedvote.ensemble import BnnConfig, EnsembleConfig, EnsembleModel, ModelConfig, MultiTaskConfig
from seedvote.errors import InputError
from seedvote.fileio import dumps_json, read_text, write_atomic
from seedvote.heads import BnnParams, HeadParams, MultiTaskParams, TrainConfig

FORMAT = "seedvote-bundle/1"
HEAD_FORMAT = "seedvote-head/1"


def encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes(order="C")).decode("ascii")}


def decode_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(doc["shape"])


def head_document(head, seed: int, train_config: TrainConfig) -> dict:
    if isinstance(head, HeadParams):
        kind, scalars = "linear", {}
    elif isinstance(head, BnnParams):
        kind = "bnn"
        scalars = {"prior_sigma": head.prior_sigma, "kl_weight": head.kl_weight,
                   "s_train": head.s_train, "s_pred": head.s_pred}
    elif isinstance(head, MultiTaskParams):
        kind, scalars = "multitask", {"loss_weight": head.loss_weight}
    else:
        raise TypeError(f"unsupported head type {type(head).__name__}")
    return {
        "format": HEAD_FORMAT,
        "head_type": kind,
        "seed": seed,
        "byteorder": "little",
        "dtype": "float64",
        "train_config": asdict(train_config),
        "scalars": scalars,
        "arrays": {k: encode_array(v) for k, v in head.arrays().items()},
    }


def head_from_document(doc: dict):
    if doc.get("format") != HEAD_FORMAT:
        raise InputError(f"not a head document (format {doc.get('format')!r})")
    arrays = {k: decode_array(v) for k, v in doc["arrays"].items()}
    kind, sc = doc["head_type"], doc["scalars"]
    if kind == "linear":
        return HeadParams.from_arrays(arrays)
    if kind == "bnn":
        return BnnParams(arrays["mu_W"], arrays["rho_W"], arrays["mu_b"], arrays["rho_b"], **sc)
    if kind == "multitask":
        return MultiTaskParams(HeadParams(arrays["W"], arrays["b"]), arrays["w_g"], float(arrays["b_g"]), **sc)
    raise InputError(f"unknown head type {kind!r}")


def save_head(path, head, seed: int, train_config: TrainConfig = TrainConfig()) -> Path:
    return write_atomic(path, dumps_json(head_document(head, seed, train_config)))


def load_head(path):
    return head_from_document(json.loads(read_text(path, "head file")))


def config_document(model: EnsembleModel) -> dict:
    return {
        "model": asdict(model.config),
        "train": asdict(model.train_config),
        "encoder": asdict(model.encoder_config),
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    ens = dict(d["ensemble"])
    if ens.get("head_seeds") is not None:
        ens["head_seeds"] = tuple(ens["head_seeds"])
    return ModelConfig(
        kind=d["kind"],
        ensemble=EnsembleConfig(**ens),
        bnn=BnnConfig(**d["bnn"]),
        multitask=MultiTaskConfig(**d["multitask"]),
    )


def encoder_config_from_dict(d: dict) -> EncoderConfig:
    return EncoderConfig(**{**d, "ngram_orders": tuple(d["ngram_orders"])})


def save_bundle(model: EnsembleModel, directory) -> Path:
    directory = Path(directory)
    files = []
    for i, (head, seed) in enumerate(zip(model.heads, model.seeds)):
        rel = f"heads/head_{i:02d}.json"
        save_head(directory / rel, head, seed, model.train_config)
        files.append(rel)
    write_atomic(directory / "config.json", dumps_json(config_document(model)))
    manifest = {"format": FORMAT, "kind": model.kind, "n": model.n, "seeds": list(model.seeds), "heads": files}
    write_atomic(directory / "manifest.json", dumps_json(manifest))
    return directory


def load_bundle(directory) -> EnsembleModel:
    directory = Path(directory)
    manifest = json.loads(read_text(directory / "manifest.json", "bundle manifest"))
    if manifest.get("format") != FORMAT:
        raise InputError(f"{directory}: not a model bundle")
    if len(manifest["heads"]) != manifest["n"] or len(manifest["seeds"]) != manifest["n"]:
        raise InputError(f"{directory}: manifest lists an inconsistent number of heads")
    cfg = json.loads(read_text(directory / "config.json", "bundle config"))
    heads = tuple(load_head(directory / rel) for rel in manifest["heads"])
    return EnsembleModel(
        kind=manifest["kind"],
        heads=heads,
        seeds=tuple(manifest["seeds"]),
        config=model_config_from_dict(cfg["model"]),
        encoder_config=encoder_config_from_dict(cfg["encoder"]),
        train_config=TrainConfig(**cfg["train"]),
    )
