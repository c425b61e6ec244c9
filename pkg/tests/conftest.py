"""Shared fixtures.

The trained toy checkpoint and corpus are expensive (minutes), so they are
cached under build/test_cache keyed by the training recipe; training is
deterministic, so cached and fresh runs are identical. Delete the cache
directory to force a retrain.
"""
from __future__ import annotations

import json
import os
import time

import numpy as np
import pytest

from momo.denoiser import (Denoiser, DenoiserConfig, init_weights, load_checkpoint,
                           save_checkpoint)
from momo.diffusion import TrainConfig, build_schedule, train
from momo.motion import default_skeleton, feature_size
from momo.synthgen import build_corpus, corpus_vocab, load_corpus, save_corpus

CACHE_DIR = os.path.join(os.path.dirname(__file__), "..", "build", "test_cache")

TOY_TRAIN = TrainConfig(batch_size=16, lr=3e-4, steps=8000, cond_dropout=0.1,
                        seed=10, decay_at=0.8, final_lr_scale=0.1)
TOY_RECIPE = {
    "corpus_size": 240, "corpus_seed": 0, "jitter": 0.02,
    "layers": 4, "dim": 64, "heads": 4, "ff_dim": 256, "diffusion_steps": 100,
    "batch_size": TOY_TRAIN.batch_size, "lr": TOY_TRAIN.lr,
    "steps": TOY_TRAIN.steps, "cond_dropout": TOY_TRAIN.cond_dropout,
    "decay_at": TOY_TRAIN.decay_at, "final_lr_scale": TOY_TRAIN.final_lr_scale,
    "train_seed": TOY_TRAIN.seed, "init_seed": 10,
}


def toy_config() -> DenoiserConfig:
    return DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(8),
                          layers=4, dim=64, heads=4, ff_dim=256, steps=100)


@pytest.fixture(scope="session")
def corpus240():
    os.makedirs(CACHE_DIR, exist_ok=True)
    marker = os.path.join(CACHE_DIR, "corpus240", "index.json")
    if os.path.exists(marker):
        return load_corpus(os.path.join(CACHE_DIR, "corpus240"))
    corpus = build_corpus(240, seed=0, jitter=0.02)
    save_corpus(corpus, os.path.join(CACHE_DIR, "corpus240"))
    return corpus


@pytest.fixture(scope="session")
def toy_model(corpus240):
    """Trained 4-layer toy checkpoint plus its training record."""
    os.makedirs(CACHE_DIR, exist_ok=True)
    ckpt_path = os.path.join(CACHE_DIR, "toy.ckpt")
    record_path = os.path.join(CACHE_DIR, "toy_train_record.json")
    if os.path.exists(ckpt_path) and os.path.exists(record_path):
        with open(record_path, "r", encoding="utf-8") as fh:
            record = json.load(fh)
        if record.get("recipe") == TOY_RECIPE:
            return load_checkpoint(ckpt_path), record

    config = toy_config()
    model = Denoiser(config, init_weights(config, seed=10), default_skeleton())
    schedule = build_schedule(100, "cosine")
    data = [(s.motion, s.text) for s in corpus240.split("train")]
    t0 = time.time()
    result = train(model, data, schedule, TOY_TRAIN, log_every=50)
    elapsed = time.time() - t0
    save_checkpoint(ckpt_path, model)
    record = {"recipe": TOY_RECIPE, "train_seconds": elapsed,
              "loss_curve": result.loss_curve}
    with open(record_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)
    return load_checkpoint(ckpt_path), record


@pytest.fixture(scope="session")
def schedule100():
    return build_schedule(100, "cosine")


@pytest.fixture(scope="session")
def tiny_model():
    """Small untrained model for fast architectural tests."""
    config = DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(8),
                            layers=3, dim=32, heads=4, ff_dim=48, steps=20)
    return Denoiser(config, init_weights(config, seed=7), default_skeleton())


@pytest.fixture(scope="session")
def schedule20():
    return build_schedule(20, "cosine")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
