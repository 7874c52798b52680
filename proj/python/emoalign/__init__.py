# Copyright (c) 2026, The emoalign Authors
# SPDX-License-Identifier: Apache-2.0
"""Emotion-label taxonomy alignment and zero-shot prediction."""

import json

from ._emoalign import (
    ArgumentError,
    Checkpoint,
    DegenerateError,
    DimensionError,
    EmoalignError,
    FormatError,
    IoError,
    NumericError,
    ValidationError,
    estimate_bandwidth,
    init_checkpoint,
    load_checkpoint,
    macro_f1,
    mean_shift,
    rank_labels,
    read_embedding_matrix,
    reg_loss,
    run_cli,
    triplet_align_loss,
    write_embedding_matrix,
)

__all__ = [
    "ArgumentError",
    "Checkpoint",
    "DegenerateError",
    "DimensionError",
    "EmoalignError",
    "FormatError",
    "IoError",
    "NumericError",
    "ValidationError",
    "checkpoint_config",
    "checkpoint_metadata",
    "estimate_bandwidth",
    "init_checkpoint",
    "load_checkpoint",
    "macro_f1",
    "mean_shift",
    "predict",
    "rank_labels",
    "read_embedding_matrix",
    "reg_loss",
    "run_cli",
    "triplet_align_loss",
    "write_embedding_matrix",
]


def checkpoint_config(ckpt):
    """Projector configuration of a checkpoint as a dict."""
    return json.loads(ckpt.config_json)


def checkpoint_metadata(ckpt):
    """Metadata stored in a checkpoint header as a dict."""
    return json.loads(ckpt.metadata_json)


def predict(ckpt, features, label_embeddings, label_names, k):
    """Top-k label names and cosine distances for one feature matrix."""
    indices, distances = rank_labels(ckpt.project(features), label_embeddings, k)
    return [label_names[i] for i in indices], distances
