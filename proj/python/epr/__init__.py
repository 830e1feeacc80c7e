# SPDX-License-Identifier: Apache-2.0
"""Emotion profile refinery: segment-level speech emotion classification with iterative soft labels."""

from ._epr import (
    ConfigError,
    DataError,
    NumericError,
    audit_run,
    combine_with_hard,
    cross_entropy,
    entropy,
    evaluate,
    export_ep,
    generate_corpus,
    kl_divergence,
    log_mel_spectrogram,
    resolve_config,
    run,
    segment_duration_ms,
    unweighted_accuracy,
    weighted_accuracy,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "audit_run",
    "combine_with_hard",
    "cross_entropy",
    "entropy",
    "evaluate",
    "export_ep",
    "generate_corpus",
    "kl_divergence",
    "log_mel_spectrogram",
    "resolve_config",
    "run",
    "segment_duration_ms",
    "unweighted_accuracy",
    "weighted_accuracy",
]
