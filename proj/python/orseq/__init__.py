"""Sequence-to-sequence training with oracle-sampled decoder contexts."""

from ._core import (
    Error,
    Model,
    Vocabulary,
    __version__,
    corpus_bleu,
    gen_synthetic,
    perturbed_argmax,
    run_cli,
    sentence_bleu,
    truth_prob,
)

__all__ = [
    "Error",
    "Model",
    "Vocabulary",
    "corpus_bleu",
    "gen_synthetic",
    "perturbed_argmax",
    "run_cli",
    "sentence_bleu",
    "truth_prob",
]
