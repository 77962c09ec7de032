"""Watermark radioactivity toolkit.

Embed decoding-time watermarks in text sampled from small n-gram models,
train students on contaminated mixtures, and detect the watermark's trace
in the student with exact, calibrated p-values.
"""

from .dedup import (
    CLOSED,
    DEFAULT_SPAN,
    OPEN,
    Candidate,
    FilterSet,
    InputIntegrityError,
    Tape,
    build_filter,
    canonical_dedup,
    load_filter,
    save_filter,
    tape_admit,
)
from .hashing import ConfigError, SecretKey, extend_hash, window_hash
from .models import (
    MixSpec,
    NGramModel,
    SamplingConfig,
    TextSampler,
    generate,
    generate_corpus,
    load_corpus,
    load_model,
    make_teacher,
    mix_dataset,
    save_corpus,
    save_model,
    train_ngram,
    zipf_markov_corpus,
)
from .pipelines import (
    DetectionInterrupted,
    DetectionReport,
    combine_distributions,
    contaminated_student,
    derive_run_key,
    detect_closed,
    detect_open,
    mia_detect,
    parse_scenario,
    run_detection,
    run_scenario,
)
from .remote import (
    AuthError,
    CapabilityError,
    ProtocolError,
    RemoteError,
    RemoteModel,
    TransportError,
)
from .schemes import (
    AK,
    KGW,
    MPAC,
    GreenlistCache,
    WatermarkConfig,
    aaronson_sample,
    aaronson_score,
    kgw_bias_logits,
    kgw_score,
    mpac_embed_bias,
    mpac_extract,
    score_batch,
)
from .stats import (
    StatError,
    TestResult,
    binomial_pvalue,
    fisher_combine,
    gamma_pvalue,
    ks_two_sample,
    log_binomial_pvalue,
    log_gamma_pvalue,
)

__all__ = [
    "AK",
    "AuthError",
    "CLOSED",
    "Candidate",
    "CapabilityError",
    "ConfigError",
    "DEFAULT_SPAN",
    "DetectionInterrupted",
    "DetectionReport",
    "FilterSet",
    "GreenlistCache",
    "InputIntegrityError",
    "KGW",
    "MPAC",
    "MixSpec",
    "NGramModel",
    "OPEN",
    "ProtocolError",
    "RemoteError",
    "RemoteModel",
    "SamplingConfig",
    "SecretKey",
    "StatError",
    "Tape",
    "TestResult",
    "TextSampler",
    "TransportError",
    "WatermarkConfig",
    "aaronson_sample",
    "aaronson_score",
    "binomial_pvalue",
    "build_filter",
    "canonical_dedup",
    "combine_distributions",
    "contaminated_student",
    "derive_run_key",
    "detect_closed",
    "detect_open",
    "extend_hash",
    "fisher_combine",
    "gamma_pvalue",
    "generate",
    "generate_corpus",
    "kgw_bias_logits",
    "kgw_score",
    "ks_two_sample",
    "load_corpus",
    "load_filter",
    "load_model",
    "log_binomial_pvalue",
    "log_gamma_pvalue",
    "make_teacher",
    "mia_detect",
    "mix_dataset",
    "mpac_embed_bias",
    "mpac_extract",
    "parse_scenario",
    "run_detection",
    "run_scenario",
    "save_corpus",
    "save_filter",
    "save_model",
    "score_batch",
    "tape_admit",
    "train_ngram",
    "window_hash",
    "zipf_markov_corpus",
]
