"""Differentially private retrieval-augmented generation.

Token-by-token voting among generators fed disjoint shards of the retrieved
documents, a private top-1 selector over the vote histogram, a noisy
threshold gate that spends budget only on knowledge-bearing tokens, and an
evaluation harness for utility and empirical privacy.
"""

from .accountant import (
    CompositionPlan,
    CompositionRule,
    EventKind,
    PrivacyLedger,
    advanced_max,
    max_compositions,
    sequential_max,
)
from .engine import (
    Algorithm,
    GenerationTrace,
    HaltReason,
    RunConfig,
    StepRecord,
    run_algorithm,
    run_dp_sparse_vote_rag,
    run_dp_vote_rag,
    run_non_rag,
    run_vote_rag,
    write_trace,
)
from .evaluation import (
    ExperimentConfig,
    Membership,
    MiaExample,
    QaExample,
    RocCurve,
    bleu_precision,
    match_accuracy,
    roc_auc,
    run_experiment,
    s2mia_score,
)
from .generation import (
    EOS_SURFACE,
    GenerationContext,
    NgramGenerator,
    PromptRendering,
    RemoteGenerator,
    ScriptedGenerator,
    Token,
    Vocabulary,
    train_ngram,
)
from .mechanisms import (
    LimitedDomainConfig,
    NoisyThresholdState,
    PrivacyBudget,
    TokenHistogram,
    Verdict,
    above_threshold_init,
    above_threshold_query,
    limited_domain_top1,
    sample_gumbel,
    sample_laplace,
)
from .retrieval import (
    Corpus,
    Document,
    RetrievalResult,
    TfidfIndex,
    VoterPartition,
    index_corpus,
    partition,
    retrieve,
)
from .seeding import derive_rng, derive_seed

__all__ = [
    "Algorithm",
    "CompositionPlan",
    "CompositionRule",
    "Corpus",
    "Document",
    "EOS_SURFACE",
    "EventKind",
    "ExperimentConfig",
    "GenerationContext",
    "GenerationTrace",
    "HaltReason",
    "LimitedDomainConfig",
    "Membership",
    "MiaExample",
    "NgramGenerator",
    "NoisyThresholdState",
    "PrivacyBudget",
    "PrivacyLedger",
    "PromptRendering",
    "QaExample",
    "RemoteGenerator",
    "RetrievalResult",
    "RocCurve",
    "RunConfig",
    "ScriptedGenerator",
    "StepRecord",
    "TfidfIndex",
    "Token",
    "TokenHistogram",
    "Verdict",
    "Vocabulary",
    "VoterPartition",
    "above_threshold_init",
    "above_threshold_query",
    "advanced_max",
    "bleu_precision",
    "derive_rng",
    "derive_seed",
    "index_corpus",
    "limited_domain_top1",
    "match_accuracy",
    "max_compositions",
    "partition",
    "retrieve",
    "roc_auc",
    "run_algorithm",
    "run_dp_sparse_vote_rag",
    "run_dp_vote_rag",
    "run_experiment",
    "run_non_rag",
    "run_vote_rag",
    "s2mia_score",
    "sample_gumbel",
    "sample_laplace",
    "sequential_max",
    "train_ngram",
    "write_trace",
]
