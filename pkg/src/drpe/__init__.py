"""Role-play pairwise summarization evaluation.

A candidate summary is compared against a reference summary by prompting a
language model to impersonate a panel of judge and reader personas in one
batched completion. Each persona's vote is weighted by its generation
confidence (the geometric mean token probability over its reason and vote),
the weighted votes aggregate into a per-pair score, and the harness
correlates that score, alongside ROUGE/BLEU baselines, with human labels.
"""

from .backend import (
    Backend,
    CachingBackend,
    CompletionRequest,
    CompletionResponse,
    FinishReason,
    LiveBackend,
    MockBackend,
    ResponseCache,
    cache_key,
)
from .baselines import rouge_l, rouge_n, sent_bleu, tokenize
from .comparator import (
    ComparisonTask,
    PresentationOrder,
    PromptTemplate,
    RoleVerdict,
    Vote,
    build_batch_prompt,
    confidence,
    parse_batch_response,
)
from .datasets import (
    AnnotatorVote,
    Candidate,
    DatasetSchema,
    EvalRecord,
    HumanLabel,
    human_score,
    load_dataset,
    majority_filter,
    summeval_select,
)
from .dedup import (
    ClusteringResult,
    HashingEmbedder,
    RemoteEmbedder,
    embed_role,
    kmeans,
    select_representatives,
)
from .harness import (
    EvaluationReport,
    RunConfig,
    pearson_abs,
    run_evaluation,
    sweep,
)
from .roles import (
    PromptKind,
    Role,
    RoleGenConfig,
    RoleKind,
    RoleOrigin,
    build_role_prompt,
    generate_dynamic_roles,
    merge_roles,
    parse_roles,
    static_roles,
)
from .scorer import PairScore, RoleContribution, drpe_score, role_score

__version__ = "0.1.0"
