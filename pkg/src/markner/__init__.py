"""Two-stage biomedical named entity recognition.

Stage 1 asks a chat LLM to echo a sentence with entity spans wrapped in
markers and parses the output back into character offsets; stage 2
assigns each candidate a category by knowledge-base vote or by prompting
again with retrieved (name, category) references, with an OTHER rejection
class. Includes a strict-match evaluation harness and a CLI.
"""

from .corpus import (
    Corpus,
    FewShotExample,
    GoldMention,
    OTHER,
    Sentence,
    Span,
    load_corpus,
    sample_fewshot,
    slice_text,
)
from .errors import (
    GatewayError,
    PipelineError,
    ProviderRejection,
    TemplateError,
    TransportError,
    ValidationError,
)
from .evaluation import Counts, EvalResult, compute_prf, f1_score, match_strict, render_report
from .knowledge_base import (
    KbEntry,
    KbIndex,
    Neighbor,
    attach_embeddings,
    build_index,
    cosine_similarity,
    fallback_embed,
    load_dictionary,
    retrieve_top_k,
    sample_entries,
)
from .llm_gateway import (
    CompletionRequest,
    CompletionResponse,
    LlmGateway,
    MockRule,
    Prompt,
    RequestOptions,
    cache_key,
    mock_provider,
)
from .markers import MarkerConfig
from .orchestrator import PipelineConfig, RunManifest, ablation_sweep, load_config, run_pipeline
from .span_extraction import (
    CandidateSpan,
    encode_marked,
    extract_spans_for_type,
    merge_candidates,
    parse_marked,
    render_span_prompt,
)
from .type_prediction import (
    CategoryMap,
    KnowledgeContext,
    TypedEntity,
    filter_other,
    parse_type_response,
    predict_type,
    render_knowledge_prompt,
    render_retype_prompt,
    vote_type,
)

__version__ = "0.1.0"
