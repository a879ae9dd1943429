"""figclass: turn any question-answering model endpoint into a classifier
over large label sets via binary, open-ended, and tournament-style
multiple-choice questioning."""

from .backend import (
    BackendConfig,
    Figure,
    HashEmbeddingBackend,
    HttpBackend,
    ModelResponse,
    OracleBackend,
    ScriptedBackend,
    make_oracle_backend,
)
from .matching import ConceptMatcher, EmbeddingCache, cosine
from .prompts import (
    OptionList,
    PromptTemplates,
    Question,
    QuestionType,
    render_binary,
    render_multiple_choice,
    render_open,
    sample_options,
)
from .strategies import (
    ClassificationResult,
    TournamentPlan,
    classify_bc,
    classify_mc_single,
    classify_mc_ts,
    classify_oc,
    parse_binary,
    parse_choice,
    plan_tournament,
)
from .taxonomy import (
    Aspect,
    Concept,
    ConceptSet,
    KeywordRule,
    cluster_object_concepts,
    filter_min_support,
    load_concepts,
    map_projection,
)

__version__ = "0.1.0"
