"""evisynth: an evidence-synthesis toolkit.

Turns structured clinical-study outcome data into fixed-effect estimates and
conclusions, parses model extraction responses, scores them with rule-based
rewards and batch metrics, renders deterministic forest plots, and talks to a
completion endpoint for batch extraction.
"""

from .corpus import (
    CorpusError,
    CorpusIssue,
    PredictionRecord,
    StudyRecord,
    join_predictions,
    load_corpus,
    load_predictions,
    save_corpus,
    save_predictions,
    scan_corpus,
)
from .errors import ValidationError
from .forest import (
    PlotRow,
    PlotSpec,
    make_plot_spec,
    normalize_weights,
    plot_table,
    pool_fixed_effect,
    render_svg,
    value_to_x,
)
from .gateway import (
    CompletionTimeout,
    GatewayConfig,
    GatewayError,
    HTTPStatusError,
    MalformedResponse,
    NetworkError,
    build_prompt,
    complete,
    run_batch,
)
from .metrics import (
    EvalReport,
    StudyScore,
    aggregate,
    report_to_dict,
    report_to_json,
    report_to_text,
    score_study,
)
from .outcomes import (
    BinaryArms,
    Conclusion,
    ContinuousArms,
    EffectEstimate,
    OutcomeData,
    Scale,
    canonical_fields,
    derive_conclusion,
    estimate,
    estimate_binary,
    estimate_continuous,
    outcome_type_of,
)
from .rewards import (
    GroupRewards,
    RewardBreakdown,
    TokenTrace,
    combined_reward,
    correctness_reward,
    exact_reward,
    format_reward,
    group_advantages,
    grpo_objective,
    kl_per_token,
    match_vector,
    sft_nll,
    thought_format_reward,
)
from .schema import (
    ExtractionOutput,
    SchemaError,
    SchemaErrorKind,
    outcome_data_from_mapping,
    outcome_data_to_mapping,
    parse_response,
    serialize_outcome,
    validate_format,
)

__version__ = "0.1.0"
