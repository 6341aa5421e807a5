"""Few-shot prompt-based binary classification of causal relations in text.

The toolkit reformulates the task as masked-word infilling: a template turns
a sentence into a prompt with one mask, a verbalizer maps the two classes to
label words, and the class probability is the softmax over just those two
words' mask logits.  On top sit demonstration-augmented prompting, automatic
template search, and ensemble fusion of cached predictions.
"""

from .classifier import (
    BaselineConfig,
    ClassProbabilities,
    Prediction,
    TrainConfig,
    baseline_finetune,
    classify,
    classify_corpus,
    finetune_prompt_model,
    linear_schedule,
    restricted_softmax,
    softmax_pair,
)
from .corpus import (
    ColumnSchema,
    FewShotSplit,
    Label,
    LabeledCorpus,
    LabeledInstance,
    load_corpus,
    load_split_manifest,
    make_fewshot_split,
    make_kfold,
    sample_eval_subset,
    write_split_manifest,
)
from .ensemble import (
    EnsembleResult,
    PredictionMatrix,
    average_probs,
    load_prediction_matrix,
    majority_vote,
    topn_fusion,
    write_prediction_cache,
)
from .evaluation import (
    ConfusionCounts,
    MetricsReport,
    confusion,
    consistency_check,
    f1_score,
    metrics,
)
from .gateway import (
    GatewayDescriptor,
    GatewayKind,
    HashEmbedder,
    HashMaskModel,
    HashSequenceClassifier,
    MaskLogits,
    StubTemplateGenerator,
    TableMaskModel,
    bind_verbalizer,
    generate_template_candidates,
)
from .prompting import (
    Demonstration,
    PromptBundle,
    Template,
    TemplateOrigin,
    Verbalizer,
    build_prompt_bundle,
    embed_corpus,
    fill_mask,
    instantiate,
    load_templates,
    sample_demonstrations,
)
from .template_search import (
    CandidateReport,
    GatewayBundle,
    SearchConfig,
    SearchResult,
    build_generation_inputs,
    rank_candidates,
    run_search,
)

__version__ = "0.1.0"
