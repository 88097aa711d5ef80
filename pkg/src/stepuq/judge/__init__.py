from .client import GREEDY_INDEX, P_TRUE_INDEX, ChatClient, ScriptedClient, TransportError, script_entry
from .parsing import (
    Completion,
    TokenLogprob,
    Verdict,
    extract_class_probs,
    normalize_token,
    parse_response,
    to_sample,
)
from .prompts import NOCOT_VERSION, TEMPLATE_VERSION, PromptBundle, render_p_true_prompt, render_prompt
from .sampling import (
    JudgeConfig,
    SampleStore,
    StepSamplingError,
    load_verifications,
    predicted_label,
    sample_step,
    solution_reward,
)

__all__ = [
    "GREEDY_INDEX",
    "P_TRUE_INDEX",
    "ChatClient",
    "Completion",
    "JudgeConfig",
    "NOCOT_VERSION",
    "PromptBundle",
    "SampleStore",
    "ScriptedClient",
    "StepSamplingError",
    "TEMPLATE_VERSION",
    "TokenLogprob",
    "TransportError",
    "Verdict",
    "extract_class_probs",
    "load_verifications",
    "normalize_token",
    "parse_response",
    "predicted_label",
    "render_p_true_prompt",
    "render_prompt",
    "sample_step",
    "script_entry",
    "solution_reward",
    "to_sample",
]
