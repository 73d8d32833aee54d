"""The retrospective policy: reflection prompts, templates, and the trainable categorical policy."""

from .policy import (
    InvalidTemperature,
    NumericalError,
    RetroPolicy,
    grad_logprob,
    kl_from_logits,
    kl_to_reference,
    load_policy,
    logprob,
    policy_probs,
    probs_from_theta,
    sample_response,
    sample_with,
    save_policy,
)
from .prompt import (
    FEATURE_NAMES,
    N_FEATURES,
    NotAFailure,
    ReflectionPrompt,
    build_reflection_prompt,
    extract_features,
    parse_prompt,
)
from .templates import Template, TemplateLibrary, default_library

__all__ = [
    "FEATURE_NAMES", "InvalidTemperature", "N_FEATURES", "NotAFailure", "NumericalError", "ReflectionPrompt",
    "RetroPolicy", "Template", "TemplateLibrary", "build_reflection_prompt", "default_library",
    "extract_features", "grad_logprob", "kl_from_logits", "kl_to_reference", "load_policy", "logprob",
    "parse_prompt", "policy_probs", "probs_from_theta", "sample_response", "sample_with", "save_policy",
]
