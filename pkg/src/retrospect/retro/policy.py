"""Conditional categorical reflection policy over a template library.

The policy scores template ``k`` for prompt ``x`` with ``phi(x) . theta[:, k]``,
i.e. a linear model over the joint features ``phi(x) (x) onehot(k)``, and
normalizes with a softmax. Log-probabilities, their gradients and the KL to
the frozen reference are all exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import RetrospectError
from ..seeding import rng as make_rng
from .prompt import N_FEATURES, ReflectionPrompt, extract_features, template_slots
from .templates import TemplateLibrary, default_library

CHECKPOINT_MAGIC = "# retrospect-checkpoint v1"


class NumericalError(RetrospectError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvalidTemperature(RetrospectError, ValueError):
    pass


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RetroPolicy:
    theta: np.ndarray
    reference_theta: np.ndarray
    library: TemplateLibrary = field(default_factory=default_library)

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "reference_theta", _frozen(self.reference_theta))
        expected = (N_FEATURES, len(self.library))
        if self.theta.shape != expected or self.reference_theta.shape != expected:
            raise ValueError(f"theta must have shape {expected}")

    @classmethod
    def uniform(cls, library: TemplateLibrary | None = None) -> "RetroPolicy":
        library = library or default_library()
        zeros = np.zeros((N_FEATURES, len(library)))
        return cls(zeros, zeros, library)

    @classmethod
    def from_theta(cls, theta, library: TemplateLibrary | None = None) -> "RetroPolicy":
        """New policy whose frozen reference is a copy of ``theta``."""
        return cls(theta, theta, library or default_library())

    def with_theta(self, theta) -> "RetroPolicy":
        return RetroPolicy(theta, self.reference_theta, self.library)

    @property
    def n_templates(self) -> int:
        return len(self.library)

    def render(self, response_id: int, prompt: ReflectionPrompt | str) -> str:
        return self.library[response_id].render(template_slots(prompt))


def features(prompt: ReflectionPrompt | str | np.ndarray) -> np.ndarray:
    if isinstance(prompt, np.ndarray):
        return prompt
    return extract_features(prompt)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def _check_finite(theta: np.ndarray) -> None:
    if not np.all(np.isfinite(theta)):
        raise NumericalError("theta contains non-finite values")


def probs_from_theta(theta: np.ndarray, phi: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    _check_finite(theta)
    return softmax((phi @ theta) / temperature)


def policy_probs(policy: RetroPolicy, prompt: ReflectionPrompt | str) -> np.ndarray:
    return probs_from_theta(policy.theta, features(prompt))


def logprob(theta: np.ndarray, phi: np.ndarray, response_id: int) -> float:
    _check_finite(theta)
    return float(log_softmax(phi @ theta)[response_id])


def grad_logprob(theta: np.ndarray, phi: np.ndarray, response_id: int) -> np.ndarray:
    """d log pi(y|x) / d theta = phi (x) (onehot(y) - pi)."""
    p = probs_from_theta(theta, phi)
    onehot = np.zeros_like(p)
    onehot[response_id] = 1.0
    return np.outer(phi, onehot - p)


def _draw(p: np.ndarray, gen: np.random.Generator) -> int:
    u = gen.random()
    return min(int(np.searchsorted(np.cumsum(p), u, side="right")), len(p) - 1)


def sample_with(policy: RetroPolicy, prompt: ReflectionPrompt | str, temperature: float,
                gen: np.random.Generator) -> tuple[int, str, float]:
    """One draw from an existing generator; used for multi-draw streams."""
    if not temperature > 0:
        raise InvalidTemperature(f"temperature must be > 0, got {temperature}")
    phi = features(prompt)
    _check_finite(policy.theta)
    logp = log_softmax((phi @ policy.theta) / temperature)
    k = _draw(np.exp(logp), gen)
    return k, policy.render(k, prompt), float(logp[k])


def sample_response(policy: RetroPolicy, prompt: ReflectionPrompt | str, temperature: float,
                    rng_seed: int) -> tuple[int, str, float]:
    """Sample a template id; the returned log-prob is at the sampling temperature."""
    return sample_with(policy, prompt, temperature, make_rng(rng_seed))


def kl_from_logits(logits_p: np.ndarray, logits_q: np.ndarray) -> float:
    """KL(softmax(p) || softmax(q)), clamped at 0 against rounding."""
    logp = log_softmax(np.asarray(logits_p, dtype=np.float64))
    logq = log_softmax(np.asarray(logits_q, dtype=np.float64))
    return max(float(np.sum(np.exp(logp) * (logp - logq))), 0.0)


def kl_to_reference(policy: RetroPolicy, prompt: ReflectionPrompt | str) -> float:
    phi = features(prompt)
    _check_finite(policy.theta)
    return kl_from_logits(phi @ policy.theta, phi @ policy.reference_theta)


# checkpoints: header lines, then one float per line written with repr (round-trips exactly)

def save_array(path: str | Path, kind: str, arrays: dict[str, np.ndarray]) -> None:
    lines = [CHECKPOINT_MAGIC, f"# kind={kind}"]
    for name, a in arrays.items():
        lines.append(f"# array={name} shape={'x'.join(str(d) for d in a.shape)}")
        lines.extend(repr(float(v)) for v in np.asarray(a, dtype=np.float64).ravel())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_array(path: str | Path, kind: str) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a retrospect checkpoint")
    if lines[1] != f"# kind={kind}":
        raise ValueError(f"{path} holds {lines[1][2:]}, expected kind={kind}")
    arrays: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        header = dict(part.split("=", 1) for part in lines[i][2:].split())
        shape = tuple(int(d) for d in header["shape"].split("x"))
        n = int(np.prod(shape))
        arrays[header["array"]] = np.array([float(v) for v in lines[i + 1:i + 1 + n]]).reshape(shape)
        i += 1 + n
    return arrays


def save_policy(policy: RetroPolicy, path: str | Path) -> None:
    save_array(path, "policy", {"theta": policy.theta, "reference": policy.reference_theta})


def load_policy(path: str | Path, library: TemplateLibrary | None = None) -> RetroPolicy:
    arrays = load_array(path, "policy")
    return RetroPolicy(arrays["theta"], arrays["reference"], library or default_library())
