"""Agent policies: turn a residue context into a single-substitution proposal.

One policy spec is shared by all agents in a campaign. The LLM policy talks
to a chat-completion-style HTTP endpoint and falls back to the current
residue after exhausting retries, so a flaky endpoint can never corrupt the
search state. Deterministic policies exist so the whole engine is testable
offline; their randomness is seeded by (campaign seed, iteration, position).
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from .context import ResidueContext
from .core import DesignObjective, Proposal
from .memory import render_digest
from .tables import ALPHABET, ALPHABET_SET, PROPENSITY

log = logging.getLogger(__name__)

_BACKOFF_BASE_S = 1.0


class MalformedResponse(ValueError):
    """The endpoint reply did not contain a usable proposal object."""


class TransportError(RuntimeError):
    """The endpoint could not be reached or returned a non-success status."""


@dataclass(frozen=True)
class PromptBundle:
    """The five prompt sections every agent receives."""

    role_task: str
    local_context: str
    memory_section: str
    goal_energy: str
    output_schema: str

    def __post_init__(self):
        for name in ("role_task", "local_context", "memory_section",
                     "goal_energy", "output_schema"):
            if not getattr(self, name):
                raise ValueError(f"prompt section {name} is empty")

    def text(self) -> str:
        return "\n\n".join([self.role_task, self.local_context,
                            self.memory_section, self.goal_energy,
                            self.output_schema])


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str
    temperature: float = 0.7
    max_retries: int = 2
    timeout: float = 30.0
    api_key_env: str = "SEQSWARM_API_KEY"
    max_concurrent_requests: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class LlmPolicy:
    config: LlmEndpointConfig


@dataclass(frozen=True)
class PropensityPolicy:
    """Sample from a softmax over the target label's residue propensities."""

    target_ss: str
    temperature: float = 1.0

    def __post_init__(self):
        if self.target_ss not in ("H", "E", "L"):
            raise ValueError("target_ss must be one of H/E/L")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class KeepPolicy:
    """Always re-propose the current residue."""


@dataclass(frozen=True)
class RandomPolicy:
    """Uniform random residue; useful as an exploration baseline."""

    seed: int = 0


AgentPolicySpec = LlmPolicy | PropensityPolicy | KeepPolicy | RandomPolicy


def build_prompt(ctx: ResidueContext, objective: DesignObjective,
                 last_eval=None) -> PromptBundle:
    """Render the deterministic prompt for one agent.

    Spatial-neighbor distances are rounded to 0.1 Å; the memory digest is
    embedded verbatim via its fixed renderer.
    """
    role_task = (
        f"You are the design agent responsible for residue position {ctx.position} "
        f"(0-based) of a protein sequence. The residue currently at your position is "
        f"{ctx.current}. Propose the single amino acid that should occupy your "
        f"position in the next iteration; proposing the current residue keeps it."
    )

    lines = [f"Current residue: {ctx.current}"]
    if ctx.linear_neighbors:
        rendered = " ".join(f"{off:+d}:{aa}" for off, aa in ctx.linear_neighbors)
        lines.append(f"Linear neighbors (offset:residue): {rendered}")
    else:
        lines.append("Linear neighbors: none")
    if ctx.from_sentinel:
        lines.append("No folded structure yet (first iteration); no spatial contacts available.")
    elif ctx.spatial_neighbors:
        rendered = ", ".join(f"(position {j}, {dist:.1f} A)"
                             for j, dist in ctx.spatial_neighbors)
        lines.append(f"Spatial contacts from the last folded structure: {rendered}")
    else:
        lines.append("Spatial contacts from the last folded structure: none within cutoff")
    lines.append(f"Solvent exposure: {ctx.exposure}")
    lines.append(f"Secondary structure at your position: {ctx.ss_label} "
                 f"(window: {ctx.ss_window})")
    local_context = "\n".join(lines)

    memory_section = "Memory:\n" + render_digest(ctx.memory_digest)

    goal_lines = [f"Design objective: {objective.prompt_text}"]
    if last_eval is not None:
        goal_lines.append(f"Last evaluation: total energy {last_eval.total_energy:.3f}, "
                          f"objective score {last_eval.objective_score:.4f}")
    else:
        goal_lines.append("No evaluation has been performed yet.")
    goal_energy = "\n".join(goal_lines)

    output_schema = (
        'Respond with a JSON object with exactly two fields: '
        '{"reasoning": "<why>", "proposed_value": "<one amino acid letter>"}. '
        "proposed_value must be a single letter from ACDEFGHIKLMNPQRSTVWY."
    )

    return PromptBundle(role_task=role_task, local_context=local_context,
                        memory_section=memory_section, goal_energy=goal_energy,
                        output_schema=output_schema)


def parse_llm_reply(content: str) -> tuple[str, str]:
    """Extract (reasoning, proposed_value) from possibly noisy model output.

    Accepts surrounding prose, takes the first well-formed JSON object with
    string `reasoning` and `proposed_value` fields, and truncates a long
    proposed_value to its first alphabet-member character.
    """
    depth = 0
    start = None
    for idx, ch in enumerate(content):
        if ch == "{":
            if depth == 0:
                start = idx
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(content[start:idx + 1])
                    except json.JSONDecodeError:
                        start = None
                        continue
                    if (isinstance(obj, dict)
                            and isinstance(obj.get("reasoning"), str)
                            and isinstance(obj.get("proposed_value"), str)):
                        value = obj["proposed_value"].strip().upper()
                        letter = next((c for c in value if c in ALPHABET_SET), None)
                        if letter is None:
                            raise MalformedResponse(
                                f"proposed_value {obj['proposed_value']!r} has no valid residue")
                        return obj["reasoning"], letter
                    start = None
    raise MalformedResponse("no proposal object found in reply")


def _call_endpoint(cfg: LlmEndpointConfig, prompt_text: str) -> str:
    headers = {}
    key = os.environ.get(cfg.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        resp = requests.post(
            cfg.base_url,
            json={"model": cfg.model_name,
                  "messages": [{"role": "user", "content": prompt_text}],
                  "temperature": cfg.temperature},
            headers=headers, timeout=cfg.timeout)
        resp.raise_for_status()
        body = resp.json()
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected response shape: {exc}") from exc


def _llm_propose(policy: LlmPolicy, bundle: PromptBundle,
                 ctx: ResidueContext, sleep=time.sleep) -> Proposal:
    cfg = policy.config
    last_error = None
    for attempt in range(cfg.max_retries + 1):
        try:
            content = _call_endpoint(cfg, bundle.text())
            reasoning, letter = parse_llm_reply(content)
            return Proposal(position=ctx.position, proposed_value=letter,
                            reasoning=reasoning)
        except (TransportError, MalformedResponse) as exc:
            last_error = exc
            if attempt < cfg.max_retries:
                sleep(_BACKOFF_BASE_S * (2 ** attempt))
    log.warning("position %d: falling back to current residue after %s",
                ctx.position, last_error)
    return Proposal(position=ctx.position, proposed_value=ctx.current,
                    reasoning=f"fallback: {last_error}", fallback=True)


def _propensity_weights(target_ss: str, temperature: float) -> np.ndarray:
    values = np.array([PROPENSITY[target_ss][aa] for aa in ALPHABET])
    if temperature < 1e-9:
        weights = np.zeros(len(ALPHABET))
        weights[int(np.argmax(values))] = 1.0
        return weights
    scaled = values / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def propose(policy: AgentPolicySpec, bundle: PromptBundle, ctx: ResidueContext,
            rng_seed, sleep=time.sleep) -> Proposal:
    """Produce one proposal for ctx.position under the given policy.

    rng_seed is any numpy-acceptable seed; the engine passes the tuple
    (campaign_seed, iteration, position) so deterministic policies are
    reproducible per slot.
    """
    if isinstance(policy, KeepPolicy):
        return Proposal(position=ctx.position, proposed_value=ctx.current,
                        reasoning="keep")
    if isinstance(policy, RandomPolicy):
        seed = (policy.seed, *rng_seed) if isinstance(rng_seed, tuple) else rng_seed
        rng = np.random.default_rng(seed)
        letter = ALPHABET[int(rng.integers(len(ALPHABET)))]
        return Proposal(position=ctx.position, proposed_value=letter,
                        reasoning="uniform random draw")
    if isinstance(policy, PropensityPolicy):
        rng = np.random.default_rng(rng_seed)
        weights = _propensity_weights(policy.target_ss, policy.temperature)
        letter = ALPHABET[int(rng.choice(len(ALPHABET), p=weights))]
        return Proposal(position=ctx.position, proposed_value=letter,
                        reasoning=f"propensity draw toward {policy.target_ss}")
    if isinstance(policy, LlmPolicy):
        return _llm_propose(policy, bundle, ctx, sleep=sleep)
    raise TypeError(f"unknown policy {type(policy).__name__}")


def policy_to_dict(policy: AgentPolicySpec) -> dict:
    if isinstance(policy, KeepPolicy):
        return {"type": "keep"}
    if isinstance(policy, RandomPolicy):
        return {"type": "random", "seed": policy.seed}
    if isinstance(policy, PropensityPolicy):
        return {"type": "propensity", "target_ss": policy.target_ss,
                "temperature": policy.temperature}
    if isinstance(policy, LlmPolicy):
        cfg = policy.config
        return {"type": "llm", "base_url": cfg.base_url, "model_name": cfg.model_name,
                "temperature": cfg.temperature, "max_retries": cfg.max_retries,
                "timeout": cfg.timeout, "api_key_env": cfg.api_key_env,
                "max_concurrent_requests": cfg.max_concurrent_requests}
    raise TypeError(f"unknown policy {type(policy).__name__}")


def policy_from_dict(d: dict) -> AgentPolicySpec:
    kind = d.get("type")
    if kind == "keep":
        return KeepPolicy()
    if kind == "random":
        return RandomPolicy(seed=int(d.get("seed", 0)))
    if kind == "propensity":
        return PropensityPolicy(target_ss=d["target_ss"],
                                temperature=float(d.get("temperature", 1.0)))
    if kind == "llm":
        return LlmPolicy(LlmEndpointConfig(
            base_url=d["base_url"], model_name=d["model_name"],
            temperature=float(d.get("temperature", 0.7)),
            max_retries=int(d.get("max_retries", 2)),
            timeout=float(d.get("timeout", 30.0)),
            api_key_env=d.get("api_key_env", "SEQSWARM_API_KEY"),
            max_concurrent_requests=int(d.get("max_concurrent_requests", 4))))
    raise ValueError(f"unknown policy type {kind!r}")


def collect_proposals(policy: AgentPolicySpec, contexts: list[ResidueContext],
                      objective: DesignObjective, last_eval=None, *,
                      campaign_seed: int = 0, iteration: int = 1,
                      sleep=time.sleep) -> list[Proposal]:
    """Run every agent once and return proposals in position order.

    LLM calls fan out on a bounded thread pool; any per-position failure
    becomes a fallback proposal, never a phase failure.
    """
    bundles = [build_prompt(ctx, objective, last_eval) for ctx in contexts]

    def one(idx: int) -> Proposal:
        return propose(policy, bundles[idx], contexts[idx],
                       rng_seed=(campaign_seed, iteration, contexts[idx].position),
                       sleep=sleep)

    if isinstance(policy, LlmPolicy) and len(contexts) > 1:
        workers = min(policy.config.max_concurrent_requests, len(contexts))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            proposals = list(pool.map(one, range(len(contexts))))
    else:
        proposals = [one(i) for i in range(len(contexts))]
    return proposals
