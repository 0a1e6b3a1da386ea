"""Prompt construction and completion providers.

Prompt budgets use the chars/4 token approximation. Rendering is fully
deterministic: the same inputs produce byte-identical prompts, and a
rendered prompt never exceeds the configured budget.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from typing import Sequence

import httpx

from .corpus import PaperRecord
from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_TOKENS = 8192
# Sleep between retries of a retriable provider failure; patched in tests.
BACKOFF_DELAYS = (0.5, 1.0)

PROFILE_INSTRUCTION = (
    "Based on the list of the researcher's papers from different periods, "
    "please write a comprehensive first person persona. Focus more on recent "
    "papers. Be concise and clear (around 300 words)."
)
PROFILE_PAPERS_HEADER = "Here are the papers from different periods:"

TREND_INSTRUCTION = (
    "Given some recent paper titles and abstracts. Could you summarize no "
    "more than 10 top keywords of high level research backgrounds and trends."
)
TREND_PAPERS_HEADER = "Here are the retrieved paper abstracts:"

IDEA_INSTRUCTION_PREFIX = "Here is a high-level summarized trend of a research field:"
IDEA_INSTRUCTION_SUFFIX = (
    "How do you view this field? Do you have any novel ideas or insights?\n"
    "Please give me 3 to 5 novel ideas and insights in bullet points. Each "
    "bullet points should be concise, containing 2 or 3 sentences."
)

CHAT_INSTRUCTION = (
    "Answer the question using the context and respond in a manner tailored "
    "to the user profile."
)


class ProviderError(Exception):
    """Base class for completion failures."""


class ProviderUnavailable(ProviderError):
    """Transient provider failure; safe to retry."""


class PromptTooLarge(ProviderError):
    """Prompt exceeds the token budget; never dispatched."""


def approx_tokens(text: str) -> int:
    """Token estimate: four characters per token, rounded up."""
    return (len(text) + 3) // 4


def _fit_to_budget(prompt: str, budget_tokens: int) -> str:
    if approx_tokens(prompt) <= budget_tokens:
        return prompt
    return prompt[: budget_tokens * 4]


def render_profile_prompt(papers: Sequence[PaperRecord], budget_tokens: int = DEFAULT_BUDGET_TOKENS) -> str:
    """Persona prompt over the author's papers, newest first.

    When the paper list exceeds the budget the oldest papers are dropped
    first; the newest paper is always present, truncated if it alone
    overflows the budget.
    """
    if not papers:
        raise ValidationError("profile prompt requires at least one paper")
    ordered = sorted(papers, key=lambda r: (r.published, r.id), reverse=True)
    scaffold = f"{PROFILE_INSTRUCTION}\n\n{PROFILE_PAPERS_HEADER}\n"
    blocks = [f"[{r.published.isoformat()}] {r.title}\n{r.abstract}" for r in ordered]
    return _pack(scaffold, blocks, budget_tokens, require_first=True)


def render_trend_prompt(papers: Sequence[PaperRecord], budget_tokens: int = DEFAULT_BUDGET_TOKENS) -> str:
    """Trend-keyword prompt over retrieved papers in the given (score) order."""
    if not papers:
        raise ValidationError("trend prompt requires at least one paper")
    scaffold = f"{TREND_INSTRUCTION}\n\n{TREND_PAPERS_HEADER}\n"
    blocks = [f"Title: {r.title}\nAbstract: {r.abstract}" for r in papers]
    return _pack(scaffold, blocks, budget_tokens, require_first=True)


def render_idea_prompt(trend_summary: str, budget_tokens: int = DEFAULT_BUDGET_TOKENS) -> str:
    if not trend_summary.strip():
        raise ValidationError("idea prompt requires a non-empty trend summary")
    prompt = f"{IDEA_INSTRUCTION_PREFIX} {trend_summary}\n\n{IDEA_INSTRUCTION_SUFFIX}"
    if approx_tokens(prompt) > budget_tokens:
        fixed = approx_tokens(f"{IDEA_INSTRUCTION_PREFIX} \n\n{IDEA_INSTRUCTION_SUFFIX}")
        if fixed >= budget_tokens:
            raise PromptTooLarge(f"idea prompt scaffold alone exceeds budget of {budget_tokens} tokens")
        keep = (budget_tokens - fixed) * 4
        prompt = f"{IDEA_INSTRUCTION_PREFIX} {trend_summary[:keep]}\n\n{IDEA_INSTRUCTION_SUFFIX}"
    return prompt


def render_chat_prompt(
    question: str,
    context_items: Sequence[tuple[str, str, str]],
    profile_text: str | None = None,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
) -> str:
    """Chat prompt: instruction, profile, context in score order, question.

    `context_items` are (source, id, text) triples already ranked best
    first; lower-ranked items are dropped first when over budget.
    """
    if not question.strip():
        raise ValidationError("question must be non-empty")
    profile_block = f"User profile:\n{profile_text.strip()}\n\n" if profile_text and profile_text.strip() else ""
    scaffold = f"{CHAT_INSTRUCTION}\n\n{profile_block}Context:\n"
    tail = f"\nQuestion: {question.strip()}"
    blocks = [f"[{i + 1}] ({source} {item_id}) {text}" for i, (source, item_id, text) in enumerate(context_items)]
    budget_for_context = budget_tokens - approx_tokens(tail)
    if budget_for_context <= approx_tokens(scaffold):
        raise PromptTooLarge(f"chat scaffold and question alone exceed budget of {budget_tokens} tokens")
    if not blocks:
        blocks = ["(no context available)"]
    return _pack(scaffold, blocks, budget_for_context, require_first=False) + tail


def _pack(scaffold: str, blocks: Sequence[str], budget_tokens: int, require_first: bool) -> str:
    """Greedy packing of blocks under the budget, preserving order."""
    used = approx_tokens(scaffold)
    if used > budget_tokens:
        raise PromptTooLarge(f"prompt scaffold alone exceeds budget of {budget_tokens} tokens")
    parts = [scaffold]
    for i, block in enumerate(blocks):
        piece = block + "\n"
        cost = approx_tokens(piece)
        if used + cost <= budget_tokens:
            parts.append(piece)
            used += cost
            continue
        if i == 0 and require_first:
            keep = (budget_tokens - used) * 4 - 1
            parts.append(piece[:keep] + "\n")
        break
    return "".join(parts)


# -- providers ---------------------------------------------------------------


class CompletionProvider:
    """Text-completion backend. `calls` counts dispatched completions."""

    budget_tokens: int = 32768

    def __init__(self) -> None:
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        return self._complete(prompt)

    def _complete(self, prompt: str) -> str:
        raise NotImplementedError


class MockProvider(CompletionProvider):
    """Deterministic offline provider: a tagged digest of the prompt.

    `latency_seconds` simulates a slow backend for benches; the sleep is
    real so end-to-end timings reflect it.
    """

    def __init__(self, latency_seconds: float = 0.0):
        super().__init__()
        self.latency_seconds = latency_seconds

    def _complete(self, prompt: str) -> str:
        if self.latency_seconds > 0:
            time.sleep(self.latency_seconds)
        kind = "chat"
        if "comprehensive first person persona" in prompt:
            kind = "profile"
        elif "10 top keywords" in prompt:
            kind = "trend"
        elif "3 to 5 novel ideas" in prompt:
            kind = "idea"
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        return f"MOCK({kind}:{digest})"


class HttpProvider(CompletionProvider):
    """OpenAI-compatible chat-completions backend.

    Reads the API key from PROVIDER_API_KEY unless given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        budget_tokens: int = 32768,
    ):
        super().__init__()
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._api_key = api_key or os.environ.get("PROVIDER_API_KEY", "")
        self._timeout = timeout
        self.budget_tokens = budget_tokens

    def _complete(self, prompt: str) -> str:
        try:
            resp = httpx.post(
                f"{self._base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self._api_key}"},
                json={"model": self._model, "messages": [{"role": "user", "content": prompt}]},
                timeout=self._timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"provider request failed: {exc}") from exc
        if resp.status_code in (408, 429) or resp.status_code >= 500:
            raise ProviderUnavailable(f"provider returned {resp.status_code}")
        resp.raise_for_status()
        text = resp.json()["choices"][0]["message"]["content"]
        if not text:
            raise ProviderError("provider returned an empty completion")
        return text


def complete(provider: CompletionProvider, prompt: str) -> str:
    """Dispatch with a budget check first and bounded retries on transient errors."""
    tokens = approx_tokens(prompt)
    if tokens > provider.budget_tokens:
        raise PromptTooLarge(f"prompt is {tokens} tokens; provider budget is {provider.budget_tokens}")
    attempts = len(BACKOFF_DELAYS) + 1
    for attempt in range(attempts):
        try:
            return provider.complete(prompt)
        except ProviderUnavailable as exc:
            if attempt == attempts - 1:
                raise
            delay = BACKOFF_DELAYS[attempt]
            logger.warning("completion failed (%s); retrying in %.1fs", exc, delay)
            time.sleep(delay)
    raise AssertionError("unreachable")
