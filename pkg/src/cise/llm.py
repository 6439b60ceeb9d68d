"""Chat-completions client and the prompt protocols built on it.

Five protocols: float/binary importance scoring, ground-truth labeling
against a reference summary, direct abstractive summarization with
in-context examples, a conciseness-preserving rewrite of an extractive
summary, and a yes/no judge for whether a summary retains a sentence.

Each protocol's template is sent verbatim as the leading system message;
a second system message frames the transport ("answer with a bare JSON
array" etc.) so the protocol text itself stays byte-stable. Responses
are parsed strictly: a reply with the wrong arity, non-numeric entries,
or an unrecognizable judge token is retried a bounded number of times
and then raised as an error — scores are never invented or zero-filled.

Endpoint, model, and key come from arguments or the environment
(CISE_LLM_URL, CISE_LLM_MODEL, CISE_LLM_API_KEY). Temperature is pinned
to 0 and a decoding seed is forwarded when configured, since sampling
variance would make calibration runs irreproducible.
"""

from __future__ import annotations

import json
import os
import threading
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import requests

from .core import Document, GroundTruth, ScoreVector
from .errors import ExternalServiceError, UsageError

__all__ = [
    "PROMPTS",
    "LlmConfig",
    "LlmClient",
    "LlmParse",
    "LlmScorer",
    "llm_importance_scores",
    "llm_ground_truth_labels",
    "direct_abstractive_summary",
    "hybrid_rewrite",
    "judge_retention",
    "format_claims",
    "format_examples",
    "render_prompt",
    "extract_first_json",
    "LLM_URL_ENV",
    "LLM_MODEL_ENV",
    "LLM_API_KEY_ENV",
    "CHUNKED_CONTEXT",
]

LLM_URL_ENV = "CISE_LLM_URL"
LLM_MODEL_ENV = "CISE_LLM_MODEL"
LLM_API_KEY_ENV = "CISE_LLM_API_KEY"
CHUNKED_CONTEXT = "chunked_context"

# Protocol templates. Placeholders are literal markers replaced by
# render_prompt; {[claim_text]} is substituted with a JSON array of the
# claim strings.
PROMPTS = {
    "gt_label": (
        "Evaluate whether each input claim is included in the summary text. "
        "The output labels, corresponding to each input claim, should be either 0 "
        "or 1, indicating whether the corresponding claim, or the information it "
        "carries, is indeed included in the actual summary. For example, if "
        "claim_1's information is contained in the summary, then label_1 should "
        "be 1; if information carried in claim_3 cannot be found in the summary "
        "text, then label_3 should be 0."
        "\n\nSummary text:\n{summary_text}"
        "\n\nList of claims:\n{[claim_text]}"
    ),
    "importance_float": (
        "Please evaluate the importance of each input claim in the original "
        "text, based on how the information carried in the claim is aligned with "
        "the overall message. Please provide a importance score for EACH input "
        "claim. Each output score should be a two decimal float number ranged "
        "between 0 and 1, indicating how important the corresponding input claim "
        "is in the context of the text document. For example, if claim 1's "
        "information is highly aligned with that of the input text, and very "
        "likely to be included in the summary, then score 1 should be close to "
        "1, say greater than 0.8; if information carried in claim 3 is trivial "
        "or only remotely related to the central message of the text, and is not "
        "worthy of inclusion in the summary, then score 3 should be close to 0, "
        "say less than 0.2."
        "\n\nOriginal text:\n{original_text}"
        "\n\nList of claims:\n{[claim_text]}"
    ),
    "importance_binary": (
        "Evaluate the importance of each input claim in the original text, "
        "based on how the information carried in the claim is aligned with the "
        "overall message. Please provide a binary importance score for EACH "
        "input claim. Each output score should be either 0 or 1, indicating "
        "whether the corresponding input claim is important enough in the "
        "context of the text document to be included in the summary. For "
        "example, if claim 1's information is highly aligned with that of the "
        "input text, and very likely to be included in the summary, then score 1 "
        "should be 1; if information carried in claim 3 is trivial or only "
        "remotely related to the central message of the text, and is not worthy "
        "of inclusion in the summary, then score 3 should be 0."
        "\n\nOriginal text:\n{original_text}"
        "\n\nList of claims:\n{[claim_text]}"
    ),
    "direct_abstractive": (
        "Here are examples of what constitutes important information to include "
        "in the summary:"
        "\n\n{examples_text}"
        "\n\nCreate an abstractive summary of the following text."
        "\n\nRequirements:"
        "\n- Aim to retain at least {beta}"
        "\n- Use your own words and phrasing (abstractive, not extractive)"
        "\n\nInput text to summarize:\n{input_text}"
    ),
    "hybrid_rewrite": (
        "Requirements:"
        "\n- Use more concise language to make the text shorter"
        "\n- Retain all of the information from the input text"
        "\n- Improve flow, coherence, and readability"
    ),
    "retention_judge": (
        "You will be given an important sentence from the original text and a "
        "generated summary. Your goal is to determine whether the important "
        "sentence given is retained in the generated summary."
        "\n\nImportant sentence:\n{important_sentence}"
        "\n\nGenerated summary:\n{summary}"
        "\n\nOutput True if the important sentence is retained in the generated "
        "summary. Output False otherwise."
    ),
}

_FRAME_ARRAY = (
    "Respond with only a JSON array of numbers, one per input claim, in input "
    "order, and nothing else."
)
_FRAME_BOOL = "Respond with only the single word True or False, and nothing else."

_TEMPLATE_MARKERS = {
    "gt_label": ("{summary_text}", "{[claim_text]}"),
    "importance_float": ("{original_text}", "{[claim_text]}"),
    "importance_binary": ("{original_text}", "{[claim_text]}"),
    "direct_abstractive": ("{examples_text}", "{beta}", "{input_text}"),
    "hybrid_rewrite": (),
    "retention_judge": ("{important_sentence}", "{summary}"),
}


def format_claims(sentences: Sequence[str]) -> str:
    """Render the claim list placeholder as a JSON array of strings."""
    return json.dumps(list(sentences), ensure_ascii=False, indent=2)


def format_examples(examples: Sequence[Tuple[Document, GroundTruth]]) -> str:
    """Render in-context examples: each document with its important sentences."""
    if not examples:
        return "(no examples provided)"
    blocks = []
    for i, (doc, truth) in enumerate(examples, start=1):
        truth.validate_against(doc)
        important = "\n".join(f"- {doc.sentences[j]}" for j in truth.important)
        if not important:
            important = "- (none)"
        blocks.append(
            f"Example {i}:\nText:\n{' '.join(doc.sentences)}\n"
            f"Important information:\n{important}"
        )
    return "\n\n".join(blocks)


def render_prompt(name: str, substitutions: dict) -> str:
    """Fill a template's placeholders; every placeholder must be supplied.

    Markers are replaced back-to-front, one occurrence each, so a
    substitution value that happens to contain placeholder-looking text
    can never be rewritten by a later replacement.
    """
    if name not in PROMPTS:
        raise UsageError(f"unknown prompt template {name!r}")
    required = _TEMPLATE_MARKERS[name]
    if set(substitutions) != set(required):
        raise UsageError(
            f"template {name!r} needs substitutions for {sorted(required)}, "
            f"got {sorted(substitutions)}"
        )
    text = PROMPTS[name]
    for marker in sorted(required, key=text.index, reverse=True):
        text = text.replace(marker, substitutions[marker], 1)
    return text


def extract_first_json(text: str):
    """Pull the first JSON value out of possibly chatty surroundings.

    Scans for the first position where a JSON decode succeeds; accepts
    arrays, objects, numbers, and bare true/false. Raises ValueError
    when nothing parses.
    """
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{" or ch.isdigit() or ch == "-" or text[i : i + 4].lower() in ("true", "fals"):
            try:
                value, _ = decoder.raw_decode(text, i)
                return value
            except json.JSONDecodeError:
                continue
    raise ValueError(f"no JSON value found in response: {text[:120]!r}")


@dataclass(frozen=True)
class LlmParse:
    """A raw model reply with its parsed payload and the attempts used."""

    raw: str
    parsed: object
    attempts: int


class _TokenBucket:
    """Simple token-bucket rate limiter; rate=None disables it."""

    def __init__(self, rate: Optional[float], burst: int = 1):
        self.rate = rate
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate is None:
            return
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(
                    self.capacity, self.tokens + (now - self.updated) * self.rate
                )
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


@dataclass
class LlmConfig:
    """Connection and decoding settings for a chat-completions endpoint."""

    url: str = ""
    model: str = ""
    api_key: Optional[str] = None
    temperature: float = 0.0
    seed: Optional[int] = None
    timeout: float = 120.0
    max_transport_retries: int = 3
    max_protocol_retries: int = 3
    backoff_base: float = 0.5
    parallelism: int = 4
    requests_per_second: Optional[float] = None
    # Documents longer than this are scored in windowed chunks; the
    # resulting score vector carries a fidelity flag.
    max_sentences_per_call: int = 100

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        cfg = cls(
            url=os.environ.get(LLM_URL_ENV, ""),
            model=os.environ.get(LLM_MODEL_ENV, ""),
            api_key=os.environ.get(LLM_API_KEY_ENV),
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


class LlmClient:
    """Thread-safe chat-completions client with retry and rate limiting."""

    def __init__(self, config: LlmConfig, session: Optional[requests.Session] = None):
        if not config.url or not config.model:
            raise UsageError(
                "LLM endpoint URL and model are required (flags or "
                f"{LLM_URL_ENV}/{LLM_MODEL_ENV})"
            )
        self.config = config
        self.session = session or requests.Session()
        self._bucket = _TokenBucket(config.requests_per_second)
        self._semaphore = threading.Semaphore(max(1, config.parallelism))
        self.request_count = 0
        self._count_lock = threading.Lock()

    def chat(self, messages: List[dict]) -> str:
        """One chat call; retries transport-level failures with backoff."""
        cfg = self.config
        payload = {
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
        }
        if cfg.seed is not None:
            payload["seed"] = cfg.seed
        headers = {}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"

        last_exc: Optional[Exception] = None
        for attempt in range(cfg.max_transport_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
            self._bucket.acquire()
            with self._semaphore:
                with self._count_lock:
                    self.request_count += 1
                try:
                    resp = self.session.post(
                        cfg.url, json=payload, headers=headers, timeout=cfg.timeout
                    )
                except requests.RequestException as exc:
                    last_exc = exc
                    continue
            if resp.status_code in (401, 403):
                raise ExternalServiceError(
                    f"LLM endpoint refused authentication (HTTP {resp.status_code})"
                )
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = ExternalServiceError(
                    f"LLM endpoint returned HTTP {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ExternalServiceError(
                    f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ExternalServiceError(
                    f"malformed chat-completions response: {exc}"
                ) from exc
        raise ExternalServiceError(
            f"LLM request failed after {cfg.max_transport_retries} retries: {last_exc}"
        )


def _request_score_list(
    client: LlmClient, system_prompt: str, expected: int, binary: bool
) -> LlmParse:
    """Ask for one score per claim; re-ask on malformed replies."""
    messages = [
        {"role": "system", "content": system_prompt},
        {"role": "system", "content": _FRAME_ARRAY},
    ]
    retries = client.config.max_protocol_retries
    last_problem = ""
    for attempt in range(1, retries + 2):
        raw = client.chat(messages)
        try:
            value = extract_first_json(raw)
        except ValueError as exc:
            last_problem = str(exc)
            continue
        if not isinstance(value, list) or len(value) != expected:
            got = len(value) if isinstance(value, list) else type(value).__name__
            last_problem = f"expected {expected} scores, got {got}"
            continue
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            last_problem = "non-numeric entry in score list"
            continue
        scores = [float(v) for v in value]
        if any(v < 0 or v > 1 for v in scores):
            warnings.warn(
                "LLM scores outside [0, 1] clamped", stacklevel=3
            )
            scores = [min(1.0, max(0.0, v)) for v in scores]
        if binary and any(v not in (0.0, 1.0) for v in scores):
            last_problem = "binary protocol returned a non-binary score"
            continue
        return LlmParse(raw=raw, parsed=scores, attempts=attempt)
    raise ExternalServiceError(
        f"LLM scoring failed after {retries} retries: {last_problem}"
    )


def _windows(p: int, size: int) -> List[Tuple[int, int, int, int]]:
    """Chunk [0, p) into (start, end, ctx_start, ctx_end) with +/-1 context."""
    out = []
    for start in range(0, p, size):
        end = min(p, start + size)
        ctx_start = max(0, start - size)
        ctx_end = min(p, end + size)
        out.append((start, end, ctx_start, ctx_end))
    return out


def llm_importance_scores(
    client: LlmClient, doc: Document, binary: bool = False
) -> ScoreVector:
    """Score each sentence's importance in [0, 1] via the LLM protocol.

    Float mode clamps out-of-range replies (with a warning); binary mode
    requires each value to be exactly 0 or 1 after clamping. Documents
    longer than the per-call budget are scored chunk by chunk with the
    neighboring chunks as context, and flagged ``chunked_context`` since
    that weakens whole-document conditioning.
    """
    template = "importance_binary" if binary else "importance_float"
    size = client.config.max_sentences_per_call
    flags: Tuple[str, ...] = ()
    if doc.p <= size:
        prompt = render_prompt(
            template,
            {
                "{original_text}": " ".join(doc.sentences),
                "{[claim_text]}": format_claims(doc.sentences),
            },
        )
        parse = _request_score_list(client, prompt, doc.p, binary)
        scores = parse.parsed
    else:
        scores = []
        for start, end, ctx_start, ctx_end in _windows(doc.p, size):
            chunk = doc.sentences[start:end]
            context = doc.sentences[ctx_start:ctx_end]
            prompt = render_prompt(
                template,
                {
                    "{original_text}": " ".join(context),
                    "{[claim_text]}": format_claims(chunk),
                },
            )
            parse = _request_score_list(client, prompt, len(chunk), binary)
            scores.extend(parse.parsed)
        flags = (CHUNKED_CONTEXT,)
    return ScoreVector(doc.id, tuple(scores), flags)


def llm_ground_truth_labels(
    client: LlmClient, doc: Document, reference_summary: str
) -> GroundTruth:
    """Label each sentence 0/1 by whether the reference summary covers it."""
    prompt = render_prompt(
        "gt_label",
        {
            "{summary_text}": reference_summary,
            "{[claim_text]}": format_claims(doc.sentences),
        },
    )
    parse = _request_score_list(client, prompt, doc.p, binary=True)
    important = tuple(i for i, v in enumerate(parse.parsed) if v == 1.0)
    return GroundTruth(doc.id, important)


def direct_abstractive_summary(
    client: LlmClient,
    doc: Document,
    beta: float,
    examples: Sequence[Tuple[Document, GroundTruth]] = (),
) -> str:
    """One-shot abstractive summary aiming to retain a fraction beta.

    The model sees beta as a percentage plus in-context examples of what
    counted as important; the reply is returned verbatim. No retention
    guarantee survives this path — it exists as the baseline protocol.
    """
    if not (0 < beta <= 1):
        raise UsageError(f"beta must be in (0, 1], got {beta}")
    prompt = render_prompt(
        "direct_abstractive",
        {
            "{examples_text}": format_examples(examples),
            "{beta}": f"{beta:.0%} of the important information",
            "{input_text}": " ".join(doc.sentences),
        },
    )
    return client.chat([{"role": "system", "content": prompt}])


def hybrid_rewrite(client: LlmClient, selection_text: str) -> str:
    """Rewrite an extractive summary for flow while keeping all content."""
    if not selection_text:
        raise UsageError("hybrid rewrite needs a non-empty extractive summary")
    return client.chat(
        [
            {"role": "system", "content": PROMPTS["hybrid_rewrite"]},
            {"role": "user", "content": selection_text},
        ]
    )


def judge_retention(client: LlmClient, important_sentence: str, summary: str) -> bool:
    """Ask whether a summary retains a sentence; strict True/False replies only."""
    if not important_sentence or not summary:
        raise UsageError("judge needs a non-empty sentence and summary")
    prompt = render_prompt(
        "retention_judge",
        {"{important_sentence}": important_sentence, "{summary}": summary},
    )
    messages = [
        {"role": "system", "content": prompt},
        {"role": "system", "content": _FRAME_BOOL},
    ]
    retries = client.config.max_protocol_retries
    for _ in range(retries + 1):
        token = client.chat(messages).strip().lower()
        if token == "true":
            return True
        if token == "false":
            return False
    raise ExternalServiceError(
        f"judge returned neither True nor False after {retries} retries"
    )


class LlmScorer:
    """Registry adapter: scores documents through the LLM protocol."""

    def __init__(self, client: LlmClient, binary: bool = False):
        self.client = client
        self.binary = binary
        self.scorer_id = (
            f"llm_binary:{client.config.model}" if binary else f"llm_float:{client.config.model}"
        )

    def score(self, doc: Document) -> ScoreVector:
        return llm_importance_scores(self.client, doc, binary=self.binary)
