"""Structure quality of an explanation: coherence, grammar, readability, sentiment."""

from __future__ import annotations

import re
from functools import lru_cache
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
import yaml
from loguru import logger
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from src.errors import ConfigError, EmptyText, NoWords


LEXICON_PATH = Path(__file__).with_name("lexicon.yaml")
TOKEN_PATTERN = r"[A-Za-z0-9]+"

DOUBLED_WORD = re.compile(r"\b(\w+)\s+\1\b", re.IGNORECASE)
SPACE_BEFORE_PUNCT = re.compile(r"\s+[.,;:!?]")
SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
BRACKETS = {")": "(", "]": "[", "}": "{"}


def _require_text(*texts: str) -> None:
    for t in texts:
        if not t or not t.strip():
            raise EmptyText("Text is empty")


def coherence(prompt_text: str, response_text: str) -> float:
    """Cosine of two-document TF-IDF vectors (sublinear tf, smoothed idf)."""
    _require_text(prompt_text, response_text)
    vectorizer = TfidfVectorizer(lowercase=True, token_pattern=TOKEN_PATTERN, sublinear_tf=True, smooth_idf=True)
    try:
        tfidf = vectorizer.fit_transform([prompt_text, response_text])
    except ValueError as e:
        raise EmptyText(f"No alphanumeric tokens to compare: {e}") from e
    return float(np.clip(cosine_similarity(tfidf[0], tfidf[1])[0, 0], 0.0, 1.0))


class GrammarChecker(Protocol):
    def count(self, text: str) -> int: ...


class LanguageToolChecker:
    """Adapter over language_tool_python; imported on first use."""

    def __init__(self, language: str = "en-US"):
        try:
            import language_tool_python
        except ImportError as e:
            raise ConfigError("language_tool_python is not installed; grammar.external must stay off") from e
        self._tool = language_tool_python.LanguageTool(language)

    def count(self, text: str) -> int:
        return len(self._tool.check(text))


def _unmatched(text: str) -> int:
    stack, errors = [], 0
    for ch in text:
        if ch in "([{":
            stack.append(ch)
        elif ch in BRACKETS:
            if stack and stack[-1] == BRACKETS[ch]:
                stack.pop()
            else:
                errors += 1
    errors += len(stack)
    # apostrophes make single quotes ambiguous; only double quotes are paired
    errors += text.count('"') % 2
    return errors


def grammar_error_count(text: str, checker: Optional[GrammarChecker] = None) -> int:
    """Doubled words, lowercase sentence starts, unmatched brackets/quotes, space before punctuation."""
    if not text or not text.strip():
        return 0
    errors = len(DOUBLED_WORD.findall(text))
    for sentence in SENTENCE_SPLIT.split(text.strip()):
        s = sentence.lstrip("\"'([{ ")
        if s and s[0].isalpha() and s[0].islower():
            errors += 1
    errors += _unmatched(text)
    errors += len(SPACE_BEFORE_PUNCT.findall(text))
    if checker is not None:
        errors += int(checker.count(text))
    return errors


def ari_readability(text: str) -> float:
    """4.71 * chars/words + 0.5 * words/sentences - 21.43 (alphanumeric characters only)."""
    words = [w for w in (text or "").split() if re.search(r"[A-Za-z0-9]", w)]
    if not words:
        raise NoWords("ARI needs at least one word")
    chars = sum(1 for ch in text if ch.isalnum())
    terminators = re.findall(r"[.!?]+", text)
    tail = re.split(r"[.!?]+", text)[-1]
    sentences = len(terminators) + (1 if re.search(r"[A-Za-z0-9]", tail) else 0)
    return 4.71 * (chars / len(words)) + 0.5 * (len(words) / sentences) - 21.43


@lru_cache(maxsize=4)
def load_lexicon(path: str | Path = LEXICON_PATH) -> tuple[str, dict[str, float]]:
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    words = {str(k).lower(): float(v) for k, v in (data.get("words") or {}).items()}
    if not words:
        raise ConfigError(f"Sentiment lexicon has no words: {path}")
    logger.debug(f"Sentiment lexicon loaded: version={data.get('version')} words={len(words)}")
    return str(data.get("version", "")), words


def polarity(text: str, lexicon: Optional[dict[str, float]] = None) -> float:
    """Mean polarity of lexicon words in the text; 0 when none match."""
    lex = lexicon if lexicon is not None else load_lexicon()[1]
    scores = [lex[w] for w in re.findall(r"[a-z]+", text.lower()) if w in lex]
    return float(np.mean(scores)) if scores else 0.0


def sentiment_consistency(prompt_text: str, response_text: str, lexicon: Optional[dict[str, float]] = None) -> float:
    _require_text(prompt_text, response_text)
    return abs(polarity(prompt_text, lexicon) - polarity(response_text, lexicon))
