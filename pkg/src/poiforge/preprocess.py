"""Address text normalization: vocabulary preprocessing and the PoI-specific
stop-word pass, plus the corpus statistics both depend on.

Vocabulary preprocessing runs five token-level steps in order:

1. common clean (lowercase, punctuation and whitespace runs -> one space)
2. alpha/numeric boundary split (``bangalore560066`` -> ``bangalore 560066``)
3. probabilistic split of compound words
4. bigram separation of near-misses of frequent bigrams
5. probabilistic merge of adjacent tokens

The specialized pass then drops numeric tokens, single letters, the city's
most frequent words and its locality-name unigrams.
"""
from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

from .model import AddressRecord, InputError

_NON_ALNUM = re.compile(r"[^a-z0-9]+")
_ALPHA_DIGIT = re.compile(r"(?<=[a-z])(?=[0-9])|(?<=[0-9])(?=[a-z])")
# anonymised flat numbers show up as XX / XXX in the raw corpus
MASK_TOKEN = re.compile(r"x{2,}")

MIN_FRAGMENT = 2
MAX_VOCAB_PASSES = 5


@dataclass
class CorpusStats:
    counts: dict
    total_tokens: int
    bigram_dict: set = field(default_factory=set)
    top_words: dict = field(default_factory=dict)
    locality_unigrams: dict = field(default_factory=dict)

    def __post_init__(self):
        self._unseen = 1.0 / (self.total_tokens + len(self.counts)) if self.total_tokens else 1.0
        self._by_len = defaultdict(list)
        for w1, w2 in sorted(self.bigram_dict):
            self._by_len[len(w1) + len(w2)].append((w1, w2))

    def word_prob(self, token: str) -> float:
        c = self.counts.get(token, 0)
        if c:
            return c / self.total_tokens
        return self._unseen

    @property
    def probabilities(self) -> dict:
        """Raw (unsmoothed) probabilities over the observed vocabulary."""
        return {w: c / self.total_tokens for w, c in self.counts.items()}

    def seen(self, token: str) -> bool:
        return token in self.counts

    def bigrams_near_length(self, n: int) -> list:
        return self._by_len.get(n - 1, []) + self._by_len.get(n, []) + self._by_len.get(n + 1, [])

    def stopwords(self, city: str) -> set:
        return set(self.top_words.get(city, ())) | set(self.locality_unigrams.get(city, ()))

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "total_tokens": self.total_tokens,
            "bigram_dict": sorted(list(b) for b in self.bigram_dict),
            "top_words": {k: list(v) for k, v in sorted(self.top_words.items())},
            "locality_unigrams": {k: sorted(v) for k, v in sorted(self.locality_unigrams.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusStats":
        return cls(
            counts={k: int(v) for k, v in data["counts"].items()},
            total_tokens=int(data["total_tokens"]),
            bigram_dict={tuple(b) for b in data.get("bigram_dict", [])},
            top_words={k: list(v) for k, v in data.get("top_words", {}).items()},
            locality_unigrams={k: set(v) for k, v in data.get("locality_unigrams", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CorpusStats":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read corpus stats from {path}: {exc}") from exc


def common_clean(text: str) -> str:
    return _NON_ALNUM.sub(" ", text.lower()).strip()


def regex_split(text: str) -> str:
    return _ALPHA_DIGIT.sub(" ", text)


def tokenize(text: str) -> list:
    return regex_split(common_clean(text)).split()


def _is_stopword_candidate(token: str) -> bool:
    # tokens the character pass removes anyway never compete for top-word slots
    return token.isalpha() and len(token) > 1 and not MASK_TOKEN.fullmatch(token)


def build_corpus_stats(addresses: Iterable, localities: Mapping = None,
                       bigram_min_count: int = 5, top_words_count: int = 10,
                       top_word_overrides: Mapping = None) -> CorpusStats:
    """Count tokens, frequent bigrams and per-city top words over a corpus.

    ``addresses`` holds AddressRecords (raw_text and city are used) or plain
    strings, which are filed under the city ``""``.
    """
    counts = Counter()
    bigrams = Counter()
    per_city = defaultdict(Counter)
    n_docs = 0
    for item in addresses:
        if isinstance(item, AddressRecord):
            text, city = item.raw_text, item.city
        else:
            text, city = item, ""
        tokens = tokenize(text)
        n_docs += 1
        counts.update(tokens)
        per_city[city].update(t for t in tokens if _is_stopword_candidate(t))
        for a, b in zip(tokens, tokens[1:]):
            if a.isalpha() and b.isalpha():
                bigrams[(a, b)] += 1
    total = sum(counts.values())
    if n_docs == 0 or total == 0:
        raise InputError("cannot build corpus statistics from an empty corpus")

    top_words = {}
    for city, c in per_city.items():
        ranked = sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))
        top_words[city] = [w for w, _ in ranked[:top_words_count]]
    for city, words in (top_word_overrides or {}).items():
        top_words[city] = [common_clean(w) for w in words if common_clean(w)]

    locality_unigrams = {}
    for city, names in (localities or {}).items():
        unigrams = set()
        for name in names:
            unigrams.update(t for t in tokenize(name) if t.isalpha())
        locality_unigrams[city] = unigrams

    return CorpusStats(
        counts=dict(counts),
        total_tokens=total,
        bigram_dict={b for b, c in bigrams.items() if c >= bigram_min_count},
        top_words=top_words,
        locality_unigrams=locality_unigrams,
    )


def load_locality_dir(path) -> tuple:
    """Read ``<city>.localities.txt`` and ``<city>.topwords.txt`` files.

    Returns (localities, top_word_overrides), both keyed by city.
    """
    localities, overrides = {}, {}
    for p in sorted(Path(path).glob("*.txt")):
        name = p.name
        for suffix, target in ((".localities.txt", localities), (".topwords.txt", overrides)):
            if name.endswith(suffix):
                lines = p.read_text(encoding="utf-8").splitlines()
                target[name[: -len(suffix)]] = [ln.strip() for ln in lines if ln.strip()]
    return localities, overrides


# --- step 3: probabilistic split ------------------------------------------

def probabilistic_split(token: str, stats: CorpusStats) -> list:
    if not token.isalpha() or len(token) < 2 * MIN_FRAGMENT:
        return [token]
    best, best_i = -1.0, None
    for i in range(MIN_FRAGMENT, len(token) - MIN_FRAGMENT + 1):
        p = stats.word_prob(token[:i]) * stats.word_prob(token[i:])
        if p > best:
            best, best_i = p, i
    if best_i is None or best <= stats.word_prob(token):
        return [token]
    return probabilistic_split(token[:best_i], stats) + probabilistic_split(token[best_i:], stats)


# --- step 4: bigram separation ---------------------------------------------

def bigram_separate(token: str, stats: CorpusStats, max_edit: int = 1) -> list:
    if not token.isalpha():
        return [token]
    code = phonetic_code(token)
    best = None
    for w1, w2 in stats.bigrams_near_length(len(token)):
        concat = w1 + w2
        d = edit_distance(token, concat)
        if d > max_edit or phonetic_code(concat) != code:
            continue
        # a well-attested compound that the merge step would rebuild stays whole
        if stats.seen(token) and stats.word_prob(token) > stats.word_prob(w1) * stats.word_prob(w2):
            continue
        key = (d, w1 + " " + w2)
        if best is None or key < best[0]:
            best = (key, [w1, w2])
    return [token] if best is None else best[1]


# --- step 5: probabilistic merge -------------------------------------------

def _same_kind(a: str, b: str) -> bool:
    return (a.isalpha() and b.isalpha()) or (a.isdigit() and b.isdigit())


def probabilistic_merge(left: str, right: str, stats: CorpusStats) -> list:
    merged = left + right
    # unseen compounds are never created: with smoothing, any pair of rare
    # words would otherwise beat the floor probability
    if (_same_kind(left, right) and stats.seen(merged)
            and stats.word_prob(merged) > stats.word_prob(left) * stats.word_prob(right)):
        return [merged]
    return [left, right]


def _merge_pass(tokens: list, stats: CorpusStats) -> list:
    out = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens):
            m = probabilistic_merge(tokens[i], tokens[i + 1], stats)
            if len(m) == 1:
                out.append(m[0])
                i += 2
                continue
        out.append(tokens[i])
        i += 1
    return out


def _vocab_pass(tokens: list, stats: CorpusStats) -> list:
    out = []
    for t in tokens:
        parts = probabilistic_split(t, stats)
        if len(parts) == 1:
            parts = bigram_separate(t, stats)
        out.extend(parts)
    return _merge_pass(out, stats)


def vocabulary_preprocess(text: str, stats: CorpusStats) -> str:
    tokens = tokenize(text)
    # iterate to a fixed point so the result is stable under re-application
    for _ in range(MAX_VOCAB_PASSES):
        nxt = _vocab_pass(tokens, stats)
        if nxt == tokens:
            break
        tokens = nxt
    return " ".join(tokens)


def specialized_preprocess(text: str, stats: CorpusStats, city: str = "") -> str:
    stop = stats.stopwords(city)
    kept = []
    for t in text.lower().split():
        if any(ch.isdigit() for ch in t) or len(t) < 2 or MASK_TOKEN.fullmatch(t):
            continue
        if t in stop:
            continue
        kept.append(t)
    return " ".join(kept)


# --- string metrics ----------------------------------------------------------

def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


_VOWELS = set("aeiou")


@lru_cache(maxsize=65536)
def phonetic_code(word: str) -> str:
    """Consonant skeleton in the spirit of Metaphone.

    Rules, applied in order:
      * lowercase; ``ph`` -> ``f``, ``gh`` -> ``g``, ``w`` -> ``v``
      * keep the first letter whatever it is
      * drop every later vowel (a, e, i, o, u; ``y`` counts as a consonant)
      * collapse runs of the same letter to one

    Only equality of codes is ever used.
    """
    w = word.lower().replace("ph", "f").replace("gh", "g").replace("w", "v")
    if not w:
        return ""
    out = [w[0]]
    for ch in w[1:]:
        if ch in _VOWELS:
            continue
        if ch != out[-1]:
            out.append(ch)
    return "".join(out)
