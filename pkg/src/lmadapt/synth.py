"""Synthetic desk-scale corpora: template languages with controllable statistics.

The experiment protocols need corpora with known properties rather than
redistributable texts, so everything here is generated from small English
word pools and sentence templates:

* `background_corpus` trains base models. It covers the full stimulus
  lexicon, includes full (unreduced) relative clauses and main-verb
  participle sentences, balanced dative variants, and assorted fillers,
  but never a reduced relative clause, so that construction stays novel.
* `themed_texts` makes texts that each lean on a small topic vocabulary
  drawn from a genre pool, optionally with genre-style templates that the
  background corpus never uses. This yields text-specific, genre-specific
  and domain-retention structure for the evaluation protocols.
* `filler_items` and `sample_filler_items` supply filler trials.
* `cyclic_text` is the trivially memorizable control corpus.

All generators are pure functions of their arguments and seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Text
from .stimuli import (
    DEFAULT_DATIVE_LEXICON,
    DEFAULT_GARDEN_PATH_LEXICON,
    FILLER,
    StimulusItem,
)
from .validation import check_count

BROAD_NOUNS = (
    "cat", "horse", "river", "window", "garden", "castle", "bridge", "forest",
    "engine", "market", "island", "valley", "kitchen", "mirror", "anchor",
    "barrel", "candle", "desert", "falcon", "glacier", "harvest", "jungle",
    "kettle", "ladder", "meadow", "needle", "orchard", "palace", "quarry",
    "ribbon", "saddle", "temple", "urchin", "volcano", "wagon", "yard",
    "zeppelin", "archway", "beacon", "cavern", "dolphin", "ember", "fountain",
    "grove", "hamlet", "iceberg", "jetty", "kiosk", "lagoon", "mill",
    "notebook", "oven", "pier", "quill", "reef", "stable", "tunnel",
    "umbrella", "vault", "well",
)

TRANSITIVE_VERBS = (
    "chased", "found", "carried", "painted", "repaired", "opened", "closed",
    "moved", "cleaned", "built", "crossed", "visited", "filled", "lifted",
    "measured", "polished",
)

INTRANSITIVE_VERBS = (
    "slept", "smiled", "waited", "arrived", "vanished", "stumbled", "rested",
    "wandered",
)

EXTRA_ADJECTIVES = ("old", "small", "green", "heavy", "bright", "narrow", "silent", "rusty")

STYLE_ADVERBS = ("then", "yesterday", "meanwhile", "afterwards")


@dataclass(frozen=True)
class WordBank:
    nouns: tuple[str, ...] = BROAD_NOUNS
    transitive_verbs: tuple[str, ...] = TRANSITIVE_VERBS
    intransitive_verbs: tuple[str, ...] = INTRANSITIVE_VERBS
    adjectives: tuple[str, ...] = EXTRA_ADJECTIVES


# Dative content words (and their verbs as plain transitives) live in the
# filler language at ordinary frequency; the dative FRAMES above supply
# the construction statistics with generic arguments.
DEFAULT_BANK = WordBank(
    nouns=BROAD_NOUNS
    + DEFAULT_DATIVE_LEXICON.themes
    + DEFAULT_DATIVE_LEXICON.recipients
    + DEFAULT_DATIVE_LEXICON.agents,
    transitive_verbs=TRANSITIVE_VERBS + DEFAULT_DATIVE_LEXICON.verbs,
)


def _pick(rng: np.random.Generator, pool: Sequence[str]) -> str:
    return pool[int(rng.integers(len(pool)))]


def _filler_sentence(rng: np.random.Generator, bank: WordBank, nouns: Sequence[str] | None = None) -> list[str]:
    nouns = nouns if nouns is not None else bank.nouns
    kind = int(rng.integers(4))
    if kind == 0:
        return ["the", _pick(rng, nouns), _pick(rng, bank.transitive_verbs), "the", _pick(rng, nouns), "."]
    if kind == 1:
        return [
            "the", _pick(rng, nouns), _pick(rng, bank.transitive_verbs),
            "the", _pick(rng, nouns), "in", "the", _pick(rng, nouns), ".",
        ]
    if kind == 2:
        return ["the", _pick(rng, nouns), _pick(rng, bank.intransitive_verbs), "."]
    return [
        "the", _pick(rng, bank.adjectives), _pick(rng, nouns),
        _pick(rng, bank.transitive_verbs), "the", _pick(rng, nouns), ".",
    ]


def _main_verb_participle(rng: np.random.Generator, bank: "WordBank") -> list[str]:
    # Main-verb reading of a participle, optionally with an adjective.
    gp = DEFAULT_GARDEN_PATH_LEXICON
    prefix = ["the"] + ([_pick(rng, gp.adjectives)] if rng.integers(2) else [])
    return prefix + [_pick(rng, gp.agents), _pick(rng, gp.participles), "about", "the", _pick(rng, gp.pp_nouns), "."]


def _full_relative(rng: np.random.Generator, bank: "WordBank") -> list[str]:
    # Unreduced relative clause with the disambiguating continuation.
    gp = DEFAULT_GARDEN_PATH_LEXICON
    return [
        "the", _pick(rng, gp.adjectives), _pick(rng, gp.agents), "who", "were",
        _pick(rng, gp.participles), "about", "the", _pick(rng, gp.pp_nouns),
        _pick(rng, gp.disambiguating_verbs), "the", _pick(rng, gp.final_modifiers),
        _pick(rng, gp.final_heads), ".",
    ]


def _plain_disambiguating_transitive(rng: np.random.Generator, bank: "WordBank") -> list[str]:
    gp = DEFAULT_GARDEN_PATH_LEXICON
    prefix = ["the"] + ([_pick(rng, gp.adjectives)] if rng.integers(2) else [])
    return prefix + [
        _pick(rng, gp.agents), _pick(rng, gp.disambiguating_verbs),
        "the", _pick(rng, gp.final_modifiers), _pick(rng, gp.final_heads), ".",
    ]


def _double_object_dative(rng: np.random.Generator, bank: "WordBank") -> list[str]:
    # Dative frame with generic arguments: the construction is learned from
    # the frame, while specific stimulus nouns stay at filler frequency.
    da = DEFAULT_DATIVE_LEXICON
    return ["the", _pick(rng, bank.nouns), _pick(rng, da.verbs), "the", _pick(rng, bank.nouns), "the", _pick(rng, bank.nouns), "."]


def _prepositional_dative(rng: np.random.Generator, bank: "WordBank") -> list[str]:
    da = DEFAULT_DATIVE_LEXICON
    return ["the", _pick(rng, bank.nouns), _pick(rng, da.verbs), "the", _pick(rng, bank.nouns), "to", "the", _pick(rng, bank.nouns), "."]


TEMPLATES = {
    "filler": None,  # dispatches to _filler_sentence with the word bank
    "main_verb_participle": _main_verb_participle,
    "full_relative": _full_relative,
    "disambiguating_transitive": _plain_disambiguating_transitive,
    "double_object": _double_object_dative,
    "prepositional": _prepositional_dative,
}

DEFAULT_TEMPLATE_WEIGHTS = {
    "filler": 0.5,
    "main_verb_participle": 0.1,
    "full_relative": 0.1,
    "disambiguating_transitive": 0.1,
    "double_object": 0.1,
    "prepositional": 0.1,
}


def background_corpus(
    n_texts: int,
    sentences_per_text: int,
    seed: int,
    *,
    bank: WordBank = DEFAULT_BANK,
    weights: dict[str, float] | None = None,
    style_rate: float = 0.02,
) -> list[Text]:
    """Base-training corpus drawn from weighted sentence templates.

    Reduced relative clauses are never generated, so they stay novel for
    the disambiguation experiment regardless of the weighting. A small
    `style_rate` keeps the adverb-initial style tokens in vocabulary while
    leaving the pattern rare, so themed genres have something to teach.
    """
    check_count("n_texts", n_texts)
    check_count("sentences_per_text", sentences_per_text)
    weights = dict(DEFAULT_TEMPLATE_WEIGHTS if weights is None else weights)
    unknown = set(weights) - set(TEMPLATES)
    if unknown:
        raise ValueError(f"unknown template kinds: {sorted(unknown)}")
    kinds = sorted(weights)
    probs = np.array([weights[k] for k in kinds], dtype=np.float64)
    if probs.sum() <= 0:
        raise ValueError("template weights must sum to a positive value")
    probs = probs / probs.sum()

    rng = np.random.default_rng(seed)
    texts = []
    for t in range(n_texts):
        sentences = []
        for _ in range(sentences_per_text):
            kind = kinds[int(rng.choice(len(kinds), p=probs))]
            template = TEMPLATES[kind]
            sentence = _filler_sentence(rng, bank) if template is None else template(rng, bank)
            if rng.random() < style_rate:
                sentence = [_pick(rng, STYLE_ADVERBS)] + sentence
            sentences.append(sentence)
        texts.append(Text(text_id=f"bg{t:04d}", sentences=sentences, genre="background"))
    return texts


def themed_texts(
    genre: str,
    noun_pool: Sequence[str],
    n_texts: int,
    sentences_per_text: int,
    seed: int,
    *,
    bank: WordBank = DEFAULT_BANK,
    topic_size: int = 6,
    style_rate: float = 0.0,
    text_id_prefix: str | None = None,
) -> list[Text]:
    """Texts that reuse a per-text topic vocabulary drawn from a genre pool.

    Each text samples `topic_size` nouns from `noun_pool` and builds all its
    sentences from them, so the text's statistics are narrow relative to a
    model trained on the full bank. With `style_rate > 0` a fraction of
    sentences open with an adverb, a pattern the background corpus never
    produces, giving genres a shared learnable style.
    """
    check_count("n_texts", n_texts)
    rng = np.random.default_rng(seed)
    prefix = text_id_prefix if text_id_prefix is not None else genre
    texts = []
    for t in range(n_texts):
        topic = [noun_pool[i] for i in rng.choice(len(noun_pool), size=min(topic_size, len(noun_pool)), replace=False)]
        sentences = []
        for _ in range(sentences_per_text):
            sentence = _filler_sentence(rng, bank, nouns=topic)
            if style_rate > 0 and rng.random() < style_rate:
                sentence = [_pick(rng, STYLE_ADVERBS)] + sentence
            sentences.append(sentence)
        texts.append(Text(text_id=f"{prefix}-{t:03d}", sentences=sentences, genre=genre))
    return texts


def genre_noun_pools(n_genres: int, pool_size: int = 20, bank: WordBank = DEFAULT_BANK) -> list[tuple[str, ...]]:
    """Disjoint noun slices, one per genre, taken from the broad bank."""
    needed = n_genres * pool_size
    if needed > len(bank.nouns):
        raise ValueError(f"noun bank has {len(bank.nouns)} entries, {needed} needed")
    return [tuple(bank.nouns[i * pool_size : (i + 1) * pool_size]) for i in range(n_genres)]


def gardenpath_saturation_texts(reps: int, seed: int, sentences_per_text: int = 72) -> list[Text]:
    """Texts enumerating every disambiguating verb/modifier combination.

    Used to pre-expose a base model to the full critical-region lexicon in
    familiar constructions (full relatives and plain transitives), so that
    list adaptation has no leftover lexical novelty to learn from the
    unambiguous condition. Reduced relatives never occur here.
    """
    check_count("reps", reps)
    gp = DEFAULT_GARDEN_PATH_LEXICON
    rng = np.random.default_rng(seed)
    sentences: list[list[str]] = []
    for _ in range(reps):
        combos = [(v, m) for v in gp.disambiguating_verbs for m in gp.final_modifiers]
        rng.shuffle(combos)
        for verb, modifier in combos:
            head = _pick(rng, gp.final_heads)
            if rng.integers(2):
                sentences.append([
                    "the", _pick(rng, gp.adjectives), _pick(rng, gp.agents), "who", "were",
                    _pick(rng, gp.participles), "about", "the", _pick(rng, gp.pp_nouns),
                    verb, "the", modifier, head, ".",
                ])
            else:
                sentences.append(["the", _pick(rng, gp.agents), verb, "the", modifier, head, "."])
    texts = []
    for t in range(0, len(sentences), sentences_per_text):
        chunk = sentences[t : t + sentences_per_text]
        texts.append(Text(text_id=f"sat{t // sentences_per_text:04d}", sentences=chunk, genre="background"))
    return texts


def filler_items(n: int, seed: int, bank: WordBank = DEFAULT_BANK) -> list[StimulusItem]:
    """Generic filler trials for stimulus lists and adaptation streams."""
    check_count("n", n)
    rng = np.random.default_rng(seed)
    return [
        StimulusItem(pair_id=-1, condition=FILLER, tokens=tuple(_filler_sentence(rng, bank)), is_filler=True)
        for _ in range(n)
    ]


def sample_filler_items(texts: Sequence[Text], n: int, seed: int) -> list[StimulusItem]:
    """Draw filler trials from an existing corpus (any user-supplied file)."""
    sentences = [tuple(s) for t in texts for s in t.sentences]
    if n > len(sentences):
        raise ValueError(f"requested {n} fillers but the corpus has {len(sentences)} sentences")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(sentences), size=n, replace=False)
    return [StimulusItem(pair_id=-1, condition=FILLER, tokens=sentences[i], is_filler=True) for i in chosen]


def cyclic_text(symbols: Sequence[str] = ("a", "b", "c"), n_sentences: int = 120, cycles_per_sentence: int = 3) -> Text:
    """A deterministic cyclic corpus; a working model memorizes it to perplexity 1."""
    sentence = list(symbols) * cycles_per_sentence
    return Text(text_id="cyclic", sentences=[list(sentence) for _ in range(n_sentences)], genre="cyclic")
