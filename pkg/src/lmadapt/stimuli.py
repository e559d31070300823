"""Controlled experimental materials: item generators and list compilation.

The original self-paced-reading texts are not redistributable, so the
generators build synthetic items from small hand-written lexicon pools
using two templates:

* Reduced-relative pairs. Ambiguous member
  ``the ADJ NOUN PART about the NOUN VERB the MOD HEAD .`` where the
  temporarily ambiguous participle turns out to head a reduced relative
  clause; the unambiguous member inserts ``who were`` before the
  participle. The critical region is the disambiguating verb plus the two
  following words and is identical across the pair.

* Dative pairs. Double-object ``the AGENT VERB the RECIPIENT the THEME .``
  versus prepositional ``the AGENT VERB the THEME to the RECIPIENT .``;
  the two members share every content word and differ only in object order
  and the inserted ``to``.

List compilation mirrors the counterbalancing scheme of the reading-time
experiment being simulated: four unique randomized orderings, the same four
with every critical item's condition flipped, and all eight again in
reverse presentation order, for sixteen lists total.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .validation import DataInvariantError, check_count

AMBIGUOUS, UNAMBIGUOUS = "ambiguous", "unambiguous"
DO, PO = "DO", "PO"
FILLER = "filler"

GARDEN_PATH_REGION_LENGTH = 3
N_LISTS = 16


@dataclass(frozen=True)
class StimulusItem:
    """One presentable sentence with optional critical-region annotation."""

    pair_id: int
    condition: str
    tokens: tuple[str, ...]
    critical_region: tuple[int, int] | None = None  # (start index, length)
    is_filler: bool = False

    def __post_init__(self):
        if self.critical_region is not None:
            start, length = self.critical_region
            if not (0 <= start and start + length <= len(self.tokens)):
                raise DataInvariantError(
                    f"pair {self.pair_id}: critical region {self.critical_region} exceeds "
                    f"sentence of {len(self.tokens)} tokens"
                )

    def region_tokens(self) -> tuple[str, ...]:
        start, length = self.critical_region
        return self.tokens[start : start + length]


@dataclass(frozen=True)
class StimulusList:
    """An ordered presentation of trials; position in `trials` is the trial index."""

    list_id: int
    trials: tuple[StimulusItem, ...]


def group_pairs(criticals: Sequence[StimulusItem]) -> dict[int, dict[str, StimulusItem]]:
    """Index critical items by pair id, requiring exactly two distinct conditions."""
    pairs: dict[int, dict[str, StimulusItem]] = {}
    for item in criticals:
        slot = pairs.setdefault(item.pair_id, {})
        if item.condition in slot:
            raise DataInvariantError(f"pair {item.pair_id}: duplicate condition {item.condition!r}")
        slot[item.condition] = item
    for pair_id, slot in pairs.items():
        if len(slot) != 2:
            raise DataInvariantError(
                f"pair {pair_id} is incomplete: has conditions {sorted(slot)} instead of two"
            )
    return pairs


def validate_list(stimulus_list: StimulusList, pairs: dict[int, dict[str, StimulusItem]], n_fillers: int) -> None:
    """Machine-check the list invariants: one condition per pair, all fillers present."""
    seen_pairs: set[int] = set()
    fillers = 0
    for item in stimulus_list.trials:
        if item.is_filler:
            fillers += 1
            continue
        if item.pair_id in seen_pairs:
            raise DataInvariantError(
                f"list {stimulus_list.list_id}: pair {item.pair_id} appears more than once"
            )
        seen_pairs.add(item.pair_id)
    if seen_pairs != set(pairs):
        raise DataInvariantError(f"list {stimulus_list.list_id}: does not cover every pair exactly once")
    if fillers != n_fillers:
        raise DataInvariantError(
            f"list {stimulus_list.list_id}: {fillers} fillers present, expected {n_fillers}"
        )


def compile_stimulus_lists(
    criticals: Sequence[StimulusItem],
    fillers: Sequence[StimulusItem],
    seed: int,
) -> list[StimulusList]:
    """Compile critical pairs and fillers into the sixteen counterbalanced lists.

    Lists 1-4 are independent random orderings with a balanced random
    condition assignment, lists 5-8 repeat those orderings with every
    critical item's condition flipped, and lists 9-16 are lists 1-8 in
    reverse presentation order. Every list carries all fillers and exactly
    one member of each pair. Deterministic in (items, seed).
    """
    if not fillers:
        raise DataInvariantError("at least one filler is required")
    pairs = group_pairs(criticals)
    pair_ids = sorted(pairs)
    conditions = sorted(next(iter(pairs.values())))
    for pair_id in pair_ids:
        if sorted(pairs[pair_id]) != conditions:
            raise DataInvariantError(
                f"pair {pair_id} uses conditions {sorted(pairs[pair_id])}, others use {conditions}"
            )
    rng = np.random.default_rng(seed)

    base_lists: list[StimulusList] = []
    flipped_lists: list[StimulusList] = []
    for base_index in range(4):
        # Balanced assignment: half the pairs in the first condition, half in the second.
        assignment = [conditions[0]] * (len(pair_ids) // 2) + [conditions[1]] * (
            len(pair_ids) - len(pair_ids) // 2
        )
        rng.shuffle(assignment)
        chosen = {pid: cond for pid, cond in zip(pair_ids, assignment)}
        trials = [pairs[pid][chosen[pid]] for pid in pair_ids] + list(fillers)
        order = rng.permutation(len(trials))
        ordered = tuple(trials[i] for i in order)
        base_lists.append(StimulusList(base_index + 1, ordered))
        flipped = tuple(
            item if item.is_filler else pairs[item.pair_id][_other(conditions, item.condition)]
            for item in ordered
        )
        flipped_lists.append(StimulusList(base_index + 5, flipped))

    eight = base_lists + flipped_lists
    reversed_lists = [
        StimulusList(lst.list_id + 8, tuple(reversed(lst.trials))) for lst in eight
    ]
    lists = eight + reversed_lists
    for lst in lists:
        validate_list(lst, pairs, len(fillers))
    return lists


def _other(conditions: Sequence[str], condition: str) -> str:
    return conditions[1] if condition == conditions[0] else conditions[0]


# ---------------------------------------------------------------------------
# Lexicon pools and generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GardenPathLexicon:
    adjectives: tuple[str, ...]
    agents: tuple[str, ...]
    participles: tuple[str, ...]
    pp_nouns: tuple[str, ...]
    disambiguating_verbs: tuple[str, ...]
    final_modifiers: tuple[str, ...]
    final_heads: tuple[str, ...]


DEFAULT_GARDEN_PATH_LEXICON = GardenPathLexicon(
    adjectives=(
        "experienced", "young", "tired", "famous", "nervous", "clever",
        "patient", "curious", "stubborn", "careful", "brave", "quiet",
    ),
    agents=(
        "soldiers", "lawyers", "teachers", "doctors", "farmers", "sailors",
        "dancers", "drivers", "bankers", "singers", "writers", "hunters",
    ),
    participles=(
        "warned", "advised", "taught", "paid", "promised", "told",
        "trained", "helped", "guided", "coached",
    ),
    pp_nouns=(
        "dangers", "storm", "deadline", "contract", "harvest", "journey",
        "audience", "verdict", "lesson", "voyage", "budget", "festival",
    ),
    disambiguating_verbs=(
        "conducted", "organized", "planned", "finished", "led", "joined",
        "watched", "described", "started", "avoided", "praised", "reported",
    ),
    final_modifiers=(
        "midnight", "morning", "secret", "village", "winter", "harbor",
        "border", "spring", "evening", "summer", "market", "mountain",
    ),
    final_heads=(
        "raid", "meeting", "parade", "rescue", "ceremony", "inspection",
        "rehearsal", "expedition", "protest", "auction", "race", "banquet",
    ),
)


@dataclass(frozen=True)
class DativeLexicon:
    agents: tuple[str, ...]
    verbs: tuple[str, ...]
    themes: tuple[str, ...]
    recipients: tuple[str, ...]


DEFAULT_DATIVE_LEXICON = DativeLexicon(
    agents=(
        "boy", "girl", "teacher", "coach", "nurse", "farmer", "artist",
        "waiter", "pilot", "clerk", "judge", "barber", "tailor", "grocer",
        "captain", "vendor", "doctor", "banker", "poet", "chef",
        "mayor", "singer", "guard", "dentist",
    ),
    verbs=(
        "threw", "gave", "handed", "sent", "showed", "brought", "offered",
        "passed", "sold", "mailed", "tossed", "loaned", "served", "paid",
        "awarded", "delivered", "promised", "fed", "read", "wrote",
    ),
    themes=(
        "ball", "book", "letter", "apple", "ticket", "hammer", "blanket",
        "basket", "bottle", "pencil", "camera", "wallet", "candle", "ladder",
        "mirror", "pillow", "ribbon", "bucket", "jacket", "carpet",
        "trophy", "magnet", "napkin", "helmet", "radio", "shovel",
        "sticker", "toolbox", "whistle", "journal", "lantern", "parcel",
        "peach", "quilt", "saddle", "teapot", "umbrella", "violin",
        "wagon", "zipper",
    ),
    recipients=(
        "dog", "friend", "student", "neighbor", "visitor", "cousin",
        "customer", "stranger", "colleague", "landlord", "painter", "plumber",
        "librarian", "gardener", "musician", "soldier", "child", "uncle",
        "aunt", "grandmother", "grandfather", "athlete", "actor", "driver",
        "baker", "butcher", "cashier", "janitor", "lifeguard", "magician",
        "merchant", "optician", "princess", "referee", "reporter", "scientist",
        "sculptor", "senator", "sheriff", "tourist",
    ),
)


def _sample_distinct_tuples(rng: np.random.Generator, pools: Sequence[Sequence[str]], n: int) -> list[tuple]:
    """Draw n distinct combinations (one element per pool), seeded and stable."""
    capacity = int(np.prod([len(p) for p in pools]))
    if n > capacity:
        raise DataInvariantError(f"lexicon too small: {n} combinations requested, only {capacity} possible")
    seen: set[tuple[int, ...]] = set()
    out: list[tuple] = []
    while len(out) < n:
        key = tuple(int(rng.integers(len(p))) for p in pools)
        if key in seen:
            continue
        seen.add(key)
        out.append(tuple(p[i] for p, i in zip(pools, key)))
    return out


def generate_garden_path_items(
    n_pairs: int,
    seed: int,
    lexicon: GardenPathLexicon = DEFAULT_GARDEN_PATH_LEXICON,
) -> list[StimulusItem]:
    """Generate reduced-relative pairs with unique critical regions.

    The pair members differ only by the inserted ``who were``; the critical
    region (disambiguating verb plus the next two tokens) is identical
    within a pair, and no two pairs share the same (verb, modifier)
    combination.
    """
    check_count("n_pairs", n_pairs, minimum=1)
    rng = np.random.default_rng(seed)
    region_combos = _sample_distinct_tuples(
        rng, [lexicon.disambiguating_verbs, lexicon.final_modifiers], n_pairs
    )
    items: list[StimulusItem] = []
    for pair_id, (verb, modifier) in enumerate(region_combos):
        adj = str(rng.choice(lexicon.adjectives))
        agent = str(rng.choice(lexicon.agents))
        part = str(rng.choice(lexicon.participles))
        pp_noun = str(rng.choice(lexicon.pp_nouns))
        head = str(rng.choice(lexicon.final_heads))
        ambiguous = ("the", adj, agent, part, "about", "the", pp_noun, verb, "the", modifier, head, ".")
        unambiguous = ("the", adj, agent, "who", "were", part, "about", "the", pp_noun, verb, "the", modifier, head, ".")
        items.append(StimulusItem(pair_id, AMBIGUOUS, ambiguous, (7, GARDEN_PATH_REGION_LENGTH)))
        items.append(StimulusItem(pair_id, UNAMBIGUOUS, unambiguous, (9, GARDEN_PATH_REGION_LENGTH)))
    return items


def generate_dative_items(
    n_pairs: int,
    seed: int,
    lexicon: DativeLexicon = DEFAULT_DATIVE_LEXICON,
    *,
    disjoint_halves: bool = True,
) -> list[StimulusItem]:
    """Generate DO/PO pairs sharing all content words within a pair.

    With `disjoint_halves` (the default) the first and second halves of the
    output draw from disjoint sub-pools, so the second half can serve as a
    shared-syntax test set with zero content-word overlap against the first.
    """
    check_count("n_pairs", n_pairs, minimum=1)
    rng = np.random.default_rng(seed)

    def halves(pool: tuple[str, ...]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        mid = len(pool) // 2
        return pool[:mid], pool[mid:]

    if disjoint_halves:
        n_first = n_pairs // 2
        groups = [
            (n_first, [halves(lexicon.agents)[0], halves(lexicon.verbs)[0], halves(lexicon.themes)[0], halves(lexicon.recipients)[0]]),
            (n_pairs - n_first, [halves(lexicon.agents)[1], halves(lexicon.verbs)[1], halves(lexicon.themes)[1], halves(lexicon.recipients)[1]]),
        ]
    else:
        groups = [(n_pairs, [lexicon.agents, lexicon.verbs, lexicon.themes, lexicon.recipients])]

    items: list[StimulusItem] = []
    pair_id = 0
    for count, pools in groups:
        if count == 0:
            continue
        for agent, verb, theme, recipient in _sample_distinct_tuples(rng, pools, count):
            do = ("the", agent, verb, "the", recipient, "the", theme, ".")
            po = ("the", agent, verb, "the", theme, "to", "the", recipient, ".")
            items.append(StimulusItem(pair_id, DO, do))
            items.append(StimulusItem(pair_id, PO, po))
            pair_id += 1
    return items


CONTENT_STOPWORDS = frozenset({"the", "a", "to", "about", "who", "were", "."})


def content_words(tokens: Sequence[str]) -> set[str]:
    return {t for t in tokens if t not in CONTENT_STOPWORDS}


@dataclass
class DativeMaterials:
    """Adaptation stream plus the two held-out test sets for one direction."""

    direction: str                      # construction adapted on: DO or PO
    adaptation_stream: list[StimulusItem]
    shared_lexicon_test: list[StimulusItem]   # counterparts of the adapted pairs
    shared_syntax_test: list[StimulusItem]    # same construction, new content words
    adaptation_pair_ids: list[int] = field(default_factory=list)
    test_pair_ids: list[int] = field(default_factory=list)


def assemble_dative_adaptation_set(
    pairs: Sequence[StimulusItem],
    fillers: Sequence[StimulusItem],
    direction: str = DO,
    seed: int = 0,
    *,
    n_adapt: int | None = None,
    n_fillers: int | None = None,
) -> DativeMaterials:
    """Mix critical sentences into fillers and build the two test sets.

    The first half of the pairs supplies the adaptation sentences (their
    counterpart construction becomes the shared-lexicon test); the second
    half supplies the shared-syntax test and must not share content words
    with the adaptation half. At the reference sizes (200 pairs, 1000
    fillers) the shuffled adaptation stream has 1100 sentences.
    """
    if direction not in (DO, PO):
        raise ValueError(f"direction must be DO or PO, got {direction!r}")
    grouped = group_pairs(pairs)
    pair_ids = sorted(grouped)
    half = len(pair_ids) // 2
    n_adapt = half if n_adapt is None else n_adapt
    if n_adapt < 1 or n_adapt > half:
        raise DataInvariantError(f"n_adapt={n_adapt} needs {2 * n_adapt} pairs, only {len(pair_ids)} given")
    adapt_ids = pair_ids[:n_adapt]
    test_ids = pair_ids[half : half + n_adapt]

    adapt_content: set[str] = set()
    for pid in adapt_ids:
        adapt_content |= content_words(grouped[pid][direction].tokens)
    for pid in test_ids:
        overlap = adapt_content & content_words(grouped[pid][direction].tokens)
        if overlap:
            raise DataInvariantError(
                f"adaptation and shared-syntax pairs overlap in content words: {sorted(overlap)}"
            )

    n_fillers = len(fillers) if n_fillers is None else n_fillers
    if n_fillers > len(fillers):
        raise DataInvariantError(f"requested {n_fillers} fillers but only {len(fillers)} available")
    counterpart = PO if direction == DO else DO
    stream = [grouped[pid][direction] for pid in adapt_ids] + list(fillers[:n_fillers])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(stream))
    return DativeMaterials(
        direction=direction,
        adaptation_stream=[stream[i] for i in order],
        shared_lexicon_test=[grouped[pid][counterpart] for pid in adapt_ids],
        shared_syntax_test=[grouped[pid][direction] for pid in test_ids],
        adaptation_pair_ids=list(adapt_ids),
        test_pair_ids=list(test_ids),
    )


def validate_in_vocabulary(items: Sequence[StimulusItem], vocab) -> None:
    """Reject items whose critical-region tokens would map to the unknown id."""
    for item in items:
        if item.critical_region is None:
            continue
        for tok in item.region_tokens():
            if tok not in vocab:
                raise DataInvariantError(
                    f"pair {item.pair_id}: critical-region token {tok!r} is out of vocabulary"
                )


# ---------------------------------------------------------------------------
# TSV serialization
# ---------------------------------------------------------------------------

STIMULUS_TSV_HEADER = ["list_id", "trial_index", "pair_id", "condition", "region_start", "region_len", "tokens"]


def write_stimulus_lists(lists: Sequence[StimulusList], path) -> None:
    lines = ["\t".join(STIMULUS_TSV_HEADER)]
    for lst in lists:
        for trial_index, item in enumerate(lst.trials):
            start, length = item.critical_region if item.critical_region else (-1, 0)
            lines.append(
                "\t".join(
                    [
                        str(lst.list_id),
                        str(trial_index),
                        str(item.pair_id),
                        item.condition,
                        str(start),
                        str(length),
                        " ".join(item.tokens),
                    ]
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_stimulus_lists(path) -> list[StimulusList]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != STIMULUS_TSV_HEADER:
        raise DataInvariantError(f"{path}: missing or wrong stimulus TSV header")
    by_list: dict[int, list[tuple[int, StimulusItem]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(STIMULUS_TSV_HEADER):
            raise DataInvariantError(f"{path}:{lineno}: expected {len(STIMULUS_TSV_HEADER)} fields")
        list_id, trial_index, pair_id = int(parts[0]), int(parts[1]), int(parts[2])
        condition = parts[3]
        start, length = int(parts[4]), int(parts[5])
        region = (start, length) if start >= 0 and length > 0 else None
        item = StimulusItem(pair_id, condition, tuple(parts[6].split()), region, is_filler=condition == FILLER)
        by_list.setdefault(list_id, []).append((trial_index, item))
    lists = []
    for list_id in sorted(by_list):
        trials = tuple(item for _, item in sorted(by_list[list_id]))
        lists.append(StimulusList(list_id, trials))
    return lists
