"""Surprisal and perplexity computation, critical-region measures, and OLS.

Surprisal is kept in nats internally (perplexity is then just the
exponentiated token-weighted mean); helpers convert to bits on request.
The regression code is a plain fixed-effects least-squares fit via QR, which
is all the in-repo analyses need; per-token predictor tables for external
mixed-effects tooling come out of `export_lmem_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .corpus import EOS, UNK
from .validation import DataInvariantError

LN2 = math.log(2.0)


@dataclass
class SurprisalRecord:
    """One scored token with its regression covariates.

    `token_index` counts scored tokens from the start of the stream the
    record belongs to (text or adaptation run), `sentence_index` is the
    sentence's position in its text, and `sentence_position` is the token's
    1-based position within its sentence. Stimulus annotations (condition,
    pair, region slot, list, trial) are None for plain corpus tokens.
    """

    text_id: str
    sentence_index: int
    token_index: int
    token: str
    surprisal: float
    word_length: int
    sentence_position: int
    is_unk: bool = False
    is_eos: bool = False
    condition: str | None = None
    pair_id: int | None = None
    region_index: int | None = None
    list_id: int | None = None
    trial_index: int | None = None
    diverged: bool = False

    def surprisal_bits(self) -> float:
        return self.surprisal / LN2


RECORD_COLUMNS = [f.name for f in fields(SurprisalRecord)]


def surprisal_from_logprob(logprob: float, *, bits: bool = False) -> float:
    """Convert a log-probability (natural log, <= 0) into surprisal."""
    if logprob > 0:
        raise ValueError(f"log-probability must be <= 0, got {logprob!r}")
    value = -float(logprob)
    return value / LN2 if bits else value


def perplexity(values: Iterable[float | SurprisalRecord]) -> float:
    """Exponentiated token-weighted mean negative log-likelihood.

    Accepts raw per-token surprisals in nats or SurprisalRecords. Streams
    containing non-finite entries (diverged runs) yield inf rather than
    raising, so divergent experiment cells stay reportable.
    """
    total = 0.0
    count = 0
    for v in values:
        s = v.surprisal if isinstance(v, SurprisalRecord) else float(v)
        if not math.isfinite(s):
            return math.inf
        total += s
        count += 1
    if count == 0:
        raise ValueError("perplexity needs at least one scored token")
    mean = total / count
    return math.exp(mean) if mean < 700 else math.inf


def records_from_sentence(
    log_probs: np.ndarray,
    targets: Sequence[int],
    token_strings: Sequence[str],
    vocab,
    *,
    text_id: str,
    sentence_index: int,
    start_token_index: int,
    condition: str | None = None,
    pair_id: int | None = None,
    region: tuple[int, int] | None = None,
    list_id: int | None = None,
    trial_index: int | None = None,
) -> list[SurprisalRecord]:
    """Build one record per scored target of a sentence.

    `token_strings` are the sentence's surface tokens; the appended
    end-of-sentence target gets the reserved marker string. `region` is a
    (start, length) span in sentence token coordinates; covered records get
    their slot index 0..length-1.
    """
    from .corpus import EOS_ID, UNK_ID

    picked = log_probs[np.arange(len(targets)), targets]
    records = []
    for i, (target, logp) in enumerate(zip(targets, picked)):
        in_sentence = i < len(token_strings)
        token = token_strings[i] if in_sentence else EOS
        region_index = None
        if region is not None and in_sentence and region[0] <= i < region[0] + region[1]:
            region_index = i - region[0]
        finite = math.isfinite(logp)
        records.append(
            SurprisalRecord(
                text_id=text_id,
                sentence_index=sentence_index,
                token_index=start_token_index + i,
                token=token,
                surprisal=-float(logp) if finite else math.inf,
                word_length=len(token),
                sentence_position=i + 1,
                is_unk=target == UNK_ID,
                is_eos=target == EOS_ID,
                condition=condition,
                pair_id=pair_id,
                region_index=region_index,
                list_id=list_id,
                trial_index=trial_index,
                diverged=not finite,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Critical-region measures
# ---------------------------------------------------------------------------


def region_mean_surprisal(records: Sequence[SurprisalRecord], item) -> float:
    """Mean surprisal over an item's critical region (all slots required).

    `records` are the records of that single trial's sentence; the item
    carries the (start, length) region span. Token forms are re-checked
    against the item so a misaligned scoring run is rejected rather than
    silently averaged.
    """
    if item.critical_region is None:
        raise DataInvariantError(f"item pair {item.pair_id} has no critical region")
    start, length = item.critical_region
    span = {start + k: k for k in range(length)}
    found: dict[int, SurprisalRecord] = {}
    for rec in records:
        pos = rec.sentence_position - 1
        if pos in span:
            expected = item.tokens[pos]
            if rec.token != expected:
                raise DataInvariantError(
                    f"pair {item.pair_id}: region token mismatch at position {pos}: "
                    f"scored {rec.token!r}, item has {expected!r}"
                )
            found[pos] = rec
    if len(found) != length:
        raise DataInvariantError(
            f"pair {item.pair_id}: critical region not fully scored ({len(found)} of {length} tokens)"
        )
    return float(np.mean([found[p].surprisal for p in sorted(found)]))


def disambiguation_penalty(
    ambiguous_records: Sequence[SurprisalRecord],
    ambiguous_item,
    unambiguous_records: Sequence[SurprisalRecord],
    unambiguous_item,
) -> float:
    """Ambiguous-condition region mean minus the same words' unambiguous mean.

    Positive values mean the ambiguity cost is still present. The two items
    must share identical critical-region word forms.
    """
    a_start, a_len = ambiguous_item.critical_region
    u_start, u_len = unambiguous_item.critical_region
    a_words = tuple(ambiguous_item.tokens[a_start : a_start + a_len])
    u_words = tuple(unambiguous_item.tokens[u_start : u_start + u_len])
    if a_words != u_words:
        raise DataInvariantError(
            f"pair {ambiguous_item.pair_id}: region word forms differ between conditions: "
            f"{a_words} vs {u_words}"
        )
    return region_mean_surprisal(ambiguous_records, ambiguous_item) - region_mean_surprisal(
        unambiguous_records, unambiguous_item
    )


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------


@dataclass
class RegressionResult:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    residuals: np.ndarray
    n: int
    columns: list[str] = field(default_factory=list)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.columns.index(name)])

    def t_value(self, name: str) -> float:
        return float(self.t_values[self.columns.index(name)])


def ols_fit(design: np.ndarray, response: np.ndarray, columns: Sequence[str] | None = None) -> RegressionResult:
    """Least squares via QR with classical standard errors.

    Requires more observations than columns and a full-rank design; a rank
    deficiency is rejected naming the offending column. Standard errors
    come from the residual variance; for an exactly interpolating fit they
    are zero and the t-values are reported as +-inf.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64).reshape(-1)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-D")
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"design has {n} rows but response has {y.shape[0]}")
    if n <= p:
        raise ValueError(f"need more observations than columns, got n={n}, p={p}")
    names = list(columns) if columns is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError(f"{len(names)} column names for {p} columns")

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
    deficient = np.nonzero(diag <= tol)[0]
    if deficient.size:
        raise ValueError(
            f"design matrix is rank deficient: column {names[deficient[0]]!r} is linearly dependent"
        )

    beta = solve_triangular(R, Q.T @ y)
    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    sigma2 = rss / (n - p)
    r_inv = solve_triangular(R, np.eye(p))
    se = np.sqrt(np.maximum(sigma2 * (r_inv * r_inv).sum(axis=1), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.sign(beta) * np.inf)
    return RegressionResult(beta, se, t, residuals, n, names)


def residualize_by_order(values: Sequence[float], trial_indices: Sequence[int]) -> np.ndarray:
    """Residuals of a straight-line fit of `values` on presentation order.

    Removes the global practice/drift trend before condition means are
    compared. Requires at least 3 trials.
    """
    y = np.asarray(values, dtype=np.float64)
    x = np.asarray(trial_indices, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError("values and trial indices must align")
    if y.size < 3:
        raise ValueError(f"residualization needs at least 3 trials, got {y.size}")
    X = np.column_stack([np.ones_like(x), x])
    return ols_fit(X, y, ["intercept", "trial_index"]).residuals


def penalty_trend(orders: Sequence[int], values: Sequence[float], label: str = "item_order") -> RegressionResult:
    """Regression of a per-item series on item order, pooled over lists.

    Used for the disambiguation-penalty series (the slope sign is the
    outcome of interest) and, as a companion null check, for the raw
    unambiguous-condition series.
    """
    x = np.asarray(orders, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("orders and values must align")
    X = np.column_stack([np.ones_like(x), x])
    return ols_fit(X, y, ["intercept", label])


# ---------------------------------------------------------------------------
# Predictor table for external mixed-effects tooling
# ---------------------------------------------------------------------------

LMEM_COLUMNS = [
    "text_id",
    "sentence_index",
    "token_index",
    "token",
    "word_length",
    "sentence_position",
    "nonadaptive_surprisal",
    "adaptive_surprisal",
]


def export_lmem_table(
    adaptive: Sequence[SurprisalRecord],
    nonadaptive: Sequence[SurprisalRecord],
    reading_times: Sequence[float] | None = None,
    *,
    include_unk: bool = False,
    include_eos: bool = False,
) -> list[dict]:
    """One row per token with both surprisal predictors, aligned pairwise.

    The two record streams must describe the same tokens in the same order;
    the first divergent token is rejected by position. Unknown-word and
    end-of-sentence rows are dropped by default (flags restore them).
    Optional reading times attach as a final column, aligned with the
    unfiltered stream.
    """
    if len(adaptive) != len(nonadaptive):
        raise DataInvariantError(
            f"record streams differ in length: {len(adaptive)} adaptive vs {len(nonadaptive)} non-adaptive"
        )
    if reading_times is not None and len(reading_times) != len(adaptive):
        raise DataInvariantError(
            f"{len(reading_times)} reading times for {len(adaptive)} records"
        )
    rows = []
    for i, (a, b) in enumerate(zip(adaptive, nonadaptive)):
        key_a = (a.text_id, a.sentence_index, a.sentence_position, a.token)
        key_b = (b.text_id, b.sentence_index, b.sentence_position, b.token)
        if key_a != key_b:
            raise DataInvariantError(f"record streams diverge at row {i}: {key_a} vs {key_b}")
        if (a.is_unk and not include_unk) or (a.is_eos and not include_eos):
            continue
        row = {
            "text_id": a.text_id,
            "sentence_index": a.sentence_index,
            "token_index": a.token_index,
            "token": a.token,
            "word_length": a.word_length,
            "sentence_position": a.sentence_position,
            "nonadaptive_surprisal": b.surprisal,
            "adaptive_surprisal": a.surprisal,
        }
        if reading_times is not None:
            row["reading_time"] = float(reading_times[i])
        rows.append(row)
    return rows


def lmem_ols_proxy(rows: Sequence[dict], response: str = "reading_time") -> RegressionResult:
    """Fixed-effects-only sanity fit on an exported predictor table."""
    if not rows:
        raise ValueError("empty predictor table")
    predictors = ["word_length", "sentence_position", "nonadaptive_surprisal", "adaptive_surprisal"]
    X = np.column_stack(
        [np.ones(len(rows))] + [np.asarray([r[c] for r in rows], dtype=np.float64) for c in predictors]
    )
    y = np.asarray([r[response] for r in rows], dtype=np.float64)
    return ols_fit(X, y, ["intercept"] + predictors)


# ---------------------------------------------------------------------------
# Garden-path list analysis
# ---------------------------------------------------------------------------


@dataclass
class RegionEntry:
    """One critical trial's region mean with its presentation bookkeeping."""

    list_id: int
    trial_index: int
    critical_order: int      # 1-based count of critical items seen so far in the list
    pair_id: int
    condition: str
    region_mean: float


@dataclass
class GardenPathSeries:
    """Everything the disambiguation-penalty analysis produces."""

    entries: list[RegionEntry]
    penalty_orders: list[int]
    penalties: list[float]
    ambiguous_trend: RegressionResult
    unambiguous_trend: RegressionResult
    residual_curves: list[dict]
    n_dropped_nonfinite: int = 0


def gardenpath_series(lists, records_by_list: dict[int, Sequence[SurprisalRecord]]) -> GardenPathSeries:
    """Turn per-list adaptation records into penalty and trend series.

    List construction pairs each of lists 1-4 and 9-12 with a twin (id + 4)
    that presents the same items at the same positions in the opposite
    condition, so the penalty at a given item order is the ambiguous
    member's region mean minus its twin's unambiguous mean. The companion
    unambiguous series pools the raw region means of all unambiguous trials
    by order. Non-finite region means (diverged runs) are dropped and
    counted rather than poisoning the regressions.
    """
    by_id = {lst.list_id: lst for lst in lists}
    entry_map: dict[tuple[int, int], RegionEntry] = {}
    entries: list[RegionEntry] = []
    dropped = 0

    for lst in lists:
        grouped: dict[int, list[SurprisalRecord]] = {}
        for rec in records_by_list[lst.list_id]:
            grouped.setdefault(rec.trial_index, []).append(rec)
        order = 0
        for trial_index, item in enumerate(lst.trials):
            if item.is_filler:
                continue
            order += 1
            mean = region_mean_surprisal(grouped.get(trial_index, ()), item)
            entry = RegionEntry(lst.list_id, trial_index, order, item.pair_id, item.condition, mean)
            if not math.isfinite(mean):
                dropped += 1
                continue
            entries.append(entry)
            entry_map[(lst.list_id, trial_index)] = entry

    penalty_orders: list[int] = []
    penalties: list[float] = []
    for base_id in (1, 2, 3, 4, 9, 10, 11, 12):
        twin_id = base_id + 4
        if base_id not in by_id or twin_id not in by_id:
            continue
        for trial_index, item in enumerate(by_id[base_id].trials):
            if item.is_filler:
                continue
            e1 = entry_map.get((base_id, trial_index))
            e2 = entry_map.get((twin_id, trial_index))
            if e1 is None or e2 is None:
                continue
            if e1.pair_id != e2.pair_id:
                raise DataInvariantError(
                    f"lists {base_id} and {twin_id} disagree on the pair at trial {trial_index}"
                )
            amb, unamb = (e1, e2) if e1.condition == "ambiguous" else (e2, e1)
            if amb.condition != "ambiguous" or unamb.condition != "unambiguous":
                raise DataInvariantError(
                    f"pair {e1.pair_id} at trial {trial_index}: conditions are not complementary"
                )
            penalty_orders.append(e1.critical_order)
            penalties.append(amb.region_mean - unamb.region_mean)

    ambiguous_trend = penalty_trend(penalty_orders, penalties)
    unamb_entries = [e for e in entries if e.condition == "unambiguous"]
    unambiguous_trend = penalty_trend(
        [e.critical_order for e in unamb_entries], [e.region_mean for e in unamb_entries]
    )

    # Order-corrected per-condition curves: one pooled straight-line fit of
    # region mean on presentation index, residuals averaged by condition/order.
    trial_idx = [e.trial_index for e in entries]
    residuals = residualize_by_order([e.region_mean for e in entries], trial_idx)
    bucket: dict[tuple[str, int], list[float]] = {}
    for e, r in zip(entries, residuals):
        bucket.setdefault((e.condition, e.critical_order), []).append(float(r))
    residual_curves = [
        {
            "condition": condition,
            "critical_order": order,
            "mean_residual_surprisal": float(np.mean(vals)),
            "n": len(vals),
        }
        for (condition, order), vals in sorted(bucket.items())
    ]
    return GardenPathSeries(
        entries, penalty_orders, penalties, ambiguous_trend, unambiguous_trend, residual_curves, dropped
    )
