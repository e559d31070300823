"""Batch command-line front end for reproducible experiment runs.

Subcommands: ``train``, ``adapt-eval``, ``gardenpath``, ``dative-sweep``,
``forgetting``, ``gen-stimuli``, ``export-lmem``. Every run writes a
``run_config.json`` (command, resolved settings, seed, tool version, input
fingerprints) next to its outputs, and all outputs are deterministic
functions of inputs, settings and seed.

Settings come from plain ``key=value`` config files (``--config``) with
``--set key=value`` command-line overrides; no environment variables are
consulted. ``clip_norm=off`` disables clipping; ``lr_grid`` is a comma
separated list.

Exit codes: 0 success; 1 usage or invalid configuration; 2 data invariant
violation (malformed corpora, fingerprint mismatches, broken stimulus
lists); 3 a protocol run diverged (outputs are still written). Divergent
cells inside a learning-rate sweep are expected measurements, are recorded
in the tables, and do not trigger exit code 3.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import (
    DEFAULT_LR_GRID,
    AdaptationConfig,
    forgetting_grid,
    genre_protocol,
    incremental_eval,
    learning_rate_sweep,
    run_stimulus_list,
)
from .analysis import (
    export_lmem_table,
    gardenpath_series,
    lmem_ols_proxy,
    perplexity,
)
from .corpus import Text, Vocabulary, build_vocab, encode_text, group_by_genre, read_corpus, write_corpus
from .estimator import AdaptiveLSTM
from .model import CheckpointError, HyperParams, save_checkpoint, train_base_model
from .reporting import (
    ProtocolReport,
    file_fingerprint,
    json_safe,
    validate_run_config_dict,
    write_json,
    write_records_tsv,
    write_report,
    write_table,
    read_records_tsv,
)
from .stimuli import (
    DO,
    PO,
    assemble_dative_adaptation_set,
    compile_stimulus_lists,
    generate_dative_items,
    generate_garden_path_items,
    read_stimulus_lists,
    validate_in_vocabulary,
    write_stimulus_lists,
)
from .synth import (
    background_corpus,
    cyclic_text,
    filler_items,
    genre_noun_pools,
    sample_filler_items,
    themed_texts,
)
from .validation import DataInvariantError

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_DIVERGED = 0, 1, 2, 3


def _parse_clip(value: str):
    return None if value.lower() in ("off", "none") else float(value)


def _parse_grid(value: str):
    return tuple(float(x) for x in value.split(",") if x.strip())


SETTINGS: dict[str, tuple] = {
    # (caster, default)
    "seed": (int, 0),
    "precision": (str, "fp32"),
    "num_layers": (int, 2),
    "hidden_size": (int, 64),
    "embed_size": (int, 64),
    "dropout_rate": (float, 0.2),
    "clip_norm": (_parse_clip, 0.25),
    "base_learning_rate": (float, 20.0),
    "learning_rate": (float, 20.0),
    "loss_reduction": (str, "mean"),
    "epochs": (int, 40),
    "patience": (int, 3),
    "min_count": (int, 1),
    "validation_fraction": (float, 0.1),
    "state_policy": (str, "carry_within_text"),
    "update_with_dropout": (lambda v: v.lower() in ("1", "true", "yes"), False),
    "lr_grid": (_parse_grid, DEFAULT_LR_GRID),
    "reps": (int, 10),
    "n_pairs": (int, 40),
    "n_fillers": (int, 80),
    "n_dative_pairs": (int, 200),
    "n_dative_fillers": (int, 1000),
    "n_adapt": (int, 200),
    "n_heldout": (int, 200),
    "n_texts": (int, 20),
    "sentences_per_text": (int, 40),
    "n_genres": (int, 2),
    "genre_pool_size": (int, 20),
    "topic_size": (int, 6),
    "style_rate": (float, 0.3),
    "stimulus_coverage": (float, 0.5),
}


def load_settings(config_path: str | None, overrides: list[str]) -> dict:
    values = {key: default for key, (_, default) in SETTINGS.items()}

    def apply(key: str, raw: str, source: str):
        if key not in SETTINGS:
            raise ValueError(f"{source}: unknown setting {key!r}")
        caster, _ = SETTINGS[key]
        try:
            values[key] = caster(raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{source}: bad value for {key}: {raw!r} ({exc})") from exc

    if config_path:
        for lineno, line in enumerate(Path(config_path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{config_path}:{lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            apply(key.strip(), raw.strip(), f"{config_path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        apply(key.strip(), raw.strip(), "--set")
    return values


def _hyper_from(settings: dict) -> HyperParams:
    return HyperParams(
        num_layers=settings["num_layers"],
        hidden_size=settings["hidden_size"],
        embed_size=settings["embed_size"],
        dropout_rate=settings["dropout_rate"],
        clip_norm=settings["clip_norm"],
        base_learning_rate=settings["base_learning_rate"],
        seed=settings["seed"],
        loss_reduction=settings["loss_reduction"],
        precision=settings["precision"],
    )


def _adapt_config(settings: dict, **kwargs) -> AdaptationConfig:
    base = dict(
        learning_rate=settings["learning_rate"],
        state_policy=settings["state_policy"],
        update_with_dropout=settings["update_with_dropout"],
        clip_norm=None,
    )
    base.update(kwargs)
    return AdaptationConfig(**base)


def _write_run_config(out_dir: Path, command: str, settings: dict, inputs: dict[str, str]) -> None:
    data = {
        "command": command,
        "tool_version": __version__,
        "seed": settings["seed"],
        "config": json_safe({k: list(v) if isinstance(v, tuple) else v for k, v in settings.items()}),
        "input_fingerprints": {name: file_fingerprint(path) for name, path in sorted(inputs.items())},
    }
    validate_run_config_dict(data)
    write_json(data, out_dir / "run_config.json")


def _load_model(args) -> AdaptiveLSTM:
    vocab = Vocabulary.load(args.vocab)
    return AdaptiveLSTM.from_checkpoint(args.checkpoint, vocab)


def _require_files(*paths) -> None:
    for path in paths:
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(f"input file not found: {path}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args, settings: dict) -> int:
    _require_files(args.corpus, args.valid_corpus)
    out = _out_dir(args)
    texts = read_corpus(args.corpus)
    vocab = build_vocab(texts, settings["min_count"])
    hyper = _hyper_from(settings)

    if args.valid_corpus:
        train_texts, valid_texts = texts, read_corpus(args.valid_corpus)
    else:
        n_valid = max(1, int(round(settings["validation_fraction"] * len(texts))))
        if len(texts) < 2:
            raise DataInvariantError("corpus has a single text; supply --valid-corpus for early stopping")
        train_texts, valid_texts = texts[:-n_valid], texts[-n_valid:]

    checkpoint = train_base_model(
        [encode_text(t, vocab) for t in train_texts],
        [encode_text(t, vocab) for t in valid_texts],
        vocab,
        hyper,
        epochs=settings["epochs"],
        patience=settings["patience"],
    )
    save_checkpoint(checkpoint, out / "model.ckpt")
    vocab.save(out / "vocab.txt")
    write_json(json_safe({"hyper": hyper.to_dict(), **checkpoint.metadata}), out / "training_log.json")
    inputs = {"corpus": args.corpus}
    if args.valid_corpus:
        inputs["valid_corpus"] = args.valid_corpus
    _write_run_config(out, "train", settings, inputs)
    print(f"trained {checkpoint.metadata['epochs_trained']} epochs, "
          f"best validation perplexity {checkpoint.metadata['best_valid_perplexity']:.4f}")
    return EXIT_OK


def cmd_adapt_eval(args, settings: dict) -> int:
    _require_files(args.checkpoint, args.vocab, args.corpus)
    out = _out_dir(args)
    model = _load_model(args)
    texts = read_corpus(args.corpus)
    config = _adapt_config(settings)

    table_rows = []
    diverged = False
    for text in texts:
        report = incremental_eval(model, text, config)
        write_report(report, out, f"incremental_{text.text_id}")
        s = report.summary
        table_rows.append(
            {
                "scope": "text",
                "name": text.text_id,
                "adaptive_perplexity": s["adaptive_perplexity"],
                "nonadaptive_perplexity": s["nonadaptive_perplexity"],
                "never_revert_perplexity": None,
                "diverged": s["diverged"],
            }
        )
        diverged = diverged or s["diverged"]

    by_genre = {g: ts for g, ts in group_by_genre(texts).items() if len(ts) >= 2}
    if by_genre:
        genre_report = genre_protocol(model, by_genre, config)
        write_report(genre_report, out, "genre_protocol")
        for genre, stats in sorted(genre_report.summary["genres"].items()):
            table_rows.append(
                {
                    "scope": "genre",
                    "name": genre,
                    "adaptive_perplexity": stats["per_text"],
                    "nonadaptive_perplexity": stats["nonadaptive"],
                    "never_revert_perplexity": stats["never"],
                    "diverged": stats["per_text_diverged"] or stats["never_diverged"],
                }
            )
            diverged = diverged or stats["per_text_diverged"] or stats["never_diverged"]

    write_table(
        table_rows,
        ["scope", "name", "adaptive_perplexity", "nonadaptive_perplexity", "never_revert_perplexity", "diverged"],
        out / "perplexity_table.tsv",
    )
    _write_run_config(out, "adapt-eval", settings,
                      {"checkpoint": args.checkpoint, "vocab": args.vocab, "corpus": args.corpus})
    for row in table_rows:
        print(f"{row['scope']:5s} {row['name']}: adaptive {row['adaptive_perplexity']} "
              f"vs non-adaptive {row['nonadaptive_perplexity']}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_gardenpath(args, settings: dict) -> int:
    _require_files(args.checkpoint, args.vocab, args.lists)
    out = _out_dir(args)
    model = _load_model(args)
    seed = settings["seed"]

    if args.lists:
        lists = read_stimulus_lists(args.lists)
    else:
        criticals = generate_garden_path_items(settings["n_pairs"], seed)
        fillers = filler_items(settings["n_fillers"], seed + 1)
        lists = compile_stimulus_lists(criticals, fillers, seed + 2)
    for lst in lists:
        validate_in_vocabulary(lst.trials, model.vocab_)
    write_stimulus_lists(lists, out / "stimuli.tsv")

    config = _adapt_config(settings)
    records_by_list = {}
    all_records = []
    all_rows = []
    diverged = False
    for lst in lists:
        run = run_stimulus_list(model, lst, config)
        records_by_list[lst.list_id] = run.records
        all_records.extend(run.records)
        all_rows.extend(run.sentence_rows)
        diverged = diverged or run.diverged

    series = gardenpath_series(lists, records_by_list)
    summary = {
        "n_lists": len(lists),
        "n_penalty_points": len(series.penalties),
        "ambiguous_item_order_slope": series.ambiguous_trend.coefficient("item_order"),
        "ambiguous_item_order_t": series.ambiguous_trend.t_value("item_order"),
        "unambiguous_item_order_slope": series.unambiguous_trend.coefficient("item_order"),
        "unambiguous_item_order_t": series.unambiguous_trend.t_value("item_order"),
        "mean_penalty": float(np.mean(series.penalties)) if series.penalties else None,
        "n_dropped_nonfinite": series.n_dropped_nonfinite,
        "diverged": diverged,
    }
    report = ProtocolReport("gardenpath", config.to_dict(), seed, summary, all_rows, all_records)
    write_report(report, out, "gardenpath_report")
    write_table(
        [
            {"critical_order": o, "penalty": p}
            for o, p in zip(series.penalty_orders, series.penalties)
        ],
        ["critical_order", "penalty"],
        out / "penalty_series.tsv",
    )
    write_table(
        [
            {"x": row["critical_order"], "y": row["mean_residual_surprisal"],
             "condition": row["condition"], "series": "order_corrected_region_surprisal"}
            for row in series.residual_curves
        ],
        ["x", "y", "condition", "series"],
        out / "plot_data.csv",
        sep=",",
    )
    _write_run_config(out, "gardenpath", settings,
                      {"checkpoint": args.checkpoint, "vocab": args.vocab,
                       **({"lists": args.lists} if args.lists else {})})
    print(f"ambiguous item-order slope: {summary['ambiguous_item_order_slope']:+.5f} "
          f"(t={summary['ambiguous_item_order_t']:+.2f}) over {summary['n_penalty_points']} penalty points")
    print(f"unambiguous item-order slope: {summary['unambiguous_item_order_slope']:+.5f} "
          f"(t={summary['unambiguous_item_order_t']:+.2f})")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_dative_sweep(args, settings: dict) -> int:
    _require_files(args.checkpoint, args.vocab, args.filler_corpus)
    out = _out_dir(args)
    model = _load_model(args)
    seed = settings["seed"]
    direction = args.direction
    grid = settings["lr_grid"]
    filler_texts = read_corpus(args.filler_corpus) if args.filler_corpus else None

    all_rows = []
    for rep in range(settings["reps"]):
        rep_seed = seed + rep
        pairs = generate_dative_items(settings["n_dative_pairs"], rep_seed)
        if filler_texts is not None:
            fillers = sample_filler_items(filler_texts, settings["n_dative_fillers"], rep_seed + 1)
        else:
            fillers = filler_items(settings["n_dative_fillers"], rep_seed + 1)
        materials = assemble_dative_adaptation_set(pairs, fillers, direction, rep_seed + 2)
        rows = learning_rate_sweep(
            model,
            [item.tokens for item in materials.adaptation_stream],
            {
                "shared_lexicon": [item.tokens for item in materials.shared_lexicon_test],
                "shared_syntax": [item.tokens for item in materials.shared_syntax_test],
            },
            _adapt_config(settings),
            grid,
        )
        for row in rows:
            row["rep"] = rep
            row["direction"] = direction
        all_rows.extend(rows)

    write_table(
        all_rows,
        ["direction", "rep", "learning_rate", "test_set", "perplexity", "diverged"],
        out / "sweep_table.tsv",
    )

    summary_rows = []
    for lr in grid:
        for name in ("shared_lexicon", "shared_syntax"):
            cell = [r for r in all_rows if r["learning_rate"] == lr and r["test_set"] == name]
            ppls = [r["perplexity"] for r in cell]
            finite = [p for p in ppls if math.isfinite(p)]
            mean = float(np.mean(ppls)) if len(finite) == len(ppls) else math.inf
            std = float(np.std(ppls)) if len(finite) == len(ppls) else None
            summary_rows.append(
                {
                    "direction": direction,
                    "learning_rate": lr,
                    "test_set": name,
                    "mean_perplexity": mean,
                    "std_perplexity": std,
                    "n_reps": len(cell),
                    "n_diverged": sum(1 for r in cell if r["diverged"]),
                }
            )
    write_table(
        summary_rows,
        ["direction", "learning_rate", "test_set", "mean_perplexity", "std_perplexity", "n_reps", "n_diverged"],
        out / "sweep_summary.tsv",
    )
    write_table(
        [
            {"x": r["learning_rate"], "y": r["mean_perplexity"], "condition": r["test_set"],
             "series": f"{direction}_adaptation"}
            for r in summary_rows
        ],
        ["x", "y", "condition", "series"],
        out / "plot_data.csv",
        sep=",",
    )
    report = ProtocolReport(
        "dative_sweep",
        {**_adapt_config(settings).to_dict(), "lr_grid": list(grid), "direction": direction,
         "reps": settings["reps"]},
        seed,
        {"cells": json_safe(summary_rows)},
    )
    write_report(report, out, "sweep_report")
    inputs = {"checkpoint": args.checkpoint, "vocab": args.vocab}
    if args.filler_corpus:
        inputs["filler_corpus"] = args.filler_corpus
    _write_run_config(out, "dative-sweep", settings, inputs)
    for row in summary_rows:
        print(f"lr={row['learning_rate']:<8g} {row['test_set']:14s} "
              f"mean ppl {row['mean_perplexity']} (diverged {row['n_diverged']}/{row['n_reps']})")
    return EXIT_OK


def cmd_forgetting(args, settings: dict) -> int:
    _require_files(args.checkpoint, args.vocab, args.corpus)
    out = _out_dir(args)
    model = _load_model(args)
    texts = read_corpus(args.corpus)
    by_genre = group_by_genre(texts)
    if len(by_genre) < 2:
        raise DataInvariantError(f"forgetting needs at least 2 genres, corpus has {sorted(by_genre)}")

    splits = {}
    for genre, genre_texts in sorted(by_genre.items()):
        sentences = [s for t in genre_texts for s in t.sentences]
        n_adapt, n_heldout = settings["n_adapt"], settings["n_heldout"]
        adapt = sentences[:n_adapt]
        adapt_keys = {tuple(s) for s in adapt}
        heldout = []
        for s in sentences[n_adapt:]:
            if tuple(s) not in adapt_keys:
                heldout.append(s)
            if len(heldout) == n_heldout:
                break
        if len(adapt) < n_adapt or len(heldout) < n_heldout:
            raise DataInvariantError(
                f"genre {genre!r}: need {n_adapt} adaptation + {n_heldout} distinct held-out "
                f"sentences, corpus provides {len(adapt)} + {len(heldout)}"
            )
        splits[genre] = (adapt, heldout)

    config = _adapt_config(settings)
    report = forgetting_grid(model, splits, config)
    report.seed = settings["seed"]
    write_report(report, out, "forgetting_report")
    write_table(
        report.summary["pairs"],
        ["g1", "g2", "control", "before_adaptation", "after_first_domain", "after_second_domain", "diverged"],
        out / "forgetting_pairs.tsv",
    )
    avg = report.summary["averaged"]
    write_table(
        [
            {"x": "before_adaptation", "y": avg["before_adaptation"], "condition": "averaged", "series": "heldout_g1"},
            {"x": "after_first_domain", "y": avg["after_first_domain"], "condition": "averaged", "series": "heldout_g1"},
            {"x": "after_second_domain", "y": avg["after_second_domain"], "condition": "averaged", "series": "heldout_g1"},
        ],
        ["x", "y", "condition", "series"],
        out / "plot_data.csv",
        sep=",",
    )
    _write_run_config(out, "forgetting", settings,
                      {"checkpoint": args.checkpoint, "vocab": args.vocab, "corpus": args.corpus})
    print(f"averaged held-out perplexity: before {avg['before_adaptation']:.3f}, "
          f"after domain 1 {avg['after_first_domain']:.3f}, after domain 2 {avg['after_second_domain']:.3f}")
    diverged = any(row["diverged"] for row in report.summary["pairs"])
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_gen_stimuli(args, settings: dict) -> int:
    out = _out_dir(args)
    seed = settings["seed"]
    kind = args.kind
    if kind == "gardenpath":
        criticals = generate_garden_path_items(settings["n_pairs"], seed)
        fillers = filler_items(settings["n_fillers"], seed + 1)
        lists = compile_stimulus_lists(criticals, fillers, seed + 2)
        write_stimulus_lists(lists, out / "stimuli.tsv")
        print(f"wrote {len(lists)} lists x {len(lists[0].trials)} trials to {out / 'stimuli.tsv'}")
    elif kind == "dative":
        pairs = generate_dative_items(settings["n_dative_pairs"], seed)
        from .stimuli import StimulusList

        write_stimulus_lists([StimulusList(0, tuple(pairs))], out / "dative_pairs.tsv")
        print(f"wrote {len(pairs) // 2} dative pairs to {out / 'dative_pairs.tsv'}")
    elif kind == "background":
        coverage = settings["stimulus_coverage"]
        stimulus_kinds = (
            "main_verb_participle", "full_relative", "disambiguating_transitive",
            "double_object", "prepositional",
        )
        weights = {"filler": 1.0 - coverage}
        weights.update({k: coverage / len(stimulus_kinds) for k in stimulus_kinds})
        texts = background_corpus(settings["n_texts"], settings["sentences_per_text"], seed, weights=weights)
        write_corpus(texts, out / "corpus.txt")
        print(f"wrote {len(texts)} background texts to {out / 'corpus.txt'}")
    elif kind == "genres":
        pools = genre_noun_pools(settings["n_genres"], settings["genre_pool_size"])
        texts = []
        for g, pool in enumerate(pools):
            texts.extend(
                themed_texts(
                    f"genre{g + 1}", pool, settings["n_texts"], settings["sentences_per_text"],
                    seed + g, topic_size=settings["topic_size"], style_rate=settings["style_rate"],
                )
            )
        write_corpus(texts, out / "corpus.txt")
        print(f"wrote {len(texts)} texts across {len(pools)} genres to {out / 'corpus.txt'}")
    elif kind == "cyclic":
        text = cyclic_text(n_sentences=settings["sentences_per_text"])
        write_corpus([text], out / "corpus.txt")
        print(f"wrote cyclic corpus to {out / 'corpus.txt'}")
    else:
        raise ValueError(f"unknown stimulus kind {kind!r}")
    _write_run_config(out, "gen-stimuli", settings, {})
    return EXIT_OK


def cmd_export_lmem(args, settings: dict) -> int:
    _require_files(args.adaptive, args.nonadaptive, args.reading_times)
    out = _out_dir(args)
    adaptive = read_records_tsv(args.adaptive)
    nonadaptive = read_records_tsv(args.nonadaptive)
    reading_times = None
    if args.reading_times:
        reading_times = [
            float(line) for line in Path(args.reading_times).read_text(encoding="utf-8").split()
        ]
    rows = export_lmem_table(adaptive, nonadaptive, reading_times)
    columns = list(rows[0].keys()) if rows else []
    write_table(rows, columns, out / "lmem_table.tsv")
    if reading_times is not None and rows:
        fit = lmem_ols_proxy(rows)
        write_json(
            json_safe(
                {
                    "columns": fit.columns,
                    "coefficients": [float(b) for b in fit.coefficients],
                    "std_errors": [float(s) for s in fit.std_errors],
                    "t_values": [float(t) for t in fit.t_values],
                    "n": fit.n,
                }
            ),
            out / "proxy_fit.json",
        )
    inputs = {"adaptive": args.adaptive, "nonadaptive": args.nonadaptive}
    if args.reading_times:
        inputs["reading_times"] = args.reading_times
    _write_run_config(out, "export-lmem", settings, inputs)
    print(f"wrote {len(rows)} predictor rows to {out / 'lmem_table.tsv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lmadapt", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"lmadapt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a base model from scratch")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--valid-corpus")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt-eval", help="incremental adaptive evaluation and genre comparison")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_adapt_eval)

    p = sub.add_parser("gardenpath", help="reduced-relative disambiguation-penalty experiment")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--lists", help="pre-generated stimulus list TSV (default: generate)")
    p.set_defaults(func=cmd_gardenpath)

    p = sub.add_parser("dative-sweep", help="dative adaptation learning-rate sweep")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--direction", choices=[DO, PO], default=DO)
    p.add_argument("--filler-corpus", help="corpus file to sample filler sentences from")
    p.set_defaults(func=cmd_dative_sweep)

    p = sub.add_parser("forgetting", help="two-domain retention audit")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True, help="corpus with #genre directives")
    p.set_defaults(func=cmd_forgetting)

    p = sub.add_parser("gen-stimuli", help="generate synthetic materials and corpora")
    common(p)
    p.add_argument("--kind", required=True,
                   choices=["gardenpath", "dative", "background", "genres", "cyclic"])
    p.set_defaults(func=cmd_gen_stimuli)

    p = sub.add_parser("export-lmem", help="merge record streams into a predictor table")
    common(p)
    p.add_argument("--adaptive", required=True, help="records TSV from an adaptive run")
    p.add_argument("--nonadaptive", required=True, help="records TSV from the non-adaptive control")
    p.add_argument("--reading-times", help="whitespace-separated reading times aligned with records")
    p.set_defaults(func=cmd_export_lmem)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = load_settings(args.config, args.set)
        return args.func(args, settings)
    except (DataInvariantError, CheckpointError) as exc:
        print(f"lmadapt {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"lmadapt {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"lmadapt {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
