"""Batch entry points for every workflow, usable without the service.

Machine output goes to stdout as one JSON document; logs and errors go to
stderr. Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

import click

from . import metrics as metrics_mod
from .config import build_gateway, build_pipeline_config
from .core import LangPair, MapsError, Variant
from .evalharness import build_report, load_corpus, load_run, paired_t_test, write_run
from .figures import render_report_figures
from .pipeline import ExecMode, TranslationEngine
from .promptkit import PromptLibrary
from .selectors import ScoreRequest, WireScorer, score_lex_overlap

CONFIG_ENV = "MAPS_CONFIG"

VARIANT_NAMES = [v.value for v in Variant]
SELECTOR_NAMES = ["scq", "qe", "oracle", "lex"]


def _emit(payload: dict[str, Any]) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False, sort_keys=True))


def _load_config(path: Optional[str]) -> tuple[dict[str, Any], Path]:
    config_path = path or os.environ.get(CONFIG_ENV)
    if config_path is None:
        return {}, Path.cwd()
    config_file = Path(config_path)
    if not config_file.exists():
        raise click.ClickException(f"config file not found: {config_file}")
    return json.loads(config_file.read_text(encoding="utf-8")), config_file.parent


def _operational(exc: Exception) -> click.ClickException:
    wrapped = click.ClickException(f"{type(exc).__name__}: {exc}")
    wrapped.exit_code = 1
    return wrapped


@click.group()
def cli() -> None:
    """Knowledge-guided translation runs, metrics, reports, and serving."""


@cli.command()
@click.option("--variant", type=click.Choice(VARIANT_NAMES), required=True)
@click.option("--src", "src_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--ref", "ref_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pair", required=True, help="Language pair, e.g. en-zh.")
@click.option("--selector", type=click.Choice(SELECTOR_NAMES), default=None,
              help="Overrides the config's selector.")
@click.option("--mode", type=click.Choice(["serial", "parallel"]), default="serial")
@click.option("--jobs", type=int, default=4, show_default=True,
              help="Concurrency bound in parallel mode.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help=f"Config JSON (or ${CONFIG_ENV}); flags win over config values.")
def translate(variant, src_path, ref_path, pair, selector, mode, jobs, out_path, config_path):
    """Run one variant over a line-per-sentence corpus into a run file."""
    config, base_dir = _load_config(config_path)
    try:
        lang_pair = LangPair.parse(pair)
    except ValueError as exc:
        raise click.UsageError(f"--pair: {exc}")
    if mode == "parallel" and jobs < 2:
        raise click.UsageError("--jobs must be >= 2 in parallel mode")
    exec_mode = ExecMode.parallel(jobs) if mode == "parallel" else ExecMode.serial()
    try:
        corpus = load_corpus(src_path, ref_path, lang_pair)
        gateway = build_gateway(config, base_dir)
        cfg = build_pipeline_config(
            config, lang_pair, base_dir, selector_name=selector, exec_mode=exec_mode
        )
        engine = TranslationEngine(gateway, PromptLibrary.load(), cfg)
        records = engine.run(Variant(variant), corpus.samples)
        write_run(out_path, records, Variant(variant), lang_pair)
    except MapsError as exc:
        raise _operational(exc)
    _emit(
        {
            "run_id": Path(out_path).stem,
            "out": str(out_path),
            "variant": variant,
            "lang_pair": pair,
            "n_records": len(records),
            "n_errors": sum(1 for r in records if r.error),
        }
    )


@cli.group()
def metrics() -> None:
    """Quantitative analyses over sample and annotation files."""


@metrics.command("keyword-quality")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
def keyword_quality_cmd(in_path):
    """P_src / P_tgt / R over a JSONL file of keyword-quality samples."""
    try:
        samples = metrics_mod.load_keyword_quality_samples(in_path)
        result = metrics_mod.keyword_quality(samples)
    except (MapsError, ValueError, KeyError) as exc:
        raise _operational(exc)
    _emit({"p_src": result.p_src, "p_tgt": result.p_tgt, "r": result.r})


@metrics.command("mqm")
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False),
              help="Taxonomy/weights config JSON; defaults to the built-in scheme.")
@click.option("--segments", type=int, required=True)
def mqm_cmd(annotations, weights_path, segments):
    """Weighted MQM penalty score over a JSONL annotation file."""
    try:
        weights = (
            metrics_mod.MqmWeights.from_config_file(weights_path)
            if weights_path
            else metrics_mod.MqmWeights()
        )
        rows = metrics_mod.load_mqm_annotations(annotations)
        score = metrics_mod.mqm_score(rows, weights, segments)
        breakdown = metrics_mod.error_category_breakdown(rows, weights, segments)
    except (MapsError, ValueError, KeyError) as exc:
        raise _operational(exc)
    _emit({"mqm_score": score, "breakdown": breakdown, "n_segments": segments})


@metrics.command("hallu-delta")
@click.option("--base", "base_run", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--method", "method_run", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--labels-a", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Token-label JSONL for the base run.")
@click.option("--labels-b", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Token-label JSONL for the method run.")
def hallu_delta_cmd(base_run, method_run, labels_a, labels_b):
    """Relative change in token-level hallucination counts."""
    try:
        base_header, base_records = load_run(base_run)
        method_header, method_records = load_run(method_run)
        base_rows = metrics_mod.load_token_labels(labels_a)
        method_rows = metrics_mod.load_token_labels(labels_b)
        for rows, records, name in (
            (base_rows, base_records, "base"),
            (method_rows, method_records, "method"),
        ):
            run_ids = {r.sample_id for r in records}
            stray = {row.sample_id for row in rows} - run_ids
            if stray:
                raise MapsError(
                    f"{name} label file mentions samples missing from the run: {sorted(stray)[:5]}"
                )
        base_count = metrics_mod.count_token_hallucinations(base_rows)
        method_count = metrics_mod.count_token_hallucinations(method_rows)
        delta = metrics_mod.hallucination_delta(base_count, method_count)
    except (MapsError, ValueError, KeyError) as exc:
        raise _operational(exc)
    _emit(
        {
            "base_variant": base_header.variant.value,
            "method_variant": method_header.variant.value,
            "base_count": base_count,
            "method_count": method_count,
            "delta_pct": delta.display_pct,
            "delta_exact": delta.exact,
        }
    )


@cli.command()
@click.option("--runs", "runs_arg", required=True,
              help="Comma-separated run files, one per variant.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--scorer", default="lex", show_default=True,
              help="lex | stored | qe:URL | oracle:URL")
@click.option("--figures/--no-figures", default=True, show_default=True)
def report(runs_arg, out_dir, scorer, figures):
    """Build the per-variant score report (markdown + JSON + figures)."""
    try:
        run_sets = {}
        for path in runs_arg.split(","):
            header, records = load_run(path.strip())
            if header.variant in run_sets:
                raise MapsError(f"two run files carry variant {header.variant.value}")
            run_sets[header.variant] = records

        if scorer == "lex":
            eval_scorer, tag = score_lex_overlap, "lex-overlap"
        elif scorer == "stored":
            eval_scorer, tag = None, "stored-selector-scores"
        elif scorer.startswith(("qe:", "oracle:")):
            kind, _, url = scorer.partition(":")
            wire = WireScorer(url)
            if kind == "qe":
                def eval_scorer(req: ScoreRequest) -> float:
                    return wire.score(
                        ScoreRequest(req.src_lang, req.tgt_lang, req.source, req.hypothesis)
                    )
            else:
                eval_scorer = wire.score
            tag = scorer
        else:
            raise click.UsageError(f"--scorer: unknown scorer {scorer!r}")

        document = build_report(run_sets, tag, eval_scorer=eval_scorer)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(document.markdown, encoding="utf-8")
        (out / "report.json").write_text(document.json_twin(), encoding="utf-8")
        files = ["report.md", "report.json"]
        if figures:
            files += [p.name for p in render_report_figures(document.data, out)]
    except MapsError as exc:
        raise _operational(exc)
    _emit({"out": str(out_dir), "files": sorted(files)})


def _extract_score_field(record, field: str) -> float:
    if field == "selected_score":
        if record.selection is None or record.selection.scores is None:
            raise MapsError(f"record {record.sample_id!r} has no selector scores")
        return record.selection.scores[record.selection.selected_index]
    if field == "lex_overlap":
        if record.reference is None or record.selected_text is None:
            raise MapsError(f"record {record.sample_id!r} lacks a reference or selection")
        return score_lex_overlap(
            ScoreRequest(
                record.lang_pair.src,
                record.lang_pair.tgt,
                record.source,
                record.selected_text,
                record.reference,
            )
        )
    value: Any = record.to_jsonable()
    for part in field.split("."):
        if not isinstance(value, dict) or part not in value:
            raise MapsError(f"record {record.sample_id!r} has no field {field!r}")
        value = value[part]
    if not isinstance(value, (int, float)):
        raise MapsError(f"field {field!r} is not numeric")
    return float(value)


@cli.command()
@click.option("--a", "run_a", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--b", "run_b", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--score-field", default="selected_score", show_default=True,
              help="selected_score, lex_overlap (computed against references), "
                   "or a dotted path into the serialized record.")
def sig(run_a, run_b, score_field):
    """Paired t-test between two runs over a per-record score field."""
    try:
        _, records_a = load_run(run_a)
        _, records_b = load_run(run_b)
        by_id_a = {r.sample_id: r for r in records_a}
        by_id_b = {r.sample_id: r for r in records_b}
        if set(by_id_a) != set(by_id_b):
            raise MapsError("runs cover different sample ids")
        ids = sorted(by_id_a)
        a = [_extract_score_field(by_id_a[i], score_field) for i in ids]
        b = [_extract_score_field(by_id_b[i], score_field) for i in ids]
        result = paired_t_test(a, b)
    except MapsError as exc:
        raise _operational(exc)
    _emit(
        {
            "t_stat": result.t_stat if result.t_stat not in (float("inf"), float("-inf"))
            else ("inf" if result.t_stat > 0 else "-inf"),
            "p_value": result.p_value,
            "n": result.n,
            "mean_diff": result.mean_diff,
            "score_field": score_field,
        }
    )


@cli.command()
@click.option("--addr", default=None, help="HOST:PORT (default $MAPS_ADDR or 127.0.0.1:8787).")
@click.option("--state-dir", default="maps-state", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--console-dir", type=click.Path(file_okay=False),
              help="Static files served under /console/.")
@click.option("--token", default=None, help="Shared static bearer token.")
def serve(addr, state_dir, console_dir, token):
    """Run the HTTP service."""
    from .service import main as serve_main

    serve_main(addr, state_dir, console_dir, token)


def main() -> None:
    try:
        cli(standalone_mode=True)
    except MapsError as exc:  # pragma: no cover - safety net
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
