"""HTTP facade: submit and inspect translation runs, serve annotation tasks.

Single-process FastAPI app with file-backed state under one directory, so
desk-scale evaluation needs no database. Annotation batches keep their
system-to-position mapping server-side; the console only ever sees
"left" and "right".
"""

from __future__ import annotations

import datetime as _dt
import json
import random
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import metrics
from .config import build_gateway, build_pipeline_config
from .core import LangPair, MapsError, RunRecord, SourceSample, Variant
from .evalharness import (
    Choice,
    Corpus,
    PreferenceLabel,
    RunWriter,
    aggregate_preferences,
)
from .pipeline import TranslationEngine
from .promptkit import PromptLibrary

DEFAULT_ADDR = "127.0.0.1:8787"
ADDR_ENV = "MAPS_ADDR"
TOKEN_ENV = "MAPS_SERVICE_TOKEN"

ANNOTATION_KINDS = ("preference", "mqm", "hallucination", "ambiguity")


def _err(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status, detail={"error": code, "message": message})


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunState:
    run_id: str
    variant: Variant
    lang_pair: LangPair
    status: str = "running"
    records: list[RunRecord] = field(default_factory=list)
    error: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class Batch:
    batch_id: str
    kind: str
    seed: int
    tasks: list[dict[str, Any]]  # payload + hidden fields, persisted server-side
    taxonomy: dict[str, list[str]]

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "batch_id": self.batch_id,
            "kind": self.kind,
            "seed": self.seed,
            "tasks": self.tasks,
            "taxonomy": self.taxonomy,
        }

    @classmethod
    def from_jsonable(cls, d: dict[str, Any]) -> "Batch":
        return cls(d["batch_id"], d["kind"], d["seed"], d["tasks"], d["taxonomy"])


class ServiceState:
    """All mutable state, file-backed under ``state_dir``."""

    def __init__(self, state_dir: Path) -> None:
        self.state_dir = state_dir
        for sub in ("corpora", "configs", "runs", "batches"):
            (state_dir / sub).mkdir(parents=True, exist_ok=True)
        self.corpora: dict[str, Corpus] = {}
        self.configs: dict[str, dict[str, Any]] = {}
        self.runs: dict[str, RunState] = {}
        self.batches: dict[str, Batch] = {}
        self.labels: list[dict[str, Any]] = []
        self.idempotency: dict[str, str] = {}
        self.lock = threading.Lock()
        self.labels_path = state_dir / "labels.jsonl"
        self._label_fp = self.labels_path.open("a", encoding="utf-8")
        self._load()

    def _load(self) -> None:
        for path in sorted((self.state_dir / "corpora").glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            self.corpora[data["corpus_id"]] = _corpus_from_jsonable(data)
        for path in sorted((self.state_dir / "configs").glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            self.configs[data["config_id"]] = data
        for path in sorted((self.state_dir / "batches").glob("*.json")):
            batch = Batch.from_jsonable(json.loads(path.read_text(encoding="utf-8")))
            self.batches[batch.batch_id] = batch
        if self.labels_path.exists():
            with self.labels_path.open(encoding="utf-8") as fp:
                self.labels = [json.loads(line) for line in fp if line.strip()]

    def save_corpus(self, data: dict[str, Any]) -> None:
        path = self.state_dir / "corpora" / f"{data['corpus_id']}.json"
        path.write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")

    def save_config(self, data: dict[str, Any]) -> None:
        path = self.state_dir / "configs" / f"{data['config_id']}.json"
        path.write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")

    def save_batch(self, batch: Batch) -> None:
        path = self.state_dir / "batches" / f"{batch.batch_id}.json"
        path.write_text(json.dumps(batch.to_jsonable(), ensure_ascii=False), encoding="utf-8")

    def append_label(self, row: dict[str, Any]) -> None:
        self.labels.append(row)
        self._label_fp.write(json.dumps(row, ensure_ascii=False) + "\n")
        self._label_fp.flush()


def _corpus_from_jsonable(data: dict[str, Any]) -> Corpus:
    refs = data.get("references")
    samples = tuple(
        SourceSample(
            id=str(i + 1),
            source=source,
            reference=None if refs is None else refs[i],
        )
        for i, source in enumerate(data["sources"])
    )
    return Corpus(LangPair.parse(data["lang_pair"]), samples)


def create_app(
    state_dir: str | Path,
    *,
    console_dir: Optional[str | Path] = None,
    token: Optional[str] = None,
) -> FastAPI:
    state = ServiceState(Path(state_dir))
    app = FastAPI(title="mapsmt service")
    app.state.store = state

    @app.exception_handler(HTTPException)
    async def http_error(_request: Request, exc: HTTPException) -> JSONResponse:
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"error": "http_error", "message": str(detail)}
        return JSONResponse(detail, status_code=exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            {"error": "bad_request", "message": str(exc.errors())}, status_code=422
        )

    if token:

        @app.middleware("http")
        async def check_token(request: Request, call_next):
            if not request.url.path.startswith("/console"):
                supplied = request.headers.get("Authorization", "")
                if supplied != f"Bearer {token}":
                    return JSONResponse(
                        {"error": "unauthorized", "message": "bad or missing token"},
                        status_code=401,
                    )
            return await call_next(request)

    # -- corpora and configs ---------------------------------------------------

    @app.post("/corpora", status_code=201)
    async def register_corpus(body: dict) -> dict:
        for key in ("corpus_id", "lang_pair", "sources"):
            if key not in body:
                raise _err(422, "bad_request", f"missing field {key!r}")
        refs = body.get("references")
        if refs is not None and len(refs) != len(body["sources"]):
            raise _err(422, "bad_request", "references must align with sources")
        try:
            corpus = _corpus_from_jsonable(body)
        except (ValueError, MapsError) as exc:
            raise _err(422, "bad_request", str(exc))
        with state.lock:
            state.corpora[body["corpus_id"]] = corpus
            state.save_corpus(body)
        return {"corpus_id": body["corpus_id"], "n_samples": len(corpus.samples)}

    @app.post("/configs", status_code=201)
    async def register_config(body: dict) -> dict:
        if "config_id" not in body:
            raise _err(422, "bad_request", "missing field 'config_id'")
        with state.lock:
            state.configs[body["config_id"]] = body
            state.save_config(body)
        return {"config_id": body["config_id"]}

    # -- runs --------------------------------------------------------------------

    def _execute_run(run_state: RunState, engine: TranslationEngine, corpus: Corpus) -> None:
        path = state.state_dir / "runs" / f"{run_state.run_id}.jsonl"
        try:
            with RunWriter(path, run_state.variant, run_state.lang_pair) as writer:

                def on_record(record: RunRecord) -> None:
                    with run_state.lock:
                        run_state.records.append(record)
                    writer.write(record)

                engine.run(run_state.variant, corpus.samples, on_record=on_record)
            with run_state.lock:
                run_state.status = "done"
        except Exception as exc:  # noqa: BLE001 - run status must always resolve
            with run_state.lock:
                run_state.status = "failed"
                run_state.error = f"{type(exc).__name__}: {exc}"

    @app.post("/runs", status_code=202)
    async def submit_run(body: dict) -> dict:
        for key in ("variant", "corpus_id", "config_id"):
            if key not in body:
                raise _err(422, "bad_request", f"missing field {key!r}")
        try:
            variant = Variant(body["variant"])
        except ValueError:
            raise _err(422, "bad_request", f"unknown variant {body['variant']!r}")
        with state.lock:
            corpus = state.corpora.get(body["corpus_id"])
            config = state.configs.get(body["config_id"])
            if corpus is None:
                raise _err(404, "not_found", f"unknown corpus {body['corpus_id']!r}")
            if config is None:
                raise _err(404, "not_found", f"unknown config {body['config_id']!r}")
            idem_key = body.get("idempotency_key")
            if idem_key and idem_key in state.idempotency:
                return {"run_id": state.idempotency[idem_key], "deduplicated": True}
            run_id = body.get("run_id") or f"run-{uuid.uuid4().hex[:8]}"
            if run_id in state.runs:
                raise _err(409, "conflict", f"run {run_id!r} already exists")
            try:
                gateway = build_gateway(config, state.state_dir)
                cfg = build_pipeline_config(config, corpus.lang_pair, state.state_dir)
                engine = TranslationEngine(gateway, PromptLibrary.load(), cfg)
            except MapsError as exc:
                raise _err(422, "bad_request", str(exc))
            run_state = RunState(run_id, variant, corpus.lang_pair)
            state.runs[run_id] = run_state
            if idem_key:
                state.idempotency[idem_key] = run_id
        threading.Thread(
            target=_execute_run, args=(run_state, engine, corpus), daemon=True
        ).start()
        return {"run_id": run_id}

    def _get_run(run_id: str) -> RunState:
        run_state = state.runs.get(run_id)
        if run_state is None:
            raise _err(404, "not_found", f"unknown run {run_id!r}")
        return run_state

    @app.get("/runs/{run_id}")
    async def run_status(run_id: str) -> dict:
        run_state = _get_run(run_id)
        with run_state.lock:
            return {
                "run_id": run_id,
                "status": run_state.status,
                "variant": run_state.variant.value,
                "lang_pair": str(run_state.lang_pair),
                "n_records": len(run_state.records),
                "partial": any(r.error for r in run_state.records),
                "error": run_state.error,
            }

    @app.get("/runs/{run_id}/records")
    async def run_records(run_id: str) -> StreamingResponse:
        run_state = _get_run(run_id)
        with run_state.lock:
            lines = [r.to_json_line() + "\n" for r in run_state.records]
        return StreamingResponse(iter(lines), media_type="application/x-ndjson")

    # -- annotation ----------------------------------------------------------------

    def _build_preference_tasks(
        batch_id: str, pairs: list[dict], rng: random.Random
    ) -> list[dict[str, Any]]:
        tasks = []
        for index, pair in enumerate(pairs):
            for key in ("source", "system_a", "system_b"):
                if key not in pair:
                    raise _err(422, "bad_request", f"preference pair needs {key!r}")
            a_left = rng.random() < 0.5
            tasks.append(
                {
                    "task_id": f"{batch_id}:{index}",
                    "index": index,
                    "sample_id": str(pair.get("sample_id", index)),
                    "payload": {
                        "source": pair["source"],
                        "left": pair["system_a"] if a_left else pair["system_b"],
                        "right": pair["system_b"] if a_left else pair["system_a"],
                    },
                    "hidden": {"left_is": "a" if a_left else "b"},
                }
            )
        return tasks

    def _build_item_tasks(batch_id: str, items: list[dict]) -> list[dict[str, Any]]:
        tasks = []
        for index, item in enumerate(items):
            for key in ("source", "translation"):
                if key not in item:
                    raise _err(422, "bad_request", f"item needs {key!r}")
            tasks.append(
                {
                    "task_id": f"{batch_id}:{index}",
                    "index": index,
                    "sample_id": str(item.get("sample_id", index)),
                    "payload": {"source": item["source"], "translation": item["translation"]},
                    "hidden": {},
                }
            )
        return tasks

    @app.post("/annotation/batches", status_code=201)
    async def create_batch(body: dict) -> dict:
        kind = body.get("kind")
        if kind not in ANNOTATION_KINDS:
            raise _err(422, "bad_request", f"kind must be one of {ANNOTATION_KINDS}")
        batch_id = f"batch-{uuid.uuid4().hex[:8]}"
        seed = int(body.get("seed", random.SystemRandom().randrange(2**31)))
        taxonomy = {
            cls: list(cats) for cls, cats in metrics.MqmWeights().taxonomy.items()
        }
        if kind == "preference":
            pairs = body.get("pairs")
            if not pairs:
                raise _err(422, "bad_request", "preference batch needs non-empty 'pairs'")
            tasks = _build_preference_tasks(batch_id, pairs, random.Random(seed))
        else:
            items = body.get("items")
            if not items:
                raise _err(422, "bad_request", f"{kind} batch needs non-empty 'items'")
            tasks = _build_item_tasks(batch_id, items)
        batch = Batch(batch_id, kind, seed, tasks, taxonomy)
        with state.lock:
            state.batches[batch_id] = batch
            state.save_batch(batch)
        return {"batch_id": batch_id, "n_tasks": len(tasks)}

    def _get_batch(batch_id: str) -> Batch:
        batch = state.batches.get(batch_id)
        if batch is None:
            raise _err(404, "not_found", f"unknown batch {batch_id!r}")
        return batch

    def _labels_for(batch_id: str) -> list[dict[str, Any]]:
        return [row for row in state.labels if row["batch_id"] == batch_id]

    def _task_view(batch: Batch, task: dict[str, Any], annotator: str) -> dict[str, Any]:
        done = {
            row["task_id"] for row in _labels_for(batch.batch_id) if row["annotator"] == annotator
        }
        payload = dict(task["payload"])
        if batch.kind == "mqm":
            payload["taxonomy"] = batch.taxonomy
        return {
            "task_id": task["task_id"],
            "kind": batch.kind,
            "status": "done" if task["task_id"] in done else "open",
            "payload": payload,
            "progress": {"done": len(done), "total": len(batch.tasks)},
        }

    @app.get("/annotation/next")
    async def next_task(batch: str, annotator: str) -> Response:
        if not annotator:
            raise _err(422, "bad_request", "annotator must be non-empty")
        batch_obj = _get_batch(batch)
        with state.lock:
            labeled = {
                row["task_id"]
                for row in _labels_for(batch)
                if row["annotator"] == annotator
            }
            for task in batch_obj.tasks:
                if task["task_id"] not in labeled:
                    return JSONResponse(_task_view(batch_obj, task, annotator))
        return Response(status_code=204)

    def _validate_label(batch: Batch, task: dict[str, Any], label: dict[str, Any]) -> None:
        if batch.kind == "preference":
            if label.get("choice") not in ("left", "right", "tie"):
                raise _err(422, "bad_request", "choice must be left|right|tie")
        elif batch.kind == "mqm":
            errors = label.get("errors")
            if not isinstance(errors, list):
                raise _err(422, "bad_request", "mqm label needs an 'errors' list")
            known = {c for cats in batch.taxonomy.values() for c in cats}
            text_len = len(task["payload"]["translation"])
            for error in errors:
                if error.get("category") not in known:
                    raise _err(422, "bad_request", f"unknown category {error.get('category')!r}")
                if error.get("severity") not in ("minor", "major"):
                    raise _err(422, "bad_request", "severity must be minor|major")
                span = error.get("span")
                if span is not None:
                    if (
                        len(span) != 2
                        or not 0 <= span[0] < span[1] <= text_len
                    ):
                        raise _err(422, "bad_request", f"span {span} outside segment")
        elif batch.kind == "hallucination":
            if not isinstance(label.get("is_hallucination"), bool):
                raise _err(422, "bad_request", "label needs boolean 'is_hallucination'")
        elif batch.kind == "ambiguity":
            if not isinstance(label.get("disambiguated"), bool):
                raise _err(422, "bad_request", "label needs boolean 'disambiguated'")

    @app.post("/annotation/labels")
    async def post_label(body: dict) -> dict:
        for key in ("task_id", "annotator", "label"):
            if key not in body:
                raise _err(422, "bad_request", f"missing field {key!r}")
        task_id = body["task_id"]
        batch_id = task_id.rsplit(":", 1)[0]
        batch = _get_batch(batch_id)
        task = next((t for t in batch.tasks if t["task_id"] == task_id), None)
        if task is None:
            raise _err(404, "not_found", f"unknown task {task_id!r}")
        _validate_label(batch, task, body["label"])
        with state.lock:
            for row in _labels_for(batch_id):
                if row["task_id"] == task_id and row["annotator"] == body["annotator"]:
                    raise _err(409, "conflict", "task already labeled by this annotator")
            state.append_label(
                {
                    "batch_id": batch_id,
                    "task_id": task_id,
                    "annotator": body["annotator"],
                    "kind": batch.kind,
                    "label": body["label"],
                    "ts": _now(),
                }
            )
        return {"ok": True}

    def _summarize(batch: Batch) -> dict[str, Any]:
        rows = _labels_for(batch.batch_id)
        if not rows:
            raise _err(409, "conflict", "batch has no labels yet")
        task_by_id = {t["task_id"]: t for t in batch.tasks}
        if batch.kind == "preference":
            labels = []
            for row in rows:
                task = task_by_id[row["task_id"]]
                choice = row["label"]["choice"]
                if choice == "tie":
                    resolved = Choice.TIE
                else:
                    left_is = task["hidden"]["left_is"]
                    picked = left_is if choice == "left" else ("b" if left_is == "a" else "a")
                    resolved = Choice.SYSTEM_A if picked == "a" else Choice.SYSTEM_B
                labels.append(
                    PreferenceLabel(task["sample_id"], resolved, row["annotator"])
                )
            summary = aggregate_preferences(labels)
            return {
                "kind": "preference",
                "win_a": summary.win_a,
                "win_b": summary.win_b,
                "tie": summary.tie,
                "n_labels": len(labels),
            }
        if batch.kind == "mqm":
            weights = metrics.MqmWeights()
            annotations = [
                metrics.MqmAnnotation(
                    segment_id=task_by_id[row["task_id"]]["index"],
                    errors=tuple(
                        metrics.MqmError(
                            category=e["category"],
                            severity=e["severity"],
                            span=None if e.get("span") is None else tuple(e["span"]),
                        )
                        for e in row["label"]["errors"]
                    ),
                )
                for row in rows
            ]
            n_segments = len(batch.tasks)
            return {
                "kind": "mqm",
                "mqm_score": metrics.mqm_score(annotations, weights, n_segments),
                "breakdown": metrics.error_category_breakdown(
                    annotations, weights, n_segments
                ),
                "n_segments": n_segments,
            }
        latest: dict[str, dict[str, Any]] = {}
        for row in rows:
            latest[row["task_id"]] = row
        if batch.kind == "hallucination":
            ratio = metrics.hallucination_ratio(
                [
                    metrics.HallucinationLabel(
                        task_by_id[tid]["sample_id"], row["label"]["is_hallucination"]
                    )
                    for tid, row in latest.items()
                ]
            )
            return {"kind": "hallucination", "ratio": ratio, "n_labels": len(latest)}
        accuracy = metrics.ambiguity_accuracy(
            [
                metrics.AmbiguityLabel(
                    task_by_id[tid]["sample_id"], row["label"]["disambiguated"]
                )
                for tid, row in latest.items()
            ]
        )
        return {"kind": "ambiguity", "accuracy": accuracy, "n_labels": len(latest)}

    @app.get("/annotation/batches/{batch_id}/summary")
    async def batch_summary(batch_id: str) -> dict:
        return _summarize(_get_batch(batch_id))

    # -- static console ---------------------------------------------------------------

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app


def main(addr: Optional[str] = None, state_dir: str | Path = "maps-state",
         console_dir: Optional[str] = None, token: Optional[str] = None) -> None:
    import os

    import uvicorn

    addr = addr or os.environ.get(ADDR_ENV, DEFAULT_ADDR)
    host, _, port = addr.partition(":")
    app = create_app(state_dir, console_dir=console_dir,
                     token=token or os.environ.get(TOKEN_ENV))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="warning")
