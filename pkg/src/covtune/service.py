"""HTTP/JSON session service for the ask/tell loop.

Sessions are persisted as append-only JSONL event files, fsynced per event
and written ahead of every response, so killing the process at any point
and restarting reconstructs the exact state by replay.  Observations are
stored in the units the client reports; minimisation is handled by negating
targets at the session boundary.  One logical writer per session; requests
for different sessions proceed concurrently.
"""

from __future__ import annotations

import json
import math
import os
import secrets
import threading
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse, Response

from . import _jsonio
from .bo import AcquisitionSpec, BoSession, pretrain_kernel, suggest, tell
from .data import LabeledDataset, NormalizationRecord, load_dataset_csv, normalize_unit_box
from .experiments import make_aux_dataset, mixture_kernel_fit
from .kernels import KernelSpec

__all__ = ["ApiError", "SessionStore", "create_app", "main"]

DEFAULT_NU2_GRID = tuple(float(v) for v in np.logspace(-6, -1, 6))
DEFAULT_SIGMA_GRID = tuple(float(v) for v in np.logspace(math.log10(0.05), math.log10(2.0), 8))
DEFAULT_SVM_C_GRID = (1.0, 10.0, 100.0)
DEFAULT_SVM_SIGMA_GRID = (0.05, 0.1, 0.2, 0.4, 0.8)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = fieldname

    def body(self):
        err = {"code": self.code, "message": self.message}
        if self.field is not None:
            err["field"] = self.field
        return {"error": err}


def _require(cond, message, fieldname=None, status=400, code="schema"):
    if not cond:
        raise ApiError(status, code, message, fieldname)


# ---------------------------------------------------------------------
# session state
# ---------------------------------------------------------------------


@dataclass
class _Session:
    id: str
    created_at: float
    body: dict
    spec: KernelSpec
    provenance: dict | None
    record: NormalizationRecord
    session: BoSession
    sign: float  # -1 for minimisation sessions
    status: str = "ready-to-suggest"
    rows: list = field(default_factory=list)  # user-facing trace rows
    pending_response: dict | None = None
    idempotency: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def best_user(self):
        if not self.session.y:
            return None
        return self.sign * self.session.best

    def best_x(self):
        if not self.session.y:
            return None
        k = max(range(len(self.session.y)), key=lambda i: self.session.y[i])
        return [float(v) for v in self.session.X[k]]


def _candidate_grid(bounds, resolution):
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(bounds, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _validate_body(body) -> dict:
    _require(isinstance(body, dict), "body must be a JSON object")
    dim = body.get("dimension")
    _require(isinstance(dim, int) and dim >= 1, "dimension must be an integer >= 1",
             "dimension")
    bounds = body.get("bounds")
    _require(isinstance(bounds, list) and len(bounds) == dim,
             f"bounds must list {dim} [low, high] pairs", "bounds")
    clean_bounds = []
    for i, b in enumerate(bounds):
        ok = (isinstance(b, (list, tuple)) and len(b) == 2
              and all(isinstance(v, (int, float)) and math.isfinite(v) for v in b)
              and float(b[0]) < float(b[1]))
        _require(ok, "each bound must be [low, high] with low < high", f"bounds[{i}]")
        clean_bounds.append((float(b[0]), float(b[1])))
    res = body.get("resolution", 11)
    if isinstance(res, int):
        res = [res] * dim
    _require(isinstance(res, list) and len(res) == dim
             and all(isinstance(r, int) and r >= 2 for r in res),
             "resolution must be an integer >= 2 (or one per dimension)",
             "resolution")
    total = 1
    for r in res:
        total *= r
    _require(total <= 200_000, f"candidate grid of {total} points is too large",
             "resolution")
    acq = body.get("acquisition", {})
    _require(isinstance(acq, dict), "acquisition must be an object", "acquisition")
    kind = acq.get("kind", "ucb")
    _require(kind in ("pi", "ei", "ucb"), "acquisition.kind must be pi, ei or ucb",
             "acquisition.kind")
    delta = acq.get("delta", 0.1)
    _require(isinstance(delta, (int, float)) and 0.0 < delta < 1.0,
             "acquisition.delta must lie in (0, 1)", "acquisition.delta")
    kernel = body.get("kernel", {})
    _require(isinstance(kernel, dict), "kernel must be an object", "kernel")
    strategy = kernel.get("strategy", "plain-se")
    _require(strategy in ("plain-se", "mixture", "reweighted", "reweighted-composite"),
             "unknown kernel.strategy", "kernel.strategy")
    goal = body.get("goal", "minimize")
    _require(goal in ("minimize", "maximize"), "goal must be minimize or maximize",
             "goal")
    grids = body.get("gp", {})
    _require(isinstance(grids, dict), "gp must be an object", "gp")
    nu2_grid = grids.get("nu2_grid", list(DEFAULT_NU2_GRID))
    sigma_grid = grids.get("sigma_grid", list(DEFAULT_SIGMA_GRID))
    for name, g in (("gp.nu2_grid", nu2_grid), ("gp.sigma_grid", sigma_grid)):
        _require(isinstance(g, list) and g
                 and all(isinstance(v, (int, float)) and v > 0 or v == 0 for v in g),
                 f"{name} must be a non-empty numeric list", name)
    svm = body.get("svm", {})
    _require(isinstance(svm, dict), "svm must be an object", "svm")
    aux = body.get("aux")
    if aux is not None:
        _require(isinstance(aux, dict), "aux must be an object or null", "aux")
    seed = body.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer", "seed")
    return {
        "dimension": dim,
        "bounds": clean_bounds,
        "resolution": list(res),
        "acquisition": {"kind": kind, "delta": float(delta)},
        "kernel": {"strategy": strategy},
        "goal": goal,
        "gp": {"nu2_grid": [float(v) for v in nu2_grid],
               "sigma_grid": [float(v) for v in sigma_grid]},
        "svm": {
            "c_grid": [float(v) for v in svm.get("c_grid", DEFAULT_SVM_C_GRID)],
            "sigma_grid": [float(v) for v in svm.get("sigma_grid", DEFAULT_SVM_SIGMA_GRID)],
            "epsilon": float(svm.get("epsilon", 0.01)),
        },
        "aux": aux,
        "seed": seed,
    }


class SessionStore:
    """Event-sourced session registry under one data directory."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        self.sessions_dir = os.path.join(data_dir, "sessions")
        self.uploads_dir = os.path.join(data_dir, "uploads")
        os.makedirs(self.sessions_dir, exist_ok=True)
        os.makedirs(self.uploads_dir, exist_ok=True)
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    # -- persistence --------------------------------------------------

    def _event_path(self, sid):
        return os.path.join(self.sessions_dir, f"{sid}.jsonl")

    def _append_event(self, sid, event: dict):
        line = _jsonio.dumps(event) + "\n"
        with open(self._event_path(sid), "a") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    # -- aux data -----------------------------------------------------

    def save_upload(self, text: str) -> str:
        uid = secrets.token_urlsafe(16)
        path = os.path.join(self.uploads_dir, f"{uid}.csv")
        with open(path, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        try:
            load_dataset_csv(path)
        except ValueError as exc:
            os.unlink(path)
            raise ApiError(400, "schema", str(exc), "csv")
        return uid

    def _resolve_aux(self, aux_body, record) -> LabeledDataset:
        if "inline" in aux_body:
            inline = aux_body["inline"]
            _require(isinstance(inline, dict) and "x" in inline and "y" in inline,
                     "aux.inline needs x and y arrays", "aux.inline")
            try:
                raw = LabeledDataset(X=np.asarray(inline["x"], dtype=float),
                                     y=np.asarray(inline["y"], dtype=float))
            except Exception as exc:
                raise ApiError(400, "schema", f"bad inline aux data: {exc}",
                               "aux.inline")
            norm, _ = normalize_unit_box(raw)
            return norm
        if "upload_id" in aux_body:
            path = os.path.join(self.uploads_dir, f"{aux_body['upload_id']}.csv")
            _require(os.path.exists(path), "unknown upload id", "aux.upload_id",
                     status=404, code="not-found")
            raw = load_dataset_csv(path)
            norm, _ = normalize_unit_box(raw)
            return norm
        if "generator" in aux_body:
            gen = aux_body["generator"]
            _require(isinstance(gen, dict) and gen.get("kind") == "radial_norm",
                     "aux.generator.kind must be radial_norm", "aux.generator")
            raw = make_aux_dataset(int(gen.get("count", 100)),
                                   seed=int(gen.get("seed", 0)))
            yn = (raw.y - raw.y.min()) / (raw.y.max() - raw.y.min())
            return LabeledDataset(X=record.normalize_x(raw.X), y=yn)
        raise ApiError(400, "schema",
                       "aux must contain inline, upload_id or generator", "aux")

    # -- lifecycle ----------------------------------------------------

    def create(self, body) -> _Session:
        clean = _validate_body(body)
        record = NormalizationRecord.from_bounds(clean["bounds"])
        strategy = clean["kernel"]["strategy"]
        provenance = None
        sigma_grid = clean["gp"]["sigma_grid"]
        if strategy == "plain-se":
            spec = KernelSpec.se(1.0)
            aux_needed = False
        else:
            aux_needed = True
        if aux_needed:
            _require(clean["aux"] is not None,
                     f"kernel strategy {strategy} needs an aux dataset", "aux",
                     status=422, code="pretraining")
            aux = self._resolve_aux(clean["aux"], record)
            try:
                if strategy == "mixture":
                    details = {}
                    spec = mixture_kernel_fit(aux, scale_grid=sigma_grid,
                                              details=details)
                    provenance = {"weights": list(details["weights"]),
                                  "scale": details["scale"]}
                    sigma_grid = None
                else:
                    svm = clean["svm"]
                    tuned, report = pretrain_kernel(
                        aux, KernelSpec.se(1.0), svm["c_grid"], svm["sigma_grid"],
                        epsilon=svm["epsilon"],
                        normalize_result=(strategy == "reweighted"))
                    provenance = {"C": report.C, "sigma": report.sigma,
                                  "loo_mse": report.loo_mse,
                                  "n_support": report.n_support}
                    if strategy == "reweighted":
                        spec = tuned
                        sigma_grid = None
                    else:
                        spec = KernelSpec.composite(1.0, tuned)
            except ApiError:
                raise
            except Exception as exc:
                raise ApiError(422, "pretraining", f"pre-training failed: {exc}")
        sid = secrets.token_urlsafe(16)
        created_at = time.time()
        sess = self._build(sid, created_at, clean, spec, provenance, record,
                           sigma_grid)
        event = {
            "event": "created",
            "created_at": created_at,
            "body": clean,
            "spec": spec.to_dict(),
            "sigma_grid": None if sigma_grid is None else list(sigma_grid),
            "provenance": provenance,
        }
        with self._lock:
            self._append_event(sid, event)
            self._sessions[sid] = sess
        return sess

    def _build(self, sid, created_at, clean, spec, provenance, record,
               sigma_grid) -> _Session:
        grid = _candidate_grid(clean["bounds"], clean["resolution"])
        cands = record.normalize_x(grid)
        bo = BoSession(
            candidates=cands,
            spec=spec,
            acquisition=AcquisitionSpec(kind=clean["acquisition"]["kind"],
                                        delta=clean["acquisition"]["delta"]),
            nu2_grid=tuple(clean["gp"]["nu2_grid"]),
            sigma_grid=None if sigma_grid is None else tuple(sigma_grid),
            seed=clean["seed"],
        )
        return _Session(
            id=sid, created_at=created_at, body=clean, spec=spec,
            provenance=provenance, record=record, session=bo,
            sign=-1.0 if clean["goal"] == "minimize" else 1.0,
        )

    def get(self, sid) -> _Session:
        with self._lock:
            sess = self._sessions.get(sid)
        if sess is None:
            sess = self._load(sid)
            if sess is None:
                raise ApiError(404, "not-found", f"unknown session {sid!r}")
            with self._lock:
                sess = self._sessions.setdefault(sid, sess)
        return sess

    def _load(self, sid) -> _Session | None:
        path = self._event_path(sid)
        if not os.path.exists(path):
            return None
        sess = None
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                ev = json.loads(line)
                kind = ev["event"]
                if kind == "created":
                    spec = KernelSpec.from_dict(ev["spec"])
                    clean = ev["body"]
                    record = NormalizationRecord.from_bounds(clean["bounds"])
                    sess = self._build(sid, ev["created_at"], clean, spec,
                                       ev.get("provenance"), record,
                                       ev.get("sigma_grid"))
                elif kind == "suggested":
                    sess.session.pending = {
                        "t": ev["t"], "index": ev["index"], "acq": ev["acq"],
                        "mu": ev["mu"], "sigma": ev["sigma"], "nu2": ev["nu2"],
                        "sigma_scale": ev["sigma_scale"],
                        "jitter_escalations": ev["jitter_escalations"],
                    }
                    sess.pending_response = ev["response"]
                    sess.status = "awaiting-observation"
                elif kind == "observed":
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        tell(sess.session, np.asarray(ev["x"], dtype=float),
                             sess.sign * ev["y"])
                    sess.rows.append(ev["row"])
                    if ev.get("key"):
                        sess.idempotency[ev["key"]] = ev["response"]
                    sess.pending_response = None
                    sess.status = "ready-to-suggest"
                elif kind == "closed":
                    sess.status = "closed"
        return sess

    # -- commands -----------------------------------------------------

    def suggestion(self, sid) -> dict:
        sess = self.get(sid)
        with sess.lock:
            if sess.status == "closed":
                raise ApiError(409, "wrong-status", "session is closed")
            if sess.status == "awaiting-observation" and sess.pending_response:
                return sess.pending_response
            x = suggest(sess.session)
            pending = sess.session.pending
            response = {
                "t": pending["t"],
                "x": [float(v) for v in x],
                "acquisition_value": pending["acq"],
                "model": {"mu": pending["mu"], "sigma": pending["sigma"]},
            }
            event = dict(pending)
            event.update({"event": "suggested", "x": response["x"],
                          "response": response})
            self._append_event(sid, event)
            sess.pending_response = response
            sess.status = "awaiting-observation"
            return response

    def observe(self, sid, body, idem_key=None) -> dict:
        sess = self.get(sid)
        with sess.lock:
            if idem_key and idem_key in sess.idempotency:
                return sess.idempotency[idem_key]
            if sess.status == "closed":
                raise ApiError(409, "wrong-status", "session is closed")
            if sess.status != "awaiting-observation":
                raise ApiError(409, "wrong-status",
                               "no suggestion pending; GET a suggestion first")
            _require(isinstance(body, dict), "body must be a JSON object")
            y = body.get("y")
            ok = isinstance(y, (int, float)) and math.isfinite(y)
            _require(ok, "y must be a finite number", "y")
            x = body.get("x")
            _require(isinstance(x, list) and len(x) == sess.body["dimension"]
                     and all(isinstance(v, (int, float)) and math.isfinite(v)
                             for v in x),
                     "x must be a finite vector of session dimension", "x")
            xv = np.asarray(x, dtype=float)
            ctx = sess.session.pending or {}
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                tell(sess.session, xv, sess.sign * float(y))
            t = len(sess.rows) + 1
            row = {
                "t": t,
                "x": [float(v) for v in xv],
                "y": float(y),
                "best": sess.best_user,
                "nu2": ctx.get("nu2"),
                "sigma": ctx.get("sigma_scale"),
                "acq": ctx.get("acq"),
                "jitter_escalations": ctx.get("jitter_escalations", 0),
            }
            warning = None
            suggested_x = ctx.get("index")
            if suggested_x is not None and not np.array_equal(
                    sess.session.candidates[suggested_x], xv):
                warning = "observation differs from the suggested point"
            for w in caught:
                if "outside the candidate grid" in str(w.message):
                    warning = "off-grid observation"
            if warning:
                row["warning"] = warning
            response = {"t": t, "best_so_far": sess.best_user}
            event = {"event": "observed", "t": t, "x": row["x"], "y": float(y),
                     "key": idem_key, "row": row, "response": response}
            self._append_event(sid, event)
            sess.rows.append(row)
            if idem_key:
                sess.idempotency[idem_key] = response
            sess.pending_response = None
            sess.status = "ready-to-suggest"
            return response

    def trace_text(self, sid) -> str:
        sess = self.get(sid)
        with sess.lock:
            return "".join(_jsonio.dumps(row) + "\n" for row in sess.rows)

    def close(self, sid) -> dict:
        sess = self.get(sid)
        with sess.lock:
            if sess.status != "closed":
                self._append_event(sid, {"event": "closed", "time": time.time()})
                sess.status = "closed"
            return {
                "id": sid,
                "status": "closed",
                "iterations": len(sess.rows),
                "best_y": sess.best_user,
                "best_x": sess.best_x(),
            }

    def describe(self, sid) -> dict:
        sess = self.get(sid)
        with sess.lock:
            return {
                "id": sid,
                "status": sess.status,
                "created_at": sess.created_at,
                "dimension": sess.body["dimension"],
                "bounds": [list(b) for b in sess.body["bounds"]],
                "resolution": sess.body["resolution"],
                "goal": sess.body["goal"],
                "acquisition": sess.body["acquisition"],
                "kernel_strategy": sess.body["kernel"]["strategy"],
                "iterations": len(sess.rows),
                "best_y": sess.best_user,
                "best_x": sess.best_x(),
                "provenance": sess.provenance,
            }


# ---------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------


def create_app(data_dir: str | None = None):
    store = SessionStore(data_dir or os.environ.get("DATA_DIR", "./data"))
    app = FastAPI(title="covtune session service")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def _json(payload, status=200):
        return Response(content=_jsonio.dumps(payload),
                        media_type="application/json", status_code=status)

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return _json(exc.body(), status=exc.status)

    async def _read_json(request):
        try:
            return json.loads(await request.body() or b"null")
        except json.JSONDecodeError as exc:
            raise ApiError(400, "schema", f"invalid JSON body: {exc}")

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/sessions")
    async def create_session(request: Request):
        sess = store.create(await _read_json(request))
        return _json({"id": sess.id}, status=201)

    @app.get("/v1/sessions/{sid}")
    def get_session(sid: str):
        return _json(store.describe(sid))

    @app.get("/v1/sessions/{sid}/suggestion")
    def get_suggestion(sid: str):
        return _json(store.suggestion(sid))

    @app.post("/v1/sessions/{sid}/observations")
    async def post_observation(sid: str, request: Request):
        key = request.headers.get("Idempotency-Key")
        body = await _read_json(request)
        return _json(store.observe(sid, body, idem_key=key))

    @app.get("/v1/sessions/{sid}/trace")
    def get_trace(sid: str):
        return PlainTextResponse(store.trace_text(sid),
                                 media_type="application/x-ndjson")

    @app.post("/v1/sessions/{sid}/close")
    def close_session(sid: str):
        return _json(store.close(sid))

    @app.post("/v1/datasets")
    async def upload_dataset(request: Request):
        text = (await request.body()).decode("utf-8", errors="replace")
        return _json({"id": store.save_upload(text)}, status=201)

    console_dir = os.environ.get("CONSOLE_DIST", "frontend/dist")
    if os.path.isdir(console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")
    return app


def main(host: str = "127.0.0.1", port: int = 8765, data_dir: str | None = None):
    import uvicorn

    bind = os.environ.get("BIND_ADDR")
    if bind:
        host, _, p = bind.partition(":")
        if p:
            port = int(p)
    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")
