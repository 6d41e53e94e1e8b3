"""HTTP completion service.

One process serves one model. Request bodies are validated by hand so the
error codes stay exactly `empty_typed`, `bad_top_k`, and `not_ready`;
framework-shaped validation errors never leak out. Decodes run on a bounded
thread pool; the model reference is swapped in atomically, so a request
either sees no model (503) or a fully loaded one.
"""

from __future__ import annotations

import asyncio
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from functools import partial

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .checkpoint import ModelBundle, load_bundle
from .decoding import DecodeConfig, decode_word

ENV_MODEL_DIR = "WLAC_MODEL_DIR"
TOP_K_MAX = 50


def _error(status: int, code: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code})


class _ServiceState:
    def __init__(self, workers: int, decode_defaults: DecodeConfig, roman_table):
        self.bundle: ModelBundle | None = None
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.decode_defaults = decode_defaults
        self.roman_table = roman_table


def _parse_request(body) -> dict | JSONResponse:
    if not isinstance(body, dict):
        return _error(400, "bad_request")
    typed = body.get("typed")
    if not isinstance(typed, str) or not typed:
        return _error(400, "empty_typed")
    top_k = body.get("top_k", 5)
    if isinstance(top_k, bool) or not isinstance(top_k, int) or not 1 <= top_k <= TOP_K_MAX:
        return _error(400, "bad_top_k")
    fields = {"typed": typed, "top_k": top_k, "hard_prefix": bool(body.get("hard_prefix", False))}
    for key in ("src", "context_left", "context_right"):
        value = body.get(key, "")
        if not isinstance(value, str):
            return _error(400, "bad_request")
        fields[key] = value.split()
    return fields


def _decode(bundle: ModelBundle, fields: dict, base: DecodeConfig, roman_table):
    cfg = DecodeConfig(beam=base.beam, max_subwords=base.max_subwords,
                       hard_prefix=fields["hard_prefix"], top_k=fields["top_k"],
                       use_typed=base.use_typed)
    return decode_word(bundle.params, fields["src"], fields["context_left"],
                       fields["context_right"], fields["typed"], cfg,
                       bundle.subwords, bundle.table, roman_table=roman_table)


def create_app(bundle: ModelBundle | None = None, model_dir=None, workers: int = 2,
               decode_defaults: DecodeConfig = DecodeConfig(), roman_table=None,
               load_async: bool = False) -> FastAPI:
    """App factory. Pass a loaded bundle, a directory, or nothing to fall back
    to the WLAC_MODEL_DIR environment variable. load_async defers the load to
    a background thread so the service answers `loading` meanwhile."""
    app = FastAPI()
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    state = _ServiceState(workers, decode_defaults, roman_table)
    app.state.wlac = state

    if bundle is not None:
        state.bundle = bundle
    else:
        if model_dir is None:
            model_dir = os.environ.get(ENV_MODEL_DIR)
        if model_dir is not None:
            if load_async:
                def _load() -> None:
                    state.bundle = load_bundle(model_dir)
                threading.Thread(target=_load, daemon=True).start()
            else:
                state.bundle = load_bundle(model_dir)

    @app.get("/v1/health")
    async def health():
        loaded = state.bundle
        if loaded is None:
            return {"status": "loading", "model_id": None, "vocab_size": None}
        return {"status": "ok", "model_id": loaded.model_id,
                "vocab_size": loaded.table.size}

    @app.post("/v1/complete")
    async def complete(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request")
        fields = _parse_request(body)
        if isinstance(fields, JSONResponse):
            return fields
        loaded = state.bundle
        if loaded is None:
            return _error(503, "not_ready")
        started = time.perf_counter()
        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(
            state.pool, partial(_decode, loaded, fields, state.decode_defaults,
                                state.roman_table))
        latency_ms = (time.perf_counter() - started) * 1000.0
        return {"candidates": [{"word": w, "logprob": lp} for w, lp in result.candidates],
                "truncated": result.truncated, "latency_ms": latency_ms}

    return app
