"""HTTP/JSON API for interactive clamped-posterior segmentation sessions.

A session holds one image, a set of user-clamped output pixels, and the
latest marginal estimate.  Every mutation bumps the session revision;
marginal responses carry the revision they were computed for, so clients
can detect and discard stale results.

Endpoints::

    GET  /health
    POST /sessions                  {"image_ppm_base64": ...} or {"dataset_index": n}
    POST /sessions/{id}/scribbles   {"strokes": [{"x": .., "y": .., "label": "fg|bg|erase"}]}
    POST /sessions/{id}/recompute
    GET  /sessions/{id}/marginals

Errors are JSON {"code": ..., "message": ...}.
"""

from __future__ import annotations

import base64
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .inference import ClampSet, NonErgodicError, gibbs_clamped, mc_marginals
from .model import Network
from .pnm import PnmError
from .propagation import forward_deterministic
from .rng import RngStream
from .units import sigmoid

__all__ = ["build_app", "Session"]


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class Session:
    """One image being steered by scribbles.  ``revision`` strictly
    increases per mutation; cached marginals are keyed by revision."""

    def __init__(self, session_id: str, image: np.ndarray):
        self.id = session_id
        self.image = image
        self.clamps: dict[int, float] = {}
        self.revision = 0
        self.computed_revision: int | None = None
        self.marginals: np.ndarray | None = None
        self.lock = threading.Lock()


def _decode_ppm_base64(data: str) -> np.ndarray:
    from .pnm import read_pnm
    import os
    import tempfile

    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ApiError(400, "bad_image", f"invalid base64 image: {exc}") from exc
    fd, path = tempfile.mkstemp(suffix=".ppm")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        img = read_pnm(path)
    except PnmError as exc:
        raise ApiError(400, "bad_image", str(exc)) from exc
    finally:
        os.unlink(path)
    if img.ndim != 3:
        raise ApiError(400, "bad_image", "expected a color P6 PPM")
    return img.astype(float) / 255.0


def _encode_ppm_base64(image: np.ndarray) -> str:
    h, w = image.shape[:2]
    body = b"P6\n%d %d\n255\n" % (w, h)
    body += np.floor(image * 255.0 + 0.5).astype(np.uint8).tobytes()
    return base64.b64encode(body).decode("ascii")


def build_app(cfg) -> FastAPI:
    """Construct the app around one loaded model from [serve] settings."""
    from .checkpoint import load_network
    from .data import load_images

    model_path = cfg.get("serve", "model")
    if not model_path:
        raise ValueError("[serve] model is required")
    net = load_network(model_path)
    conn = net.spec.layers[-1].conn
    if not hasattr(conn, "grid"):
        raise ValueError("serve needs a model with a gridded output layer")
    grid = conn.grid
    dataset = None
    if cfg.get("serve", "image_dir"):
        dataset = load_images(cfg.get("serve", "image_dir"))

    budgets = {
        "burn_in": cfg.get("serve", "burn_in"),
        "sweeps": cfg.get("serve", "sweeps"),
        "thinning": cfg.get("serve", "thinning"),
        "seed": cfg.get("serve", "seed"),
        "samples": cfg.get("inference", "samples"),
    }
    return _build(net, grid, budgets, dataset)


def _build(net: Network, grid, budgets, dataset=None) -> FastAPI:
    app = FastAPI(title="stochnet interactive segmentation")
    try:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(CORSMiddleware, allow_origins=["*"],
                           allow_methods=["*"], allow_headers=["*"])
    except ImportError:
        pass

    h, w = grid
    sessions: dict[str, Session] = {}
    store_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def handle_api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> Session:
        with store_lock:
            session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "no_such_session", f"unknown session {session_id}")
        return session

    def preview_marginals(x: np.ndarray) -> np.ndarray:
        trace = forward_deterministic(net, x)
        kind = net.spec.layers[-1].kind
        factor = 2.0 if kind.variant == "tanh" else 1.0
        return sigmoid(factor * np.asarray(trace.output_preactivations))

    @app.get("/health")
    async def health():
        return {"status": "ok", "grid": [h, w],
                "sessions": len(sessions)}

    @app.post("/sessions")
    async def create_session(body: dict):
        if "image_ppm_base64" in body:
            image = _decode_ppm_base64(body["image_ppm_base64"])
        elif "dataset_index" in body:
            if dataset is None:
                raise ApiError(400, "no_dataset", "server has no image dataset")
            index = int(body["dataset_index"])
            if not 0 <= index < len(dataset):
                raise ApiError(404, "bad_index",
                               f"dataset has {len(dataset)} images")
            image = dataset.images[index]
        else:
            raise ApiError(400, "bad_request",
                           "need image_ppm_base64 or dataset_index")
        if image.shape != (h, w, 3):
            raise ApiError(422, "wrong_dimensions",
                           f"model expects {h}x{w}x3, got {image.shape}")
        session = Session(uuid.uuid4().hex, image)
        with store_lock:
            sessions[session.id] = session
        preview = preview_marginals(image.reshape(-1))
        return {
            "session_id": session.id,
            "revision": session.revision,
            "grid": [h, w],
            "marginals": preview.tolist(),
            "image_ppm_base64": _encode_ppm_base64(image),
        }

    @app.post("/sessions/{session_id}/scribbles")
    async def apply_scribbles(session_id: str, body: dict):
        session = get_session(session_id)
        strokes = body.get("strokes")
        if not isinstance(strokes, list):
            raise ApiError(400, "bad_request", "need a list of strokes")
        parsed = []
        for s in strokes:
            try:
                x, y, label = int(s["x"]), int(s["y"]), str(s["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(400, "bad_stroke", f"malformed stroke: {s!r}") from exc
            if not (0 <= x < w and 0 <= y < h):
                raise ApiError(422, "out_of_bounds",
                               f"pixel ({x},{y}) outside {w}x{h}")
            if label not in ("fg", "bg", "erase"):
                raise ApiError(400, "bad_stroke", f"unknown label {label!r}")
            parsed.append((x, y, label))
        with session.lock:
            for x, y, label in parsed:
                pixel = y * w + x
                if label == "erase":
                    session.clamps.pop(pixel, None)
                else:
                    session.clamps[pixel] = 1.0 if label == "fg" else 0.0
            session.revision += 1
            revision = session.revision
            count = len(session.clamps)
        return {"revision": revision, "clamp_count": count}

    @app.post("/sessions/{session_id}/recompute")
    async def recompute(session_id: str):
        session = get_session(session_id)
        with session.lock:
            revision = session.revision
            if session.computed_revision == revision:
                return {"revision": revision,
                        "marginals": session.marginals.tolist(),
                        "grid": [h, w], "cached": True}
            x = session.image.reshape(-1)
            clamp = ClampSet(dict(session.clamps))
            rng = RngStream(budgets["seed"])
            try:
                if len(clamp) == 0:
                    field = mc_marginals(net, x, budgets["samples"], rng)
                else:
                    field = gibbs_clamped(net, x, clamp, budgets["burn_in"],
                                          budgets["sweeps"], budgets["thinning"],
                                          rng)
            except NonErgodicError as exc:
                raise ApiError(409, "non_ergodic", str(exc)) from exc
            session.marginals = field.outputs
            session.computed_revision = revision
            return {"revision": revision,
                    "marginals": field.outputs.tolist(),
                    "grid": [h, w], "cached": False}

    @app.get("/sessions/{session_id}/marginals")
    async def marginals(session_id: str):
        session = get_session(session_id)
        with session.lock:
            if session.computed_revision is None:
                raise ApiError(409, "not_computed",
                               "no marginals computed yet; POST recompute first")
            return {"revision": session.computed_revision,
                    "marginals": session.marginals.tolist(),
                    "grid": [h, w],
                    "stale": session.computed_revision != session.revision}

    return app
