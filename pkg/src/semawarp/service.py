"""HTTP service exposing the pipeline to the map-editing front end.

All endpoints are stateless apart from the read-only checkpoints and index
held by the runtime. Images travel as base64 PNG inside JSON; geometry is
in pixel units, origin top-left, row-major. Precondition violations come
back as a structured body ``{"error": {"code", "message"}}``.
"""

from __future__ import annotations

import base64
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import ConfigError, EmptyInput, SemawarpError
from .fileio import image_from_png_bytes, image_to_png_bytes, label_image_from_png_bytes, \
    label_image_to_png_bytes
from .nets import ShapeCode
from .parsemap import LabelImage
from .pipeline import PipelineRuntime
from .retrieval import entry_by_id


class RetrieveRequest(BaseModel):
    labels_png: str
    k: int = 5


class TransformRequest(BaseModel):
    photo_png: str
    photo_labels_png: str
    cari_labels_png: str
    style_png: str | None = None


class InterpolateRequest(BaseModel):
    photo_png: str
    photo_labels_png: str
    t: float = Field(ge=0.0, le=1.0)
    ref_a_labels_png: str | None = None
    ref_b_labels_png: str | None = None
    code_a: list[float] | None = None
    code_b: list[float] | None = None


class ControlPoint(BaseModel):
    anchor: tuple[float, float]
    displacement: tuple[float, float]


class EditRequest(BaseModel):
    labels_png: str
    controls: list[ControlPoint]


def _b64_image(data: str):
    return image_from_png_bytes(base64.b64decode(data))


def _b64_labels(data: str) -> LabelImage:
    return label_image_from_png_bytes(base64.b64decode(data))


def _png_b64(image) -> str:
    return base64.b64encode(image_to_png_bytes(image)).decode("ascii")


def _labels_b64(labels: LabelImage) -> str:
    return base64.b64encode(label_image_to_png_bytes(labels)).decode("ascii")


def create_app(runtime: PipelineRuntime, ui_dir=None) -> FastAPI:
    app = FastAPI(title="semawarp", version=__version__)

    @app.exception_handler(SemawarpError)
    async def _domain_error(_req: Request, exc: SemawarpError):
        status = 404 if isinstance(exc, EmptyInput) else 400
        return JSONResponse(status_code=status,
                            content={"error": {"code": exc.code, "message": str(exc)}})

    @app.exception_handler(ValueError)
    async def _value_error(_req: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"error": {"code": "bad_request", "message": str(exc)}})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "transformer": runtime.transformer is not None,
            "retrieval": runtime.retrieval_model is not None,
            "index_size": len(runtime.index) if runtime.index else 0,
        }

    @app.post("/retrieve")
    def retrieve(req: RetrieveRequest):
        results = runtime.retrieve(_b64_labels(req.labels_png), k=req.k)
        index = runtime.index
        return {"results": [
            {"record_id": rid, "distance": dist,
             "map_path": entry_by_id(index, rid).map_path}
            for rid, dist in results
        ]}

    @app.post("/transform")
    def transform(req: TransformRequest):
        style = _b64_image(req.style_png) if req.style_png else None
        out = runtime.transform(
            _b64_image(req.photo_png),
            _b64_labels(req.photo_labels_png),
            _b64_labels(req.cari_labels_png),
            style_image=style,
        )
        return {
            "image_png": _png_b64(out["image"]),
            "fake_labels_png": _labels_b64(out["fake_labels"]),
            "component_counts": out["component_counts"],
        }

    @app.post("/interpolate")
    def interpolate(req: InterpolateRequest):
        def ref(labels_png, code):
            if labels_png is not None:
                return _b64_labels(labels_png)
            if code is not None:
                return ShapeCode(values=code)
            raise ConfigError("each reference needs labels or a code")

        out = runtime.interpolate(
            _b64_image(req.photo_png),
            _b64_labels(req.photo_labels_png),
            ref(req.ref_a_labels_png, req.code_a),
            ref(req.ref_b_labels_png, req.code_b),
            req.t,
        )
        return {
            "image_png": _png_b64(out["image"]),
            "fake_labels_png": _labels_b64(out["fake_labels"]),
            "component_counts": out["component_counts"],
        }

    @app.post("/edit")
    def edit(req: EditRequest):
        controls = [(tuple(c.anchor), tuple(c.displacement)) for c in req.controls]
        out = runtime.edit(_b64_labels(req.labels_png), controls)
        return {
            "labels_png": _labels_b64(out["labels"]),
            "component_counts": out["component_counts"],
        }

    @app.get("/gallery/{record_id}")
    def gallery(record_id: str):
        if runtime.index is None:
            raise ConfigError("no gallery index loaded")
        entry = entry_by_id(runtime.index, record_id)
        if not entry.map_path or not Path(entry.map_path).exists():
            return JSONResponse(status_code=404, content={
                "error": {"code": "not_found",
                          "message": f"no stored map for {record_id!r}"}})
        data = Path(entry.map_path).read_bytes()
        return {
            "record_id": record_id,
            "map_path": entry.map_path,
            "labels_png": base64.b64encode(data).decode("ascii"),
        }

    if ui_dir and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        @app.get("/")
        def ui_root():
            return FileResponse(Path(ui_dir) / "index.html")

        app.mount("/ui", StaticFiles(directory=str(ui_dir)), name="ui")

    return app
