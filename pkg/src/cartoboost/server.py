"""Local report server: cartography JSON, threshold previews, and exports.

The server holds one immutable report in memory. All flag arithmetic for
the browser UI happens here, so a UI export and a CLI detection run over
the same report produce byte-identical flag files.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import detection as det
from .data_io import clean_dataset_files, dataset_prefix, read_report

PREVIEW_SAMPLE_SIZE = 20


@dataclass
class ReportState:
    report: object
    report_dict: dict
    ids: np.ndarray
    labels: np.ndarray
    scores: dict  # score name -> np.ndarray
    auto_thresholds: dict


def _load_state(report_path: str) -> ReportState:
    report = read_report(report_path)
    scores = {"product": report.scores("product")}
    if all(p.weight is not None for p in report.points):
        scores["weight"] = report.scores("weight")
    return ReportState(
        report=report,
        report_dict=report.to_dict(),
        ids=np.array([p.id for p in report.points]),
        labels=np.array([p.label for p in report.points]),
        scores=scores,
        auto_thresholds={},
    )


class ExportRequest(BaseModel):
    score: str
    threshold: float


def create_app(report_path: str, dataset_path: str = None, out_dir: str = "exports",
               ui_dir: str = None) -> FastAPI:
    state = _load_state(report_path)
    app = FastAPI(title="cartoboost report server")

    def resolve_scores(name: str) -> np.ndarray:
        if name not in state.scores:
            raise HTTPException(
                status_code=400,
                detail=f"score must be one of {sorted(state.scores)}",
            )
        return state.scores[name]

    def auto_threshold(name: str) -> float:
        if name not in state.auto_thresholds:
            state.auto_thresholds[name] = det.auto_valley_threshold(resolve_scores(name))
        return state.auto_thresholds[name]

    def detection_result(name: str, threshold: float) -> det.DetectionResult:
        scores = resolve_scores(name)
        if not (0.0 <= threshold <= 1.0):
            raise HTTPException(status_code=400, detail="threshold must lie in [0, 1]")
        return det.DetectionResult(
            flags=scores < threshold,
            score_name=name,
            scores=scores,
            threshold=float(threshold),
            direction=det.FLAG_IF_BELOW,
        )

    @app.get("/api/report")
    def get_report():
        return JSONResponse(state.report_dict)

    @app.get("/api/preview")
    def get_preview(score: str = "product", threshold: str = "auto"):
        value = auto_threshold(score) if threshold == "auto" else _parse_threshold(threshold)
        result = detection_result(score, value)
        flagged_ids = state.ids[result.flags]
        labels = state.labels[result.flags]
        per_class = {
            str(label): int(count)
            for label, count in zip(*np.unique(labels, return_counts=True))
        }
        return {
            "score": score,
            "threshold": value,
            "auto": threshold == "auto",
            "flagged_count": int(result.flags.sum()),
            "total": int(state.ids.size),
            "per_class_flagged": per_class,
            "flagged_ids_sample": [int(i) for i in flagged_ids[:PREVIEW_SAMPLE_SIZE]],
        }

    @app.post("/api/export")
    def post_export(body: ExportRequest):
        result = detection_result(body.score, body.threshold)
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, f"export_{body.score}")
        digest = det.config_digest({
            "method": "product" if body.score == "product" else "weights",
            "threshold": result.threshold,
            "direction": result.direction,
            "source": report_path,
        })
        csv_path, header_path = det.save_flags(result, state.ids, base, digest)
        response = {
            "flags_csv": csv_path,
            "flags_header": header_path,
            "flagged_count": int(result.flags.sum()),
        }
        if dataset_path:
            cleaned_prefix = os.path.join(out_dir, f"cleaned_{body.score}")
            kept = clean_dataset_files(dataset_prefix(dataset_path),
                                       state.ids[result.flags], cleaned_prefix)
            response["cleaned_csv"] = f"{cleaned_prefix}.csv"
            response["kept_rows"] = kept
        return response

    @app.exception_handler(ValueError)
    async def value_error_handler(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(HTTPException)
    async def http_error_handler(request, exc):
        return JSONResponse(status_code=exc.status_code, content={"error": exc.detail})

    if ui_dir is None:
        candidate = os.path.join(os.path.dirname(os.path.dirname(
            os.path.dirname(os.path.abspath(__file__)))), "frontend", "dist")
        ui_dir = candidate if os.path.isdir(candidate) else None

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return JSONResponse({
                "name": "cartoboost report server",
                "endpoints": ["/api/report", "/api/preview", "/api/export"],
                "note": "UI bundle not found; build frontend/ and pass --ui",
            })

    return app


def _parse_threshold(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise HTTPException(status_code=400,
                            detail="threshold must be a number or 'auto'") from None
