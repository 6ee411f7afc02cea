"""FastAPI application exposing the merge/quantify/evaluate chain.

Error mapping mirrors the CLI's exit codes: malformed input documents map to
400, semantic violations (bad probabilities, inconsistent configs) map to
422. Endpoint bodies stay thin; all real work happens in the core package.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..entropy import entropy_h, entropy_h_star, quantify_frame
from ..errors import InvariantViolation, ParseError
from ..merge import merge_frame
from ..pipeline import ConfigBundle
from ..protocol import group_report, group_rows, match_frame, sweep_thresholds
from .schemas import (
    ClusterEntropyRequest,
    ClusterEntropyResponse,
    EvaluateRequest,
    EvaluateResponse,
    GroupReportOut,
    QuantifiedObjectOut,
    QuantifyFrameRequest,
    QuantifyFrameResponse,
    SweepRequest,
    SweepResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="sotifkit",
        version=__version__,
        description="entropy-based uncertainty for detector ensembles",
    )

    @app.exception_handler(InvariantViolation)
    async def _invariant(request: Request, exc: InvariantViolation) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(ParseError)
    async def _parse(request: Request, exc: ParseError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/defaults")
    async def defaults() -> dict:
        return ConfigBundle.default().to_json()

    @app.post("/quantify/frame", response_model=QuantifyFrameResponse)
    async def quantify_frame_endpoint(request: QuantifyFrameRequest) -> QuantifyFrameResponse:
        entropy_config = request.entropy.to_config()
        per_model = [
            [det.to_detection(t, order) for order, det in enumerate(model)]
            for t, model in enumerate(request.per_model)
        ]
        if len(per_model) > entropy_config.ensemble_size:
            raise InvariantViolation(
                f"got {len(per_model)} model lists but ensemble_size is "
                f"{entropy_config.ensemble_size}"
            )
        merged = merge_frame(per_model, request.merge.to_config())
        quantified = quantify_frame(merged, entropy_config)
        return QuantifyFrameResponse(
            header=entropy_config.to_header(),
            objects=[
                QuantifiedObjectOut(
                    bbox=[q.box.x, q.box.y, q.box.w, q.box.h],
                    label=q.label,
                    d=q.d,
                    fused_probs=list(q.fused_probs),
                    h_star=q.h_star,
                    h=q.h,
                    warned=q.warned,
                )
                for q in quantified
            ],
        )

    @app.post("/entropy/cluster", response_model=ClusterEntropyResponse)
    async def cluster_endpoint(request: ClusterEntropyRequest) -> ClusterEntropyResponse:
        config = request.entropy.to_config()
        vectors = request.class_prob_vectors
        d = len(vectors)
        if d > config.ensemble_size:
            raise InvariantViolation(
                f"{d} vectors exceed ensemble_size {config.ensemble_size}"
            )
        for vector in vectors:
            if len(vector) != config.class_count:
                raise InvariantViolation(
                    f"vector length {len(vector)} != class_count {config.class_count}"
                )
            for p in vector:
                if not 0.0 <= p <= 1.0:
                    raise InvariantViolation(f"probability {p} outside [0, 1]")
        denom = config.ensemble_size if config.policy == "zero-fill" else d
        fused = [min(max(sum(v[c] for v in vectors) / denom, 0.0), 1.0)
                 for c in range(config.class_count)]
        h_star = entropy_h_star(fused, config.log_base)
        h = entropy_h(h_star, d, config)
        return ClusterEntropyResponse(
            fused_probs=fused, d=d, h_star=h_star, h=h, warned=h > config.theta_w
        )

    def _evaluate_rows(request: EvaluateRequest):
        merge_config = request.merge.to_config()
        entropy_config = request.entropy.to_config()
        protocol_config = request.protocol.to_config()
        frames = []
        rows = []
        for frame_in in request.frames:
            frame = frame_in.to_frame()
            per_model = frame_in.to_detections()
            merged = merge_frame(per_model, merge_config)
            quantified = quantify_frame(merged, entropy_config)
            rows.extend(match_frame(frame, quantified, protocol_config))
            frames.append(frame)
        return frames, rows, entropy_config, protocol_config

    @app.post("/protocol/evaluate", response_model=EvaluateResponse)
    async def evaluate_endpoint(request: EvaluateRequest) -> EvaluateResponse:
        frames, rows, entropy_config, protocol_config = _evaluate_rows(request)
        grouped = group_rows(frames, rows)
        return EvaluateResponse(
            groups={
                name: GroupReportOut(**group_report(bucket, entropy_config.theta_w,
                                                    protocol_config))
                for name, bucket in grouped.items()
            }
        )

    @app.post("/protocol/sweep", response_model=SweepResponse)
    async def sweep_endpoint(request: SweepRequest) -> SweepResponse:
        frames, rows, _, protocol_config = _evaluate_rows(request)
        sweep = sweep_thresholds(
            rows, protocol_config, start=request.start, stop=request.stop, step=request.step
        )
        return SweepResponse(sweep=[m.to_json() for m in sweep])

    return app
