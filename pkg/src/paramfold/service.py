"""HTTP facade over the pipeline: pydantic request/response models and a
FastAPI app.

Handlers are plain functions over the models so the CLI can call them
in-process; the routes only add HTTP error translation.  Error bodies are
``{"error": {"kind": ..., "message": ..., "report": ...?}}`` with kinds
matching the library's exception taxonomy (spec-format -> 400, everything
mathematical or numerical -> 422).
"""

from __future__ import annotations

from typing import Any, Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import pipeline
from .errors import ParamfoldError, SpecFormatError
from .model import PlanarMapSpec, map_spec_from_dict


class Monomial(BaseModel):
    i: int
    j: int
    v: float


class MapSpecModel(BaseModel):
    name: str = "map"
    c: float
    degree: int
    f1: list[Monomial] = Field(default_factory=list)
    f2: list[Monomial]
    validity_radius: float | None = None

    def to_spec(self) -> PlanarMapSpec:
        data: dict[str, Any] = {
            "name": self.name,
            "c": self.c,
            "degree": self.degree,
            "f1": [m.model_dump() for m in self.f1],
            "f2": [m.model_dump() for m in self.f2],
        }
        if self.validity_radius is not None:
            data["validity_radius"] = self.validity_radius
        return map_spec_from_dict(data)


BranchName = Literal["stable", "unstable"]


class ClassifyRequest(BaseModel):
    map: MapSpecModel


class ClassifyResponse(BaseModel):
    reduced: dict[str, Any]
    hypotheses: dict[str, Any]


class ApproxRequest(BaseModel):
    map: MapSpecModel
    branch: BranchName = "stable"
    order: int = 10
    second_family: bool = False
    tie_break: float = 0.0


class ApproxResponse(BaseModel):
    parameterization: dict[str, Any]
    residual_report: dict[str, Any]


class ResidualRequest(BaseModel):
    map: MapSpecModel
    parameterization: dict[str, Any]
    t_samples: list[float] | None = None


class ResidualResponse(BaseModel):
    residual_report: dict[str, Any]


class RefineRequest(BaseModel):
    map: MapSpecModel
    branch: BranchName = "stable"
    order: int = 10
    rho: float | None = None
    tol: float = 1e-12
    grid: int = 32
    max_sweeps: int = 60
    gamma: float | None = None


class RefineResponse(BaseModel):
    refine: dict[str, Any]
    parameterization: dict[str, Any]
    rho: float
    convergence_table: list[tuple[int, float, float]]


class GlobalizeRequest(BaseModel):
    map: MapSpecModel
    t: list[float]
    branch: BranchName = "stable"
    order: int = 10
    rho: float | None = None
    tol: float = 1e-12
    grid: int = 32


class GlobalizeResponse(BaseModel):
    rho: float
    points: list[dict[str, float]]


class FullRequest(BaseModel):
    map: MapSpecModel
    branch: BranchName = "stable"
    order: int = 10
    rho: float | None = None
    tol: float = 1e-12
    grid: int = 32
    tmax: float | None = None
    tmin: float | None = None
    samples: int | None = None
    gamma: float | None = None


class FullResponse(BaseModel):
    columns: list[str]
    rows: list[list[float]]
    meta: dict[str, Any]


# -- handlers (shared by HTTP routes and the in-process CLI client) ---------


def handle_classify(req: ClassifyRequest) -> ClassifyResponse:
    return ClassifyResponse(**pipeline.run_classify(req.map.to_spec()))


def handle_approx(req: ApproxRequest) -> ApproxResponse:
    return ApproxResponse(
        **pipeline.run_approx(
            req.map.to_spec(),
            branch=req.branch,
            order=req.order,
            second_family=req.second_family,
            tie_break=req.tie_break,
        )
    )


def handle_residual(req: ResidualRequest) -> ResidualResponse:
    return ResidualResponse(
        **pipeline.run_residual(
            req.map.to_spec(), req.parameterization, t_samples=req.t_samples
        )
    )


def handle_refine(req: RefineRequest) -> RefineResponse:
    return RefineResponse(
        **pipeline.run_refine(
            req.map.to_spec(),
            branch=req.branch,
            order=req.order,
            rho=req.rho,
            tol=req.tol,
            grid_m=req.grid,
            max_sweeps=req.max_sweeps,
            gamma=req.gamma,
        )
    )


def handle_globalize(req: GlobalizeRequest) -> GlobalizeResponse:
    return GlobalizeResponse(
        **pipeline.run_globalize(
            req.map.to_spec(),
            req.t,
            branch=req.branch,
            order=req.order,
            rho=req.rho,
            tol=req.tol,
            grid_m=req.grid,
        )
    )


def handle_full(req: FullRequest) -> FullResponse:
    payload, _ = pipeline.run_full(
        req.map.to_spec(),
        branch=req.branch,
        order=req.order,
        rho=req.rho,
        tol=req.tol,
        grid_m=req.grid,
        tmax=req.tmax,
        tmin=req.tmin,
        samples=req.samples,
        gamma=req.gamma,
    )
    return FullResponse(**payload)


def error_body(exc: ParamfoldError) -> dict:
    body: dict[str, Any] = {"kind": exc.kind, "message": str(exc)}
    report = getattr(exc, "report", None)
    if report is not None:
        body["report"] = report
    return {"error": body}


def create_app() -> FastAPI:
    app = FastAPI(
        title="paramfold",
        description=(
            "Invariant curves of planar maps with a nilpotent parabolic "
            "fixed point"
        ),
        version="0.1.0",
    )

    @app.exception_handler(SpecFormatError)
    async def _spec_error(request: Request, exc: SpecFormatError):
        return JSONResponse(status_code=400, content=error_body(exc))

    @app.exception_handler(ParamfoldError)
    async def _domain_error(request: Request, exc: ParamfoldError):
        return JSONResponse(status_code=422, content=error_body(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "error": {
                    "kind": "spec-format",
                    "message": "invalid request payload",
                    "detail": exc.errors(),
                }
            },
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest):
        return handle_classify(req)

    @app.post("/approx", response_model=ApproxResponse)
    def approx(req: ApproxRequest):
        return handle_approx(req)

    @app.post("/residual", response_model=ResidualResponse)
    def residual(req: ResidualRequest):
        return handle_residual(req)

    @app.post("/refine", response_model=RefineResponse)
    def refine(req: RefineRequest):
        return handle_refine(req)

    @app.post("/globalize", response_model=GlobalizeResponse)
    def globalize(req: GlobalizeRequest):
        return handle_globalize(req)

    @app.post("/full", response_model=FullResponse)
    def full(req: FullRequest):
        return handle_full(req)

    return app


app = create_app()
