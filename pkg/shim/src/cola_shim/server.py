"""FastAPI app implementing the backend protocol endpoints.

Request/response bodies mirror the engine's wire format exactly. Errors:
400 for malformed requests (including candidates that are not single
vocabulary tokens), 404 for unknown model ids, 500 for inference
failures.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import inference
from .registry import KIND_CAUSAL, KIND_MASKED, ModelRegistry, NotSingleToken, UnknownModel


class FillMaskRequest(BaseModel):
    template: str
    mask_token: str = "<MASK>"
    candidates: list[str] = Field(min_length=1)
    model: str


class GenerateRequest(BaseModel):
    prompt: str
    num_samples: int = Field(ge=1)
    max_new_tokens: int = Field(ge=1)
    temperature: float = Field(gt=0)
    seed: int
    model: str


class InfillRequest(BaseModel):
    text: str
    spans: list[list[int]] = Field(min_length=1)
    control_code: str
    num_samples: int = Field(ge=1)
    temperature: float = Field(gt=0)
    seed: int
    model: str


class TextRequest(BaseModel):
    text: str = Field(min_length=1)
    model: str


class SrlRequest(BaseModel):
    text: str = Field(min_length=1)


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="cola-shim", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.exception_handler(inference.BadRequest)
    async def bad_request(request: Request, exc: inference.BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(NotSingleToken)
    async def not_single_token(request: Request, exc: NotSingleToken):
        return JSONResponse(status_code=400, content={"error": str(exc), "token": exc.token})

    @app.exception_handler(UnknownModel)
    async def unknown_model(request: Request, exc: UnknownModel):
        return JSONResponse(status_code=404, content={"error": f"unknown model {exc.model_id!r}"})

    @app.exception_handler(Exception)
    async def inference_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.post("/v1/fill_mask")
    def fill_mask(body: FillMaskRequest):
        entry = registry.get_kind(body.model, KIND_MASKED)
        scores = inference.fill_mask(entry, body.template, body.mask_token, body.candidates)
        return {"scores": scores}

    @app.post("/v1/generate")
    def generate(body: GenerateRequest):
        entry = registry.get_kind(body.model, KIND_CAUSAL)
        texts = inference.generate(
            entry, body.prompt, body.num_samples, body.max_new_tokens,
            body.temperature, body.seed,
        )
        return {"texts": texts}

    @app.post("/v1/infill")
    def infill(body: InfillRequest):
        entry = registry.get_kind(body.model, KIND_CAUSAL)
        texts = inference.infill(
            entry, body.text, body.spans, body.control_code,
            body.num_samples, body.temperature, body.seed,
        )
        return {"texts": texts}

    @app.post("/v1/score_tokens")
    def score_tokens(body: TextRequest):
        entry = registry.get_kind(body.model, KIND_CAUSAL)
        return {"token_logprobs": inference.score_tokens(entry, body.text)}

    @app.post("/v1/pseudo_loglik")
    def pseudo_loglik(body: TextRequest):
        entry = registry.get_kind(body.model, KIND_MASKED)
        return {"avg_token_loglik": inference.pseudo_loglik(entry, body.text)}

    @app.post("/v1/srl")
    def srl(body: SrlRequest):
        return inference.srl(body.text)

    @app.get("/v1/models")
    def models():
        return {"models": registry.ids()}

    return app
