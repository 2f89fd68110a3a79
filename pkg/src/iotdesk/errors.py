"""Error taxonomy shared by the store, pipeline, handlers, and runtimes.

Each error carries the HTTP status it maps to so the endpoint layer and the
function runtimes produce identical responses without a separate mapping
table per call site.
"""

from __future__ import annotations


class ApiError(Exception):
    """Base for all errors that surface as non-200 responses."""

    status = 500
    code = "error"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code

    def body(self) -> dict:
        return {"error": self.code, "detail": self.detail}


class Invalid(ApiError):
    status = 400
    code = "invalid"


class Unauthorized(ApiError):
    status = 401
    code = "unauthorized"


class Forbidden(ApiError):
    status = 403
    code = "forbidden"


class NotFound(ApiError):
    status = 404
    code = "not_found"


class Conflict(ApiError):
    status = 409
    code = "conflict"


class Throttled(ApiError):
    status = 429
    code = "throttled"


class Saturated(ApiError):
    status = 503
    code = "saturated"
