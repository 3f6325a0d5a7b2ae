"""Python bindings for the viva voce examination core."""

from ._viva import (
    Examinations,
    VivaError,
    classify_output,
    export_text,
    mock_confidence_score,
    rules_version,
    sanitize,
    scan,
    verify_export,
)

__all__ = [
    "Examinations",
    "VivaError",
    "classify_output",
    "export_text",
    "mock_confidence_score",
    "rules_version",
    "sanitize",
    "scan",
    "verify_export",
]
