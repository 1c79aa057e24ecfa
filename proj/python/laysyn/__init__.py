"""Python bindings for the laysyn layout synthesizer."""

import json

from ._core import (
    Catalog,
    LaysynError,
    Layout,
    Program,
    Swizzle,
    bank_conflicts,
    coalesce,
    complement,
    compose,
    concat,
    decode_colex,
    explain,
    inverse,
    pointwise_equal,
    restrict_first_mode,
    schedule,
    synthesize,
)

__all__ = [
    "Catalog",
    "LaysynError",
    "Layout",
    "Program",
    "Swizzle",
    "bank_conflicts",
    "coalesce",
    "complement",
    "compose",
    "concat",
    "decode_colex",
    "explain",
    "inverse",
    "pointwise_equal",
    "restrict_first_mode",
    "schedule",
    "synthesize",
    "synthesize_report",
]


def synthesize_report(program, catalog, **kwargs):
    """Like synthesize() but returns the parsed report."""
    return json.loads(synthesize(program, catalog, **kwargs))
