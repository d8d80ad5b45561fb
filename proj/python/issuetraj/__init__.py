"""Mine structured resolution trajectories from GitHub issue threads."""

import json
import os

from ._core import (
    ConfigError,
    EmptyInput,
    Error,
    InvalidUrl,
    MalformedInput,
    canonical_thread,
    category_for_scores,
    classify_url,
    extract_urls,
    labels,
    match_labels,
    normalize_url,
    percent,
    schema_for,
    thread_filename,
    validate_trajectory,
)

__all__ = [
    "ConfigError",
    "EmptyInput",
    "Error",
    "InvalidUrl",
    "MalformedInput",
    "aggregate",
    "canonical_thread",
    "category_for_scores",
    "classify_url",
    "extract",
    "extract_urls",
    "labels",
    "match_labels",
    "normalize_url",
    "percent",
    "schema_for",
    "thread_filename",
    "validate_trajectory",
]


def aggregate(categories, split="split"):
    """Verdict counts, one-decimal percentages and approval rate for a split."""
    from ._core import _aggregate_json

    return json.loads(_aggregate_json(list(categories), split))


def extract(inputs, output_dir, stub_script, cache_path="", stable_output=True, parallelism=1):
    """Run extraction offline with a scripted stub gateway; returns the run report."""
    from ._core import _extract_json

    if isinstance(inputs, (str, os.PathLike)):
        inputs = [inputs]
    return json.loads(
        _extract_json([str(p) for p in inputs], str(output_dir), str(stub_script),
                      str(cache_path), stable_output, parallelism)
    )
