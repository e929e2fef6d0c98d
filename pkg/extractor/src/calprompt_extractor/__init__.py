"""Masked-LM probe extractor for the calprompt calibration engine."""

from .extract import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_LEN,
    ExtractionError,
    InputRow,
    build_prompt,
    extract_priors,
    extract_records,
    load_model,
    read_rows,
    resolve_label_ids,
    write_manifest_json,
    write_priors_json,
    write_records_jsonl,
)
from .templates import (
    REGISTRY,
    PromptTemplate,
    TemplateError,
    get_template,
    instantiate,
    templates_for_task,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_MAX_LEN",
    "ExtractionError",
    "InputRow",
    "PromptTemplate",
    "REGISTRY",
    "TemplateError",
    "__version__",
    "build_prompt",
    "extract_priors",
    "extract_records",
    "get_template",
    "instantiate",
    "load_model",
    "read_rows",
    "resolve_label_ids",
    "templates_for_task",
    "write_manifest_json",
    "write_priors_json",
    "write_records_jsonl",
]
