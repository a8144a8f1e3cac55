from .backends import BackendFailure, GenerationBackend, HttpBackend, MockBackend, TokenBucket, backend_from_config, rule_based_extract
from .pipeline import (
    Candidate,
    ExtractionFailure,
    ExtractionRun,
    SourceText,
    UnknownSource,
    extract_properties,
    post_process,
    sources_from_docs,
)
from .prompts import (
    DEFAULT_INSTRUCTION,
    DEFAULT_TEMPLATE,
    PROPERTY_INSTRUCTIONS,
    GeneratedPrompt,
    PromptTemplate,
    TemplateError,
    build_prompt,
)
from .response import ParseFailure, RawResponse, parse_response
