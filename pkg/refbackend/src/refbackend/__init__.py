"""Reference inference backend.

Speaks the engine's JSON request/response contract over stdio lines or
HTTP POST. Stub mode answers purely from an annotation file keyed by
image content digest; model mode wraps stock OpenCV detectors behind the
same schema (best effort, schema-valid only).
"""

__version__ = "0.1.0"
