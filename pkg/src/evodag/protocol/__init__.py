"""
Master/worker exchange over TCP.

Modules:
- messages: frame codec, message constructors, WorkRequest and WorkResult
- server: threading TCP master (`serve_search`)
- worker: request/train/report loop (`worker_loop`)
"""

from .messages import WorkRequest, WorkResult, decode_frame, encode_frame

__all__ = ["WorkRequest", "WorkResult", "decode_frame", "encode_frame"]
