"""Shared request loop for the emo3d subprocess adapters.

The Rust side writes one JSON object per line and waits for exactly one
JSON line back, so every request must produce a reply, errors included.
"""

import base64
import json
import sys


def decode_rgb(request):
    """Returns (width, height, raw RGB bytes) from an image request."""
    width, height = int(request["width"]), int(request["height"])
    raw = base64.b64decode(request["rgb"])
    if len(raw) != width * height * 3:
        raise ValueError(f"expected {width * height * 3} RGB bytes, got {len(raw)}")
    return width, height, raw


def serve(handle, stdin=sys.stdin, stdout=sys.stdout):
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            reply = handle(json.loads(line))
        except Exception as e:  # reported to the caller, never fatal
            reply = {"error": f"{type(e).__name__}: {e}"}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
