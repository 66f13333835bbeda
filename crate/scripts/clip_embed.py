#!/usr/bin/env python3
"""Joint text/image encoder for `--backend command:python3 scripts/clip_embed.py`.

Loads a CLIP checkpoint from a local directory with Hugging Face transformers
and answers the emo3d encoder protocol on stdin/stdout:

    {"op": "info"}                                   -> {"name": ..., "dim": ...}
    {"op": "text", "text": ...}                      -> {"embedding": [...]}
    {"op": "image", "width", "height", "rgb": b64}   -> {"embedding": [...]}

Usage: clip_embed.py [MODEL_DIR] [--name NAME]. MODEL_DIR defaults to
$EMO3D_CLIP_DIR. Nothing is downloaded.
"""

import argparse
import os
import sys

from jsonlines import decode_rgb, serve


class ClipEncoder:
    def __init__(self, model_dir, name=None):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self.torch = torch
        self.model = CLIPModel.from_pretrained(model_dir, local_files_only=True).eval()
        self.processor = CLIPProcessor.from_pretrained(model_dir, local_files_only=True)
        self.dim = int(self.model.config.projection_dim)
        self.name = name or "clip:" + os.path.basename(os.path.normpath(model_dir))

    def _vector(self, features):
        # Newer transformers return a model output rather than a tensor.
        if not isinstance(features, self.torch.Tensor):
            features = features.pooler_output
        return [float(x) for x in features[0].tolist()]

    def text(self, text):
        inputs = self.processor(text=[text], return_tensors="pt", padding=True, truncation=True)
        with self.torch.no_grad():
            return self._vector(self.model.get_text_features(**inputs))

    def image(self, width, height, raw):
        from PIL import Image

        img = Image.frombytes("RGB", (width, height), raw)
        inputs = self.processor(images=[img], return_tensors="pt")
        with self.torch.no_grad():
            return self._vector(self.model.get_image_features(**inputs))


def handler(encoder):
    def handle(request):
        op = request.get("op")
        if op == "info":
            return {"name": encoder.name, "dim": encoder.dim}
        if op == "text":
            return {"embedding": encoder.text(request["text"])}
        if op == "image":
            return {"embedding": encoder.image(*decode_rgb(request))}
        return {"error": f"unknown op {op!r}"}

    return handle


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("model_dir", nargs="?", default=os.environ.get("EMO3D_CLIP_DIR"))
    parser.add_argument("--name", help="backend name recorded in reports")
    args = parser.parse_args()
    if not args.model_dir:
        parser.error("no model directory given and EMO3D_CLIP_DIR is unset")
    serve(handler(ClipEncoder(args.model_dir, args.name)))


if __name__ == "__main__":
    sys.exit(main())
