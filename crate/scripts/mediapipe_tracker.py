#!/usr/bin/env python3
"""Face tracker for `emo3d datagen --tracker command:python3 scripts/mediapipe_tracker.py`.

Runs the MediaPipe face landmarker with blendshape output and answers the
emo3d tracker protocol on stdin/stdout:

    {"width", "height", "rgb": b64} -> {"blendshapes": {name: score, ...}}
                                     | {"no_face": true} | {"error": ...}

Usage: mediapipe_tracker.py [TASK_FILE]. TASK_FILE is a local
face_landmarker.task bundle, defaulting to $EMO3D_FACE_LANDMARKER.
"""

import argparse
import os
import sys

from jsonlines import decode_rgb, serve


class Landmarker:
    def __init__(self, task_file):
        import mediapipe as mp
        from mediapipe.tasks.python import BaseOptions, vision

        self.mp = mp
        options = vision.FaceLandmarkerOptions(
            base_options=BaseOptions(model_asset_path=task_file),
            output_face_blendshapes=True,
            num_faces=1,
        )
        self.landmarker = vision.FaceLandmarker.create_from_options(options)

    def track(self, width, height, raw):
        import numpy as np

        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
        image = self.mp.Image(image_format=self.mp.ImageFormat.SRGB, data=pixels)
        result = self.landmarker.detect(image)
        if not result.face_blendshapes:
            return None
        return {c.category_name: float(c.score) for c in result.face_blendshapes[0]}


def handler(tracker):
    def handle(request):
        scores = tracker.track(*decode_rgb(request))
        if scores is None:
            return {"no_face": True}
        return {"blendshapes": scores}

    return handle


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("task_file", nargs="?", default=os.environ.get("EMO3D_FACE_LANDMARKER"))
    args = parser.parse_args()
    if not args.task_file:
        parser.error("no landmarker bundle given and EMO3D_FACE_LANDMARKER is unset")
    serve(handler(Landmarker(args.task_file)))


if __name__ == "__main__":
    sys.exit(main())
