"""Speak the detector wire protocol by hand.

Any detector backend is a subprocess reading one JSON request per line and
writing one JSON response per line. This script launches the built-in mock
worker and walks through a session -- init, detect, finetune, detect again
-- printing every line that crosses the pipe, so the protocol a real
backend must implement is visible end to end.

Usage: python3 demos/04_worker_over_stdio.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from scenespec import ObjectTemplate, SynthSceneConfig, generate_synthetic_scene


def main():
    out = Path(tempfile.mkdtemp(prefix="wire_demo_"))
    config = SynthSceneConfig(
        width=120,
        height=90,
        frame_count=4,
        templates=(ObjectTemplate(label="car", count=1, min_size=12, max_size=16, intensity=220),),
        seed=1,
    )
    sequence, _ = generate_synthetic_scene(config, out / "scene")
    frames = [entry.path for entry in sequence.entries]

    worker_config = {
        "annotations": str(out / "scene" / "annotations.json"),
        "width": 120,
        "height": 90,
        "base_recall": 1.0,
        "false_positive_rate": 0.5,
        "seed": 3,
    }
    config_path = out / "mock.json"
    config_path.write_text(json.dumps(worker_config), encoding="utf-8")

    proc = subprocess.Popen(
        [sys.executable, "-m", "scenespec.cli", "mock-detector", "--config", str(config_path)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )

    def exchange(request):
        line = json.dumps(request)
        print(f">> {line}")
        proc.stdin.write(line + "\n")
        proc.stdin.flush()
        response = proc.stdout.readline().strip()
        shown = response if len(response) <= 200 else response[:200] + "..."
        print(f"<< {shown}\n")
        return json.loads(response)

    init = exchange({"id": 1, "op": "init", "model": "generic", "labels": ["car"]})
    model_id = init["model_id"]

    exchange({"id": 2, "op": "detect", "model_id": model_id, "frames": frames[:2]})

    tuned = exchange({
        "id": 3,
        "op": "finetune",
        "model_id": model_id,
        "frames": frames,
        "samples": [[0, "car", 10, 10, 16, 16]],
        "hyper": {"momentum": 0.9, "weight_decay": 0.0005},
    })

    exchange({"id": 4, "op": "detect", "model_id": tuned["model_id"], "frames": frames[:1]})

    # Errors are soft: the worker answers ok=false and keeps serving.
    exchange({"id": 5, "op": "detect", "model_id": "nope", "frames": frames[:1]})

    proc.stdin.close()
    proc.wait(timeout=30)
    print(f"worker exited with code {proc.returncode}")


if __name__ == "__main__":
    main()
