"""Per-command run manifests: resolved config, input hashes, outputs, metrics.

Two runs with identical inputs produce manifests that differ only in the
wall-clock fields (``started_at``, ``wall_clock_s``).
"""
from __future__ import annotations

import hashlib
import json
import time
from datetime import datetime, timezone
from pathlib import Path

WALL_CLOCK_FIELDS = ("started_at", "wall_clock_s")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_inputs(paths: list[str | Path]) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            # hash the directory's manifest when present, else member names
            mf = p / "manifest.json"
            out[str(p)] = sha256_file(mf) if mf.exists() else hashlib.sha256(
                "\n".join(sorted(x.name for x in p.iterdir())).encode()).hexdigest()
        elif p.exists():
            out[str(p)] = sha256_file(p)
    return out


class RunManifest:
    def __init__(self, command: str, config: dict, seed: int,
                 inputs: list[str | Path] | None = None):
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs = hash_inputs(inputs or [])
        self.outputs: list[str] = []
        self.metrics: dict = {}
        self._t0 = time.time()
        self._started = datetime.now(timezone.utc).isoformat()

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "metrics": self.metrics,
            "started_at": self._started,
            "wall_clock_s": round(time.time() - self._t0, 3),
        }
        path = out_dir / "run_manifest.json"
        with open(path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
        return path


def manifests_equal_modulo_wallclock(a: dict, b: dict) -> bool:
    strip = lambda d: {k: v for k, v in d.items() if k not in WALL_CLOCK_FIELDS}
    return strip(a) == strip(b)
