"""Dataset manifests over a run directory of trajectory files."""

from __future__ import annotations

import json
from pathlib import Path

from ..executor.recorder import TrajError, read_traj, traj_text

MANIFEST = "manifest.json"
_AUTO_KEYS = ("format", "version", "action_dim", "frames")


def roundtrip_ok(path) -> bool:
    """Parsing then re-serializing reproduces the file byte for byte."""
    head, frames = read_traj(path)
    header = {k: v for k, v in head.items() if k not in _AUTO_KEYS}
    return traj_text(header, frames) == Path(path).read_text()


def _episode_index(path: Path) -> int:
    try:
        return int(path.stem.rsplit("_", 1)[1])
    except (IndexError, ValueError):
        return -1


def export_dataset(run_dir, write: bool = True) -> dict:
    """Manifest of every trajectory file under ``run_dir``; corrupt files go to ``errors``."""
    run_dir = Path(run_dir)
    paths = sorted(run_dir.rglob("*.traj"), key=lambda p: (str(p.parent), _episode_index(p), p.name))
    episodes, errors = [], []
    for p in paths:
        rel = str(p.relative_to(run_dir))
        try:
            head, frames = read_traj(p)
            if not roundtrip_ok(p):
                raise TrajError(1, "file does not round-trip byte for byte")
        except (TrajError, OSError, UnicodeDecodeError) as e:
            errors.append({"file": rel, "error": str(e)})
            continue
        episodes.append({"file": rel, "task": head.get("task"), "seed": head.get("seed"),
                         "episode": head.get("episode"), "frames": len(frames), "success": bool(head.get("success"))})
    # paths are relative, so a moved or copied dataset keeps the same manifest bytes
    manifest = {"episodes": episodes, "errors": errors}
    if write and run_dir.is_dir():
        (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
