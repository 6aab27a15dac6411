"""CSV tables with a ``#`` manifest header, and JSON run manifests.

CSV files never contain wall times or dates, so repeated runs with the same
configuration produce byte-identical files; timings go to the manifest
sidecar ``<output>.manifest.json``.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def table_text(names, rows, meta: dict | None = None) -> str:
    lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    lines.append(",".join(names))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_table(out, names, rows, meta: dict | None = None) -> None:
    """Write to path ``out``, or to stdout when ``out`` is None or ``-``."""
    text = table_text(names, rows, meta)
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    solver: str | None = None
    n_steps: dict = field(default_factory=dict)
    wall_time_s: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__

    def header(self) -> dict:
        """Deterministic subset for CSV headers (no timings)."""
        h = {"generator": f"cmtfiber {self.version}", "command": self.command,
             "config_sha256": self.config_sha256}
        if self.solver:
            h["solver"] = self.solver
        for k, v in self.n_steps.items():
            h[f"n_steps_{k}"] = v
        return h

    def write(self, out) -> Path | None:
        if out is None or str(out) == "-":
            return None
        path = Path(str(out) + ".manifest.json")
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path
