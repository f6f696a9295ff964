"""Text formats for pulse sequences, iteration traces and sweep curves.

Pulse-sequence files are CSV with a ``# key = value`` header::

    # timeopt pulse sequence
    # gate = qft
    # n = 3
    # topology = chain
    # couplings = 0-1:1.0 1-2:1.0
    # umax = 314.1592653589793
    # T = 2.05
    # M = 82
    # functional = psu
    # phase = none
    # seed = 7
    # fidelity = 0.9999912
    slice,dt,q0x,q0y,q1x,q1y,q2x,q2y
    0,0.025,...

Qubit 0 is the most significant bit of a basis index. Floats are written
with ``repr`` so a file re-simulates to the stored fidelity.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import socket
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .grape import PulseSequence
from .spin import CouplingGraph, control_labels

PULSE_MAGIC = "timeopt pulse sequence"


def format_couplings(graph: CouplingGraph) -> str:
    return " ".join(f"{l}-{m}:{J!r}" for l, m, J in graph.edges)


def parse_couplings(text: str) -> list[tuple[int, int, float]]:
    edges = []
    for tok in text.split():
        pair, _, J = tok.partition(":")
        l, _, m = pair.partition("-")
        edges.append((int(l), int(m), float(J)))
    return edges


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_manifest(config: dict, seeds: Iterable[int] = (), wall_time: float | None = None) -> dict:
    """Provenance block written at the top of every output file."""
    return {
        "tool": f"timeopt {__version__}",
        "config_hash": config_hash(config),
        "seeds": " ".join(str(s) for s in seeds),
        "wall_time": "" if wall_time is None else f"{wall_time:.3f}",
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "host": socket.gethostname(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }


def _header_lines(header: dict, magic: str) -> list[str]:
    lines = [f"# {magic}"]
    for key, value in header.items():
        if value is None:
            value = "none"
        lines.append(f"# {key} = {value}")
    return lines


def write_pulse_file(path, seq: PulseSequence, header: dict) -> Path:
    """Write ``seq`` with ``header`` metadata (gate, n, topology, couplings, ...)."""
    path = Path(path)
    n_ctrl = seq.n_controls
    labels = control_labels(n_ctrl // 2)
    with path.open("w", newline="") as fh:
        fh.write("\n".join(_header_lines(header, PULSE_MAGIC)) + "\n")
        w = csv.writer(fh)
        w.writerow(["slice", "dt"] + labels)
        for k in range(seq.M):
            w.writerow([k, repr(float(seq.durations[k]))] + [repr(float(u)) for u in seq.amplitudes[k]])
    return path


def read_header(path) -> tuple[dict, list[str]]:
    header: dict[str, str] = {}
    body: list[str] = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    header[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    return header, body


def read_pulse_file(path) -> tuple[PulseSequence, dict]:
    header, body = read_header(path)
    rows = list(csv.reader(body))
    if not rows or rows[0][:2] != ["slice", "dt"]:
        raise ValueError(f"{path}: not a pulse-sequence file")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if data.size == 0:
        raise ValueError(f"{path}: no slices")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    seq = PulseSequence(data[:, 1], data[:, 2:])
    return seq, header


def write_trace(path, trace: list[float], header: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header:
            fh.write("\n".join(_header_lines(header, "timeopt fidelity trace")) + "\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "F"])
        for i, F in enumerate(trace):
            w.writerow([i, repr(float(F))])
    return path


def write_curve(path, rows: list[dict], header: dict | None = None) -> Path:
    """Sweep curve: ``T, best_F, deficit, restarts_used, converged`` per grid point."""
    path = Path(path)
    cols = ["T", "best_F", "deficit", "restarts_used", "converged"]
    with path.open("w", newline="") as fh:
        if header:
            fh.write("\n".join(_header_lines(header, "timeopt sweep curve")) + "\n")
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def read_curve(path) -> tuple[list[dict], dict]:
    header, body = read_header(path)
    rows = []
    for r in csv.DictReader(body):
        rows.append(
            {
                "T": float(r["T"]),
                "best_F": float(r["best_F"]),
                "deficit": float(r["deficit"]),
                "restarts_used": int(r["restarts_used"]),
                "converged": r["converged"] in ("1", "True", "true"),
            }
        )
    return rows, header


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` config; ``#`` starts a comment, dashes in keys allowed."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {raw!r}")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out
