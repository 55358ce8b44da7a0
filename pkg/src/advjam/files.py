"""Files written and read by a run: traces, histograms, snapshots, manifests.

Every writer goes through :func:`atomic_write`, so a crash never leaves a
half-written file behind under the final name.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import qnet
from .agents import Mode
from .channel import NONE
from .ensemble import TransitionMatrix
from .metrics import Histogram


class OutputError(OSError):
    """A read or write failed; the message names the path."""


def atomic_write(path: str | Path, data: bytes | str) -> Path:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as err:
        raise OutputError(f"cannot write {path}: {err.strerror or err}") from err
    return path


def _read(path: str | Path, mode: str = "rb"):
    path = Path(path)
    try:
        with open(path, mode) as fh:
            return fh.read()
    except OSError as err:
        raise OutputError(f"cannot read {path}: {err.strerror or err}") from err


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


def trace_header(n_users: int) -> list[str]:
    head = ["slot", "sum_rate", "moving_avg"]
    for k in range(n_users):
        head += [f"victim_{k}_channel", f"victim_{k}_power"]
    return head + ["attacker_channels", "attacker_mode"]


def emit_trace(trace, path: str | Path, window: int = 1000) -> Path:
    """One row per slot.

    Silent victims get an empty channel cell; ``attacker_channels`` lists the
    jammed channels separated by ``;`` (empty when nothing was jammed).
    """
    ma = trace.moving_average(window)
    channels = trace.channels
    powers = trace.powers
    modes = trace.attacker_mode
    names = {int(m): m.name for m in Mode}
    rows = []
    for t in range(len(trace)):
        row = [t, _num(trace.sum_rate[t]), _num(ma[t])]
        for k in range(trace.n_users):
            c = int(channels[t, k])
            row += ["" if c == NONE else c, _num(powers[t, k])]
        row += [";".join(str(c) for c in trace.jammed[t]), names[int(modes[t])]]
        rows.append(row)
    return atomic_write(path, _csv_text(trace_header(trace.n_users), rows))


def emit_histogram(table: Histogram, path: str | Path) -> Path:
    rows = [(_num(b), _num(p), _num(c)) for b, p, c in zip(table.bin_lower, table.pdf, table.cdf)]
    return atomic_write(path, _csv_text(["bin_lower", "pdf", "cdf"], rows))


def read_histogram(path: str | Path) -> Histogram:
    rows = list(csv.DictReader(io.StringIO(_read(path, "r"))))
    col = lambda name: np.array([float(r[name]) for r in rows])
    return Histogram(col("bin_lower"), col("pdf"), col("cdf"))


def read_trace(path: str | Path) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(_read(path, "r"))))


def save_snapshot(params: qnet.QNetworkParams, path: str | Path, interval: int = -1, slot: int = -1) -> Path:
    return atomic_write(path, qnet.serialize_params(params, interval, slot))


def load_snapshot(path: str | Path) -> tuple[qnet.QNetworkParams, int, int]:
    data = _read(path)
    try:
        return qnet.deserialize_params(data)
    except qnet.SnapshotFormatError as err:
        err.args = (f"{path}: {err.args[0]}",)
        raise


def write_manifest(manifest: dict, path: str | Path) -> Path:
    return atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> dict:
    return json.loads(_read(path, "r"))


# ------------------------------------------------------------ transition data

def _cell_label(idx) -> str:
    return "_".join(map(str, idx))


def emit_matrices(matrices, path: str | Path) -> Path:
    """One row per interval: the interval index, then every count flattened.

    Count columns are labelled ``prev_cur_bin`` in C order, so the shape can
    be read back from the last label.
    """
    matrices = list(matrices)
    if not matrices:
        raise ValueError("no transition matrices to write")
    shape = matrices[0].counts.shape
    header = ["interval"] + [_cell_label(idx) for idx in np.ndindex(shape)]
    rows = [[m.interval, *m.counts.ravel().tolist()] for m in matrices]
    return atomic_write(path, _csv_text(header, rows))


def read_matrices(path: str | Path) -> list[TransitionMatrix]:
    reader = csv.reader(io.StringIO(_read(path, "r")))
    header = next(reader, None)
    if not header or header[0] != "interval" or len(header) < 2:
        raise OutputError(f"{path}: not a transition matrix file")
    try:
        shape = tuple(int(v) + 1 for v in header[-1].split("_"))
    except ValueError:
        raise OutputError(f"{path}: bad column label {header[-1]!r}") from None
    if len(shape) != 3 or math.prod(shape) != len(header) - 1:
        raise OutputError(f"{path}: column count does not match shape {shape}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            values = [int(v) for v in row]
        except ValueError:
            raise OutputError(f"{path}: malformed row at line {lineno}") from None
        if len(values) != len(header):
            raise OutputError(f"{path}: wrong number of fields at line {lineno}")
        out.append(TransitionMatrix(np.array(values[1:], dtype=np.int64).reshape(shape), values[0]))
    return out


def emit_correlation_table(intervals, table, path: str | Path) -> Path:
    """Square table of pairwise transition correlations."""
    header = ["interval"] + [str(n) for n in intervals]
    rows = [[n, *(_num(v) for v in row)] for n, row in zip(intervals, table)]
    return atomic_write(path, _csv_text(header, rows))


def emit_scores(intervals, scores, selected, path: str | Path) -> Path:
    chosen = set(selected)
    rows = [(n, _num(s), int(n in chosen)) for n, s in zip(intervals, scores)]
    return atomic_write(path, _csv_text(["interval", "score", "selected"], rows))
