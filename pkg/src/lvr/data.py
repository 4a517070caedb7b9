"""Demonstration datasets and their CSV + JSON sidecar files."""

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Ordered expert samples ``(x_i, u*_i)`` recorded at a fixed rate."""

    states: np.ndarray
    actions: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)
    modes: np.ndarray = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.actions = np.asarray(self.actions, dtype=float)
        if self.actions.ndim == 1:
            self.actions = self.actions[:, None]
        if len(self.states) != len(self.actions):
            raise ValueError(f"{len(self.states)} states but {len(self.actions)} actions")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions))):
            raise ValueError("dataset contains non-finite values")
        if self.modes is not None:
            self.modes = np.asarray(self.modes, dtype=int)
            if len(self.modes) != len(self.states):
                raise ValueError("mode labels must match the number of samples")

    def __len__(self):
        return len(self.states)

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def action_dim(self):
        return self.actions.shape[1]

    def head(self, n):
        return Dataset(
            self.states[:n], self.actions[:n], self.dt, dict(self.meta),
            None if self.modes is None else self.modes[:n],
        )


def _fmt(v):
    return repr(float(v))


def dataset_csv_text(data, comment=None):
    """CSV text with columns ``t, x0.., u0.. [, mode]``; floats written with repr.

    ``comment`` (optional) is written first as ``# ...`` lines.
    """
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["t"] + [f"x{i}" for i in range(data.state_dim)] + [f"u{i}" for i in range(data.action_dim)]
    if data.modes is not None:
        header.append("mode")
    w.writerow(header)
    for i in range(len(data)):
        row = [_fmt(i * data.dt)] + [_fmt(v) for v in data.states[i]] + [_fmt(v) for v in data.actions[i]]
        if data.modes is not None:
            row.append(str(int(data.modes[i])))
        w.writerow(row)
    return buf.getvalue()


def save_dataset(path, data, comment=None):
    """Write ``path`` (CSV) and ``path.json`` (sidecar with dt and meta)."""
    path = Path(path)
    path.write_text(dataset_csv_text(data, comment))
    sidecar = {
        "dt": data.dt,
        "state_dim": data.state_dim,
        "action_dim": data.action_dim,
        "samples": len(data),
        "meta": data.meta,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1))


def load_dataset(path):
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    with path.open() as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    n, m = sidecar["state_dim"], sidecar["action_dim"]
    arr = np.array([[float(v) for v in r[: 1 + n + m]] for r in body]).reshape(len(body), 1 + n + m)
    modes = None
    if header[-1] == "mode":
        modes = np.array([int(r[-1]) for r in body])
    return Dataset(arr[:, 1 : 1 + n], arr[:, 1 + n :], sidecar["dt"], sidecar.get("meta", {}), modes)
