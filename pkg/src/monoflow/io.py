"""CSV and JSON serialization.

Every CSV starts with the line ``# schema=v1`` followed by a header row.
Floats are written with ``%.17g`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .evolution import TimeGrid, Trajectory
from .homogenized import PlasticityData

__all__ = [
    "SCHEMA_LINE",
    "write_csv",
    "read_csv",
    "write_trajectory",
    "read_trajectory",
    "write_report",
    "read_report",
    "write_schedule",
    "read_schedule",
    "write_instance",
    "read_instance",
]

SCHEMA_LINE = "# schema=v1"
INSTANCE_SCHEMA = "monoflow-instance/v1"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path):
    """Return ``(header, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise ValueError(f"{path}: expected '{SCHEMA_LINE}' as first line, got {first!r}")
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_trajectory(path, traj):
    header = ["t"] + [f"comp_{i}" for i in range(traj.space_dim)]
    rows = (np.concatenate(([t], v)) for t, v in zip(traj.times, traj.values))
    write_csv(path, header, rows)


def read_trajectory(path):
    header, rows = read_csv(path)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: not a trajectory file")
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    t = arr[:, 0]
    N = len(t) - 1
    if N < 1:
        raise ValueError(f"{path}: a trajectory needs at least two nodes")
    grid = TimeGrid(float(t[-1]), N)
    if not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * max(1.0, t[-1])):
        raise ValueError(f"{path}: time column is not a uniform grid starting at 0")
    return Trajectory(grid, arr[:, 1:])


def write_report(path, report):
    write_csv(path, ["iter", "F", "grad_norm", "step"], report.rows())


def read_report(path):
    """Rows of ``(iter, F, grad_norm, step)`` as numbers."""
    _, rows = read_csv(path)
    return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows]


def write_schedule(path, schedule):
    payload = {
        "schema": "monoflow-schedule/v1",
        "T": schedule.T,
        "q_norm": schedule.q_norm,
        "stages": [{"lambda": lam, "epsilon": eps, "theta": th}
                   for lam, eps, th in zip(schedule.lams, schedule.epss, schedule.thetas)],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_schedule(path):
    from .control import RegSchedule

    payload = json.loads(Path(path).read_text())
    st = payload["stages"]
    return RegSchedule([s["lambda"] for s in st], [s["epsilon"] for s in st],
                       [s["theta"] for s in st], payload["T"], payload["q_norm"])


def instance_to_dict(data):
    return {
        "schema": INSTANCE_SCHEMA,
        "d": data.d,
        "n_pts": data.n_pts,
        "n_macro": data.n_macro,
        "c_floor": data.c_floor,
        "b_floor": data.b_floor,
        "seed": data.seed,
        "E": data.E.matrix.tolist(),
        "C": data.C.matrix.tolist(),
        "B": data.B.matrix.tolist(),
        "Bh": data.Bh.matrix.tolist(),
        "P": data.P.matrix.tolist(),
        "avg": data.avg.matrix.tolist(),
    }


def instance_from_dict(payload):
    if payload.get("schema") != INSTANCE_SCHEMA:
        raise ValueError(f"unsupported instance schema {payload.get('schema')!r}")
    mats = {k: np.array(payload[k], dtype=float) for k in ("E", "C", "B", "Bh", "P", "avg")}
    return PlasticityData(n_macro=int(payload["n_macro"]), c_floor=float(payload["c_floor"]),
                          b_floor=float(payload["b_floor"]), d=int(payload["d"]),
                          n_pts=int(payload["n_pts"]), seed=payload.get("seed"), **mats)


def write_instance(path, data):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(instance_to_dict(data)) + "\n")


def read_instance(path):
    return instance_from_dict(json.loads(Path(path).read_text()))
