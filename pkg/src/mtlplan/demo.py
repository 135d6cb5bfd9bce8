"""The two-quadrotor search-and-rescue scenario shipped with the toolkit.

A 10 x 10 x 3 m workspace is split by a thin wall ``O`` at x = 5 with a single
window.  ``E`` is the passage through that window (plus a short approach on
each side) and only one vehicle may occupy it at a time.  ``q1`` takes off at
``A``, goes through the window via ``C``, picks up an object at ``F`` and lands
at ``H1``; ``q2`` takes off at ``B``, waits at ``D`` for ``q1`` to clear the
window, then picks up at ``G`` and lands at ``H2``.

Region coordinates are illustrative; they are sized so each sub-task fits its
5- or 10-step budget at 5 Hz under the default mode limits.
"""

from __future__ import annotations

import json

WALL_X = (4.95, 5.05)
WINDOW_Y = (4.5, 5.5)
WINDOW_Z = (1.0, 2.0)
ALT = (1.5, 2.0)          # altitude band reached by take-off
GRASP_Z = 1.0             # grasp regions reach up to this height
APPROACH_Z = [1.2, 1.6]   # altitude band required before a grasp starts


def _box(lo, hi):
    return {"min": [float(v) for v in lo], "max": [float(v) for v in hi]}


def _column(x, y, z=(0.0, 3.0)):
    return _box((x[0], y[0], z[0]), (x[1], y[1], z[1]))


def demo_regions() -> list:
    x0, x1 = WALL_X
    y0, y1 = WINDOW_Y
    z0, z1 = WINDOW_Z
    wall = [
        _box((x0, 0, 0), (x1, y0, 3)),
        _box((x0, y1, 0), (x1, 10, 3)),
        _box((x0, y0, 0), (x1, y1, z0)),
        _box((x0, y0, z1), (x1, y1, 3)),
    ]
    free = [
        _box((0, 0, 0), (x0, 10, 3)),
        _box((x1, 0, 0), (10, 10, 3)),
        _box((x0, y0, z0), (x1, y1, z1)),
    ]
    q1_y = (4.5, 4.9)
    q2_y = (5.55, 6.1)
    return [
        {"label": "O", "parts": wall, "complement": free},
        {"label": "E", "parts": [_box((4.85, y0, z0), (5.15, y1, z1))]},
        # q1
        {"label": "A", "parts": [_column((4.0, 4.45), q1_y)]},
        {"label": "A'", "parts": [_column((4.0, 4.45), q1_y, ALT)]},
        {"label": "C", "parts": [_column((4.6, 4.85), q1_y, WINDOW_Z)]},
        {"label": "F", "parts": [_column((5.15, 5.5), (4.2, 4.9))]},
        {"label": "F'", "parts": [_column((5.15, 5.5), (4.2, 4.9), (0.0, GRASP_Z))]},
        {"label": "H1", "parts": [_column((5.5, 6.2), (4.2, 4.9))]},
        # q2
        {"label": "B", "parts": [_column((4.0, 4.45), q2_y)]},
        {"label": "B'", "parts": [_column((4.0, 4.45), q2_y, ALT)]},
        {"label": "D", "parts": [_column((4.6, 4.85), q2_y, WINDOW_Z)]},
        {"label": "G", "parts": [_column((5.15, 5.5), (5.3, 6.1))]},
        {"label": "G'", "parts": [_column((5.15, 5.5), (5.3, 6.1), (0.0, GRASP_Z))]},
        {"label": "H2", "parts": [_column((5.5, 6.2), (5.3, 6.1))]},
    ]


def _task(name, formula, mode, horizon, **extra):
    d = {"name": name, "formula": formula, "mode": mode, "horizon": horizon}
    d.update(extra)
    return d


def demo_mission() -> dict:
    q1 = [
        _task("q1(AA')", "G A & F[0,5] A'", "TakeOff", 5),
        _task("q1(AC)", "F[0,5] C & G !O", "Steer", 5),
        _task("q1(CF)", "F[0,10] F & G !O", "Steer", 10),
        _task("q1(FF')", "G F & F[0,10] F'", "Grasp", 10, grasp="F'",
              entry={"bounds": {"z": APPROACH_Z}}),
        _task("q1(FH1)", "F[0,10] H1 & G !O", "Steer", 10),
        _task("q1(H1H1')", "G H1", "Land", 10),
    ]
    q2 = [
        _task("q2(BB')", "G B & F[0,5] B'", "TakeOff", 5),
        # D must be reached within 5 steps; the extra 5 let q2 settle for the hold
        _task("q2(BD)", "F[0,5] D & G !O", "Steer", 10),
        {"name": "q2(D)", "formula": "G D", "mode": "Hover", "wait": True},
        _task("q2(DG)", "F[0,10] G & G !O", "Steer", 10),
        _task("q2(GG')", "G G & F[0,10] G'", "Grasp", 10, grasp="G'",
              entry={"bounds": {"z": APPROACH_Z}}),
        _task("q2(GH2)", "F[0,10] H2 & G !O", "Steer", 10),
        _task("q2(H2H2')", "G H2", "Land", 10),
    ]
    return {
        "name": "search-and-rescue",
        "dt": 0.2,
        "encoding": {"N": 30, "eps": 1e-4, "M": None},
        "solver": {"node_limit": 20000, "time_limit": None},
        "params": {"m": 1.0, "g": 9.81, "J": [[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.02]]},
        "workspace": {"bounds": _box((0, 0, 0), (10, 10, 3)), "regions": demo_regions()},
        "agents": [
            {"id": "q1", "priority": 0, "initial": {"pos": [4.4, 4.7, 0.0]}, "subtasks": q1},
            {"id": "q2", "priority": 1, "initial": {"pos": [4.4, 5.85, 0.0]}, "subtasks": q2},
        ],
        "coordination": {"window": "E", "wait_region": "D", "separation": 0.5},
    }


def write_demo(path: str) -> str:
    with open(path, "w") as fh:
        json.dump(demo_mission(), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path
