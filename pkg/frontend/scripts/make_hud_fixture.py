"""Regenerate test/hud_fixture.json from the Python metrics module.

Each case is one state frame (leader wrench + per-follower EE velocity)
plus the alignment value the metrics module computes for that tick, so
the console HUD can be checked against the same numbers.

Run from the repository root:
    python3 frontend/scripts/make_hud_fixture.py
"""
import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))
from cotransport import metrics  # noqa: E402


def alignment_for(wrench, ee_vels):
    k = len(ee_vels)
    batch = metrics.EvalBatch(
        time=np.zeros(1),
        wrench=np.array([[wrench]], dtype=float),
        base_vel=np.zeros((1, 1, k, 2)),
        base_yaw_rate=np.zeros((1, 1, k)),
        ee_vel=np.array([[ee_vels]], dtype=float),
        est=np.zeros((1, 1, k, 3)),
        gt_base=np.zeros((1, 1, k, 3)),
        grip_force=np.zeros((1, 1, k, 4)),
        height=np.zeros((1, 1, k)),
        reward=np.zeros((1, 1)),
        terminated=np.zeros(1, dtype=bool),
        mass=np.full(1, 2.0),
        o_trans=np.zeros((1, 1, k, 36)),
    )
    return metrics.intent_alignment(batch)


def frame(wrench, ee_vels):
    followers = [{
        "base": {"x": 0.0, "y": 0.0, "yaw": 0.0, "vx": 0.0, "vy": 0.0,
                 "yaw_rate": 0.0},
        "arm": {"q": [0.0, 0.5, -1.0], "dq": [0.0, 0.0, 0.0]},
        "ee": {"x": 0.0, "y": 0.0, "z": 0.5,
               "vx": v[0], "vy": v[1], "vz": v[2]},
        "beta_est": [0.0, 0.0, 0.0],
        "grip_stretch": 0.0,
    } for v in ee_vels]
    return {
        "type": "state", "schema_version": 1, "tick": 1, "time": 0.02,
        "leader_wrench": list(wrench),
        "payload": {"x": 0.0, "y": 0.0, "yaw": 0.0, "height": 0.12,
                    "mass": 2.0},
        "followers": followers,
        "reward": {"total": 0.0},
        "terminated": False,
    }


def main():
    rng = np.random.default_rng(7)
    cases = []
    # random single- and multi-follower frames
    for _ in range(40):
        k = int(rng.integers(1, 4))
        wrench = (rng.uniform(-40, 40, 3) * rng.choice([0.0, 1.0], 3)).tolist()
        ee = rng.uniform(-1.0, 1.0, (k, 3)).tolist()
        cases.append((wrench, ee))
    # degenerate edges: zero force, zero velocity, mixed validity
    cases.append(([0.0, 0.0, 5.0], [[0.3, 0.1, 0.0]]))
    cases.append(([10.0, -4.0, 0.0], [[0.0, 0.0, 0.0]]))
    cases.append(([10.0, -4.0, 0.0], [[0.0, 0.0, 0.0], [0.2, -0.1, 0.0]]))
    cases.append(([5e-4, 0.0, 0.0], [[0.3, 0.0, 0.0]]))
    out = []
    for wrench, ee in cases:
        a = alignment_for(wrench, ee)
        out.append({
            "frame": frame(wrench, ee),
            "alignment": None if math.isnan(a) else a,
        })
    path = Path(__file__).resolve().parents[1] / "test" / "hud_fixture.json"
    path.write_text(json.dumps(out, indent=1))
    print(f"wrote {len(out)} cases to {path}")


if __name__ == "__main__":
    main()
