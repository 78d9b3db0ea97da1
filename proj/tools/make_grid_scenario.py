#!/usr/bin/env python3
# Copyright 2026, The twolane Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes a rows x cols grid scenario.

Each intersection has four approach roads of two lanes. Lanes 1,2 come from
the north, 3,4 from the east, 5,6 from the south and 7,8 from the west; the
odd lane of each road turns left, the even lane carries straight and right
traffic.
"""

import argparse
import json
import random

# Approach index -> direction of travel of its vehicles.
HEADING = {0: "S", 1: "W", 2: "N", 3: "E"}
# Direction of travel -> approach index at the next intersection.
ARRIVES = {"S": 0, "W": 1, "N": 2, "E": 3}
STEP = {"S": (1, 0), "N": (-1, 0), "E": (0, 1), "W": (0, -1)}
LEFT = {"S": "E", "W": "S", "N": "W", "E": "N"}
RIGHT = {"S": "W", "W": "N", "N": "E", "E": "S"}


def build(rows, cols, seed, peak, straight_share, left_share_range, axis_ratio, controllers, steps):
    rng = random.Random(seed)
    n = rows * cols

    def node(r, c):
        return r * cols + c + 1 if 0 <= r < rows and 0 <= c < cols else None

    def target(r, c, heading):
        dr, dc = STEP[heading]
        j = node(r + dr, c + dc)
        if j is None:
            return None
        a = ARRIVES[heading]
        return [[j, 2 * a + 1], [j, 2 * a + 2]]

    lanes, edges, boundary = [], set(), []
    for r in range(rows):
        for c in range(cols):
            i = node(r, c)
            for a in range(4):
                heading = HEADING[a]
                dr, dc = STEP[heading]
                upstream = node(r - dr, c - dc)
                length = rng.choice([400, 450, 500, 550, 600])
                if upstream is None:
                    boundary += [[i, 2 * a + 1], [i, 2 * a + 2]]
                left = target(r, c, LEFT[heading])
                straight = target(r, c, heading)
                right = target(r, c, RIGHT[heading])

                entry = {"id": [i, 2 * a + 1], "length": length}
                if left:
                    entry["downstream"] = left
                    entry["split"] = [0.5, 0.5]
                else:
                    entry["sink"] = True
                lanes.append(entry)

                entry = {"id": [i, 2 * a + 2], "length": length}
                down, split, sink_share = [], [], 0.0
                for tgt, share in ((straight, straight_share), (right, 1.0 - straight_share)):
                    if tgt:
                        down += tgt
                        split += [share / 2, share / 2]
                    else:
                        sink_share += share
                if down:
                    entry["downstream"] = down
                if sink_share > 0:
                    entry["sink"] = True
                    split.append(sink_share)
                entry["split"] = [round(s, 12) for s in split]
                lanes.append(entry)
                for tgt in (left, straight, right):
                    if tgt:
                        edges.add((i, tgt[0][0]))

    demand = []
    lo, hi = left_share_range
    for b in boundary:
        i, m = b
        if m % 2 == 1:
            base = peak * rng.uniform(lo, hi)
        else:
            base = peak * rng.uniform(0.75, 1.0)
        if HEADING[(m - 1) // 2] in "EW":
            base *= axis_ratio
        base = min(800.0, max(300.0, base))
        demand.append({
            "lane": b,
            "segments": [
                {"from_step": 0, "veh_per_hour": round(0.75 * base)},
                {"from_step": steps // 6, "veh_per_hour": round(base)},
                {"from_step": 2 * steps // 3, "veh_per_hour": round(0.75 * base)},
            ],
        })

    exit_roads = 0
    for r in range(rows):
        for c in range(cols):
            for heading in "NSEW":
                dr, dc = STEP[heading]
                if node(r + dr, c + dc) is None:
                    exit_roads += 1

    return {
        "name": f"grid_{rows}x{cols}",
        "description": f"{rows}x{cols} grid, rush-hour boundary demand (generated by make_grid_scenario.py)",
        "network": {
            "intersections": n,
            "edges": sorted([list(e) for e in edges]),
            "lanes": lanes,
            "boundary_lanes": sorted(boundary),
            "exit_roads": exit_roads,
        },
        "demand": {"noise": 0.05, "lanes": demand},
        "simulation": {
            "steps": steps,
            "seed": seed,
            "cycle": 120,
            "yellow": 8,
            "u_min": 10,
            "u_max": 70,
            "split_profile": {"kind": "sinusoidal", "amplitude": 0.2, "period": 24},
        },
        "controllers": controllers,
    }


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--peak", type=float, default=650.0, help="peak through-lane demand, veh/h")
    p.add_argument("--straight-share", type=float, default=0.7)
    p.add_argument("--left-share", type=float, nargs=2, default=[0.3, 0.5])
    p.add_argument("--axis-ratio", type=float, default=0.5, help="east-west demand relative to north-south")
    p.add_argument("--params", type=str, default="{}", help="JSON params for the MPC controllers")
    p.add_argument("-o", "--output", default="-")
    args = p.parse_args()

    params = json.loads(args.params)
    controllers = [{"type": "fixed_time"}, {"type": "max_pressure"}]
    for t in ("mpc_road", "dmpc_admm", "centralized_ref"):
        controllers.append({"type": t, "params": params} if params else {"type": t})
    doc = build(args.rows, args.cols, args.seed, args.peak, args.straight_share, args.left_share, args.axis_ratio, controllers,
                args.steps)
    text = json.dumps(doc, indent=1) + "\n"
    if args.output == "-":
        print(text, end="")
    else:
        with open(args.output, "w") as f:
            f.write(text)


if __name__ == "__main__":
    main()
