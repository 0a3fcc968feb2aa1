#!/usr/bin/env python3
"""Generate assets/feeders/feeder300.toml.

Emits a reduced 300-node 12.47 kV feeder: a 50-segment three-phase trunk
where every trunk node feeds a short lateral (one single-phase tap plus
four three-phase spans; the last lateral is one node short so the total
lands exactly on 300 nodes). Load sizes follow a small deterministic
pattern so the feeder is not perfectly uniform. Total load is about 8 MW.

The output is checked in; rerunning the script reproduces it byte for
byte.
"""

import io
import os

N_TRUNK = 50
LATERAL = 5  # l1 single-phase tap, l2..l5 three-phase
TRUNK_KM = 0.15
LAT_KM = 0.12
PHASES = "abc"


def main() -> None:
    out = io.StringIO()
    w = out.write
    w("# Reduced 300-node 12.47 kV feeder generated by\n")
    w("# scripts/make_feeder300.py; edit the script, not this file.\n")
    w("# 50-segment three-phase trunk, one lateral per trunk node\n")
    w("# (a single-phase tap and four three-phase spans), about 8 MW.\n")
    w('name = "feeder300"\n')
    w("v_base_ln_v = 7200.0\n")
    w("s_base_mva = 10.0\n")
    w('substation = "sub"\n')

    nodes = [("sub", "abc")]
    branches = []  # (from, to, length_km, config)
    loads = []  # (node, phases, [kw], [kvar])

    prev = "sub"
    for t in range(1, N_TRUNK + 1):
        trunk = f"t{t:02d}"
        nodes.append((trunk, "abc"))
        branches.append((prev, trunk, TRUNK_KM, "trunk"))
        prev = trunk

        last = LATERAL - 1 if t == N_TRUNK else LATERAL
        lat_prev = trunk
        for l in range(1, last + 1):
            node = f"{trunk}_l{l}"
            if l == 1:
                phase = PHASES[(t - 1) % 3]
                nodes.append((node, phase))
                branches.append((lat_prev, node, LAT_KM, "lat1"))
                kw = 26.0 + 2.0 * ((t - 1) % 4)
                loads.append((node, phase, [kw], [round(kw * 0.32, 1)]))
                # Single-phase taps hang off the trunk node directly.
                lat_prev = trunk
            else:
                nodes.append((node, "abc"))
                branches.append((lat_prev, node, LAT_KM, "lat3"))
                kw = 9.0 + float((t + l) % 5)
                kvar = round(kw * 0.32, 1)
                loads.append((node, "abc", [kw] * 3, [kvar] * 3))
                lat_prev = node

    assert len(nodes) == 300, len(nodes)
    assert len(branches) == len(nodes) - 1

    for name, phases in nodes:
        w("\n[[node]]\n")
        w(f'name = "{name}"\n')
        w(f'phases = "{phases}"\n')

    w("\n[[line_config]]\n")
    w('name = "trunk"\n')
    w("r_self_ohm_per_km = 0.10\n")
    w("x_self_ohm_per_km = 0.09\n")
    w("r_mutual_ohm_per_km = 0.03\n")
    w("x_mutual_ohm_per_km = 0.045\n")
    w("\n[[line_config]]\n")
    w('name = "lat3"\n')
    w("r_self_ohm_per_km = 0.45\n")
    w("x_self_ohm_per_km = 0.30\n")
    w("r_mutual_ohm_per_km = 0.08\n")
    w("x_mutual_ohm_per_km = 0.10\n")
    w("\n[[line_config]]\n")
    w('name = "lat1"\n')
    w("r_self_ohm_per_km = 0.70\n")
    w("x_self_ohm_per_km = 0.38\n")

    for src, dst, km, config in branches:
        w("\n[[branch]]\n")
        w(f'from = "{src}"\n')
        w(f'to = "{dst}"\n')
        w(f"length_km = {km}\n")
        w(f'config = "{config}"\n')

    total_kw = 0.0
    for node, phases, kws, kvars in loads:
        w("\n[[load]]\n")
        w(f'node = "{node}"\n')
        w(f'phases = "{phases}"\n')
        w(f"kw = [{', '.join(str(v) for v in kws)}]\n")
        w(f"kvar = [{', '.join(str(v) for v in kvars)}]\n")
        total_kw += sum(kws)

    path = os.path.join(
        os.path.dirname(__file__), "..", "assets", "feeders", "feeder300.toml"
    )
    with open(path, "w") as f:
        f.write(out.getvalue())
    print(f"{len(nodes)} nodes, {len(branches)} branches, {total_kw / 1e3:.2f} MW")


if __name__ == "__main__":
    main()
