"""Compare observed dwell times with the uniform bound DT_m and the per-node bounds.

With q = 0 the half nodes can be left after roughly (1 - delta) DT_m, so the
uniform bound is optimistic there while the per-node bounds still hold.

    python3 scripts/dwell_audit.py
"""
from qstab.plants import builtin_demo_plant
from qstab.simulator import boundary_points, run_quantized
from qstab.synthesis import GridPlan, node_dwell_bounds, synthesize


def audit(name, plant, mu, horizon):
    syn = synthesize(plant, 1 / 3, GridPlan())
    nb = node_dwell_bounds(syn.bounds.q_bar, syn.bounds.b_bar, syn.quantizer())
    dwell = min(run_quantized(plant, syn, x0, z0, [mu], horizon).min_dwell
                for x0, z0 in boundary_points(plant, 5))
    print(f"{name:8s} q_bar={syn.bounds.q_bar:.3g}  DT_m={syn.dt_min:.4e}  "
          f"node min={nb['min']:.4e}  observed={dwell:.4e}  "
          f"DT_m holds: {dwell >= syn.dt_min}  node bound holds: {dwell >= nb['min']}")


def main():
    audit("q = mu z", builtin_demo_plant(), 1.0, 2.0)
    audit("q = 0", builtin_demo_plant(q_zero=True), 1.0, 2.0)


if __name__ == "__main__":
    main()
