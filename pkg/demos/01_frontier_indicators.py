"""Frontier bookkeeping on a hand-made set of (risk %, return %) points.

Walks through dominance, non-dominated ranks, crowding, and the three
frontier indicators against a reference front.
"""

import numpy as np

from pardensur.metrics import (
    crowding_distance,
    gd_plus,
    hypervolume,
    igd_plus,
    nondominated_sort,
    pareto_front,
)

points = np.array([
    [8.0, 4.0], [10.0, 7.0], [14.0, 9.5], [20.0, 11.0],  # efficient
    [12.0, 6.0], [18.0, 8.0],                             # dominated once
    [25.0, 5.0],                                          # dominated twice
])
reference = np.array([[7.0, 4.5], [9.5, 7.5], [13.0, 10.0], [19.0, 12.0]])

ranks = nondominated_sort(points)
print("point        rank  crowding")
front0 = np.flatnonzero(ranks == 0)
crowd = dict(zip(front0, crowding_distance(points[front0])))
for i, (p, r) in enumerate(zip(points.tolist(), ranks)):
    c = crowd.get(i)
    print(f"{str(tuple(p)):12s} {r:4d}  {'' if c is None else f'{c:.3f}'}")

front = pareto_front(points)
print(f"\nfrontier has {len(front)} points")
print(f"HV       {hypervolume(front):9.3f}   reference {hypervolume(reference):9.3f}")
print(f"GD+      {gd_plus(front, reference):9.4f}   (how far the frontier sits behind the reference)")
print(f"IGD+     {igd_plus(front, reference):9.4f}   (how much of the reference it fails to cover)")
