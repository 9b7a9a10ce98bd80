"""Convergence orders of the 1-D Robin problem and the 2-D cosine problem.

Reproduces the shape of the error-vs-h study: L2 orders approach degree + 1,
H1 orders approach the degree, and at equal grids higher degrees win.

Run: python demos/03_convergence_study.py  (about a minute)
"""

from bspde import Cosine2DFamily, Diffusion1DFamily, run_convergence

print("1-D diffusion, Robin BC, Gaussian source on [-25, 25]")
study = run_convergence(Diffusion1DFamily(), degrees=[1, 2, 3], levels=[0, 1, 2, 3])
print(f"{'h':>8} " + " ".join(f"L2(n={n})" for n in (1, 2, 3)))
for lv in range(4):
    row = [study.reports[n][lv].l2_error for n in (1, 2, 3)]
    print(f"{study.reports[1][lv].step:8.4f} " + " ".join(f"{e:8.2e}" for e in row))
print("fitted L2 orders:", {n: round(o, 2) for n, o in study.l2_orders.items()})
print("fitted H1 orders:", {n: round(o, 2) for n, o in study.h1_orders.items()})

print("\n2-D manufactured cosine on the unit box")
study2 = run_convergence(Cosine2DFamily(), degrees=[1, 2], levels=[0, 1, 2])
print("fitted L2 orders:", {n: round(o, 2) for n, o in study2.l2_orders.items()})
print("fitted H1 orders:", {n: round(o, 2) for n, o in study2.h1_orders.items()})
