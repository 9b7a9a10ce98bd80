"""B-spline building blocks: evaluation, derivatives, poles, transforms.

Run: python demos/01_bspline_basics.py
"""

import numpy as np

from bspde import (
    BSplineBasis,
    compute_poles,
    direct_transform,
    eval_bspline,
    eval_bspline_derivative,
    indirect_transform,
    sampled_bspline,
)

print("== centered uniform B-splines ==")
for n in range(4):
    xs = np.array([0.0, 0.5, 1.0])
    print(f"beta^{n} at {xs}: {np.round(eval_bspline(n, xs), 6)}")

print("\npartition of unity: sum_k beta^3(x - k) at x = 0.37:")
ks = np.arange(-3, 4)
print(" ", eval_bspline(3, 0.37 - ks).sum())

print("\nderivative identity: d/dx beta^3(0.5) =", eval_bspline_derivative(3, 0.5, 1))
print("(equals beta^2(1) - beta^2(0) =", eval_bspline(2, 1.0) - eval_bspline(2, 0.0), ")")

print("\n== prefilter poles ==")
for n in (2, 3, 4, 5):
    p = compute_poles(n)
    print(f"degree {n}: poles {np.round(p.poles, 8)}, gain {p.gain:.6f}")
print("samples b^3:", sampled_bspline(3), "(the filter the poles invert)")

print("\n== transforms round trip ==")
rng = np.random.default_rng(42)
samples = rng.normal(size=(20, 20))
basis = BSplineBasis(3, (1.0, 1.0))
coeffs = direct_transform(samples, basis)
ii, jj = np.meshgrid(np.arange(20.0), np.arange(20.0), indexing="ij")
pts = np.column_stack([ii.ravel(), jj.ravel()])
back = indirect_transform(coeffs, basis, pts).reshape(20, 20)
print("max round-trip error:", np.abs(back - samples).max())

print("\ncubic splines reproduce linear polynomials exactly:")
x = np.arange(-30.0, 31.0)
c = direct_transform(x, BSplineBasis(3, (1.0,)))
val = indirect_transform(c, BSplineBasis(3, (1.0,)), np.array([32.5]))
print("  f(x)=x evaluated between nodes:", val[0], "(expected 2.5)")
