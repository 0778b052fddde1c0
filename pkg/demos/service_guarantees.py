"""Service a fading channel can promise, with and without independence.

Prints effective capacity for a few QoS exponents, and the epsilon-level
service curves that hold for any dependence between slots.
"""
import numpy as np

from capbound import Marginal
from capbound.transforms import effective_capacity, rayleigh_epsilon_curves

ray = Marginal.rayleigh(1.0)
print("theta   dep-lower   i.i.d.   dep-upper (tau=256, gap)")
for theta in (0.1, 0.5, 1.0, 2.0):
    lo, ii, up = (effective_capacity(ray, theta, mode) for mode in ("dep-lower", "iid", "dep-upper"))
    print(f"{theta:5.1f} {lo.rate:10.4f} {ii.rate:9.4f} {up.rate:10.4f} ({up.gap:.1e})")

lo, up = rayleigh_epsilon_curves(1.0, 0.1)
taus = np.array([1, 2, 5, 10, 20, 50])
print("\nP(S(tau) < beta) <= 0.1 holds with beta at most:")
for tau, b_lo, b_up in zip(taus, lo.table(taus), up.table(taus)):
    print(f"tau={tau:3d}  guaranteed {b_lo:8.4f}  best case {b_up:8.4f}")
