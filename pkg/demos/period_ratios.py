"""Ratios of periods of the P_n orbits against their limit, and the
continued fraction of the limit."""

from fallingballs import c0_convergence, continued_fraction, ratio_limit
from fallingballs.analysis import summarize

for m in (0.68, 0.7, 0.75):
    recs = c0_convergence(m, 8)
    s = summarize(recs)
    print(f"m = {m}: limit {ratio_limit(m):.10f}")
    for r in recs:
        print(f"   n={r.n}  ratio_n={r.ratio_n:.10f}  error={r.error:.3e}")
    print(f"   decreasing from n=3: {s.decreasing_from_3}, log-log slope {s.slope:.3f}")

cf = continued_fraction(ratio_limit(0.7), 15)
print("continued fraction at m = 0.7:", cf.quotients)
print("first convergents:", cf.convergents()[:6])
