"""Numerical signs of hyperbolicity: cone contraction, a positive Lyapunov
exponent and the Holder behaviour of the unstable direction."""

from fallingballs import angle_contraction_check, holder_direction_check, lyapunov_exponent

m = 0.7
a = angle_contraction_check(m, samples=20_000, seed=1)
print(f"cone: max angle ratio {a.max_angle_ratio:.4f}, expansion estimate {a.lambda_est:.4f}")

ly = lyapunov_exponent(m, 200_000, seed=1)
print(f"Lyapunov exponent {ly.exponent:.5f}, spectrum {ly.spectrum}")

h = holder_direction_check(m, depth_max=10, pairs=6)
print(f"Holder exponents: unstable {h.gamma_u:.3f} (R^2 {h.r2_u:.3f}), stable {h.gamma_s:.3f}")
