"""Global, local and Hermite Riesz transforms of an even bump (the output is odd)."""
import numpy as np

from dunkl_hardy import RieszVariant, build_root_system, lp_norm, make_grid, riesz, sample

rs = build_root_system("Z2", k=1.0)
grid = make_grid(rs, 10.0, 256)
f = sample(grid, lambda x: np.exp(-x[:, 0] ** 2))

for variant in (RieszVariant("global"), RieszVariant("local", T=1.0), RieszVariant("hermite")):
    g = riesz(rs, f, variant)
    odd = np.max(np.abs(g.values + g.values[::-1]))
    print(f"{variant.tag:<7} L1 norm {lp_norm(g, 1.0):.4f}, odd-symmetry defect {odd:.1e}")
