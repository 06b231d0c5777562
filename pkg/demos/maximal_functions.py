"""Radial, nontangential and Hermite maximal functions of a mean-zero dipole."""
import numpy as np

from dunkl_hardy import build_root_system, lp_norm, make_grid, maximal_function, sample

rs = build_root_system("Z2", k=1.0)
grid = make_grid(rs, 10.0, 256)
f = sample(grid, lambda x: np.where(np.abs(x[:, 0] - 2.0) < 0.5, np.sign(x[:, 0] - 2.0), 0.0))
f = f * (1.0 / lp_norm(f, 1.0))

for kind in ("radial", "nontangential", "hermite", "hardy_littlewood"):
    m = maximal_function(rs, f, kind)
    print(f"{kind:<17} L1 norm {lp_norm(m, 1.0):.4f}")
