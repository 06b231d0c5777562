"""Local and Hermite atomic decompositions of a smooth bump."""
import numpy as np

from dunkl_hardy import (build_root_system, hermite_atomic_decompose, local_atomic_decompose, lp_norm,
                         make_grid, sample, validate_atom)

rs = build_root_system("Z2", k=0.5)
grid = make_grid(rs, 10.0, 512)
f = sample(grid, lambda x: np.exp(-4.0 * (x[:, 0] - 1.5) ** 2))
print(f"L1 norm {lp_norm(f, 1.0):.4f}")

for T in (0.5, 1.0, 2.0):
    dec = local_atomic_decompose(rs, f, T)
    valid = all(validate_atom(rs, a).passed for _, a in dec.terms)
    print(f"local T={T}: {len(dec.terms)} atoms, sum |c| = {dec.coefficient_sum:.4f}, "
          f"residual {dec.reconstruction_residual:.1e}, all valid: {valid}")

dec = hermite_atomic_decompose(rs, f)
print(f"Hermite: {len(dec.terms)} atoms, sum |c| = {dec.coefficient_sum:.4f}, "
      f"residual {dec.reconstruction_residual:.1e}")
