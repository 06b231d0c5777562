"""Heat and Hermite kernels on Z2: positivity, symmetry and the k = 0 reduction."""
import numpy as np

from dunkl_hardy import build_root_system, heat_kernel, hermite_kernel
from dunkl_hardy.experiments import kernel_identities

for k in (0.0, 0.5, 2.0):
    rs = build_root_system("Z2", k=k)
    x, y = 1.3, -0.4
    print(f"k={k:<4} h_1(x,y)={heat_kernel(rs, 1.0, x, y).item():.6e}"
          f"  k_1(x,y)={hermite_kernel(rs, 1.0, x, y).item():.6e}")

rs = build_root_system("Z2", k=0.0)
t, x, y = 0.7, 1.1, -0.3
gauss = np.exp(-(x - y) ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t)
print(f"k=0 heat kernel vs Gaussian: {heat_kernel(rs, t, x, y).item():.15e} {gauss:.15e}")

errs = kernel_identities(build_root_system("Z2^N", k=[1.0, 0.5]), seed=0, n=500)
for name, err in sorted(errs.items()):
    print(f"{name:<22} max relative error {err:.2e}")
