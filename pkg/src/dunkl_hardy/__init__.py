"""Numerical Hardy-space analysis for the Dunkl harmonic oscillator on Z2^N."""
__version__ = "0.1.0"

from .root_system import (RootSystem, ball_measure, ball_measure_many, build_root_system,
                          orbit_distance, reflect, rho, weight)
from .dunkl_core import DunklKernelEvaluator, apply_dunkl_op, dunkl_kernel, gaussian_const, log_dunkl_kernel
from .grid import GridFunction, WeightedGrid, from_csv, integrate, lp_norm, make_grid, sample, to_csv
from .kernels import (BoundCertificate, SamplePlan, comparison_kernel, heat_kernel, hermite_kernel,
                      kernel_space_derivative, t1_of_t, verify_bound, verify_catalog, verify_t_lemma)
from .semigroup import MaximalKind, TimeGrid, apply_semigroup, char_operator, maximal_function
from .riesz import RieszVariant, TimeQuadrature, dk_const, riesz, riesz_difference, riesz_tail_integral
from .atoms import (Atom, AtomicDecomposition, PartitionOfUnity, hardy_norm, hermite_atomic_decompose,
                    local_atomic_decompose, partition_of_unity, telescope_split, validate_atom)
from .experiments import ExperimentConfig, emit_norm_table, load_config, run_experiment
