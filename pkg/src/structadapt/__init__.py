"""Structural-adaptation estimation of single-index functions in 2-D white noise."""
from .estimator import (BandwidthGrid, SphereGrid, bandwidth_grid, estimate, estimate_many, matrix_pair,
                        matrix_single, sphere_grid, variance_formula)
from .kernels import Kernel1D, ProductKernel2D, make_kernel
from .model import (IndexVector, LinkFunction, ObservationField, TargetFunction, function_library, simulate,
                    simulate_batch)
from .selector import SelectionConfig, SelectionTrace, r_value, select, select_h_only, threshold

__version__ = "0.1.0"
