"""Layer-wise approximate multiplier assignment for quantized CNN accelerators."""

from .accel import AcceleratorSpec, Genome, build_plan, count_design_space, energy, uniform_genome, validate
from .mult import (
    ErrorMetrics,
    MultiplierModel,
    characterize,
    load_library,
    load_lut,
    make_exact,
    make_product_truncated,
    make_truncated,
    store_lut,
)
from .search import Candidate, ParetoArchive, SearchConfig, run_nsga2
from .wtune import WeightMap, apply_weight_map, compute_weight_map, tuned_med

__version__ = "0.1.0"
