"""Replicable distribution testers and a random-walk lower-bound lab."""

from .closeness import (
    ClosenessConfig,
    closeness_sample_size,
    closeness_statistic,
    draw_threshold,
    rep_closeness_test,
    soundness_floor,
)
from .flattening import (
    FlattenAssignment,
    Flattened2D,
    flatten_1d,
    flatten_2d,
    max_subbin_count,
    non_singleton_count,
)
from .hard_instances import (
    ClosenessHardParams,
    UniformityHardParams,
    draw_closeness_hard,
    draw_meta_closeness,
    draw_meta_uniformity,
    draw_uniformity_hard,
)
from .independence import (
    IndependenceConfig,
    closeness_stat_marked,
    estimate_n_a,
    estimate_z_a,
    independence_gap,
    independence_sample_size,
    independence_stats,
    product_of_marginals_sample,
    product_of_marginals_sampler,
    rep_independence_test,
    stage1_scale,
)
from .measures import (
    NonNegativeMeasure,
    diagonal_measure,
    half_flat_measure,
    l1_distance,
    measure_1d,
    measure_2d,
    point_mass,
    product_of_marginals,
    tv_distance,
    uniform_measure,
    uniform_product_measure,
    zipf_measure,
)
from .rng import RngStream
from .sampling import (
    counts_from_indices,
    measure_sampler,
    multinomial_split,
    sample_counts_fixed,
    sample_counts_poissonized,
    unravel_pairs,
)
from .uniformity import (
    UniformityConfig,
    UniformityTester,
    rep_uniformity_test,
    uniformity_sample_size,
    uniformity_statistic,
)
from .verdict import CalibrationError, TesterVerdict
from .walks import (
    ClosenessPairKernel,
    CoordKernel,
    MixingReport,
    TruncationError,
    acceptance_probability,
    closeness_pair_transition,
    concentration_experiment,
    coord_rw_step,
    coord_stationary,
    coord_transition,
    estimate_mixing,
    product_walk_tau,
    sample_rw_step,
    stationary_counts,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
