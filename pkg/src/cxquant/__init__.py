"""Convex-order preserving quantisation of measures and discrete martingale optimal transport."""

from .lp import LpNumericalError, LpProblem, LpSolution, LpStatus, lp_feasible, lp_solve
from .measures import (
    Box,
    DiscreteCoupling,
    DiscreteMeasure,
    KernelCoupling,
    MeasureError,
    Partition,
    PartitionError,
    PowerDistance,
    QuadratureMeasure,
    Remainder,
    VoronoiRegion,
    barycentre,
    discretise_kernel_coupling,
    interval,
    marginals,
    singleton,
    whole_space,
)
from .mot import (
    DiameterBound,
    MotAssembly,
    MotSolution,
    StabilityTable,
    assemble_mot_lp,
    check_convex_order,
    diameter_bound,
    represent_as_barycentric,
    solve_discrete_mot,
    solve_discrete_ot,
    stability_experiment,
    wasserstein_p,
)
from .quantise import (
    QuantisationResult,
    barycentric_quantise,
    build_dyadic_boxes,
    build_grid_boxes,
    build_quantile_cells,
    build_voronoi_cells,
    lloyd_sites,
    martingale_quantise_sequence,
    proper_barycentric_quantise,
    u_quantise,
)

__version__ = "0.1.0"
