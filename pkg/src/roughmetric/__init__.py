"""Numerical geometry of rough metrics on flat lattices.

Distances induced by low-regularity Riemannian metrics, Sobolev norms and
trace-style averaging, certified covers of superlevel sets, conformal scalar
curvature diagnostics, and reproducible desk-scale experiments tying them
together.
"""

from .conformal import (
    ConformalFactor,
    CurvatureReport,
    DistanceRatioReport,
    HarnackReport,
    MassReport,
    RescalingReport,
    atom_masses,
    bubble_factor,
    conformal_metric,
    curvature_energy_invariance_check,
    distance_ratio_probe,
    harnack_ratio,
    log_gradient_energy,
    mean_log_normalize,
    mollified_pole_factor,
    scalar_curvature,
    volume_normalize,
)
from .distance import (
    BadSetReport,
    ConvergenceReport,
    DistanceGraph,
    DistanceMatrix,
    EdgeDroppedError,
    EuclideanLimitReport,
    GradientBoundReport,
    StencilSpec,
    UnreachableError,
    bad_set_diagnostic,
    build_distance_graph,
    distance_field,
    distance_matrix,
    edge_weight,
    euclidean_limit_check,
    gradient_bound_check,
    halton_landmarks,
    limit_inequality_report,
    shortest_distance,
    uniform_metric_distance,
)
from .families import (
    enveloped_pole_scalar,
    identity_metric,
    oscillation_metric,
    oscillation_scalar,
    random_spd_metric,
)
from .fieldio import FormatError, field_io_read, field_io_write
from .grid import (
    Ball,
    Domain,
    GradientField,
    GridError,
    MetricField,
    QuadratureResult,
    SamplingError,
    ScalarField,
    ball_node_indices,
    eigen_range,
    gradient,
    integrate,
    make_domain,
    region_quadrature,
    sample_metric,
    sample_scalar,
)
from .plotting import PlotError, PlotSeries, emit_plot
from .scenarios import (
    ConfigError,
    RunSummary,
    ScenarioConfig,
    config_from_json,
    default_config,
    describe,
    list_scenarios,
    run_scenario,
)
from .sobolev import (
    AeConvergenceReport,
    AverageProbe,
    ConcentrationScan,
    CoverReport,
    SobolevReport,
    VitaliSelection,
    ae_convergence_check,
    ball_average_fields,
    centered_average_limit,
    concentration_scan,
    curve_trace,
    default_radii,
    interpolate_at,
    metric_w1p_distance,
    r_average,
    sobolev_norms,
    superlevel_cover,
    vitali_cover,
)

__version__ = "0.1.0"
