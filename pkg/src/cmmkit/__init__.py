"""Cooperative map-matching error analysis toolkit."""

__version__ = "0.1.0"

from .geometry import (
    EMPTY,
    UNBOUNDED,
    ConvexRegion,
    EmptyRegionError,
    GeometryError,
    HalfPlane,
    RoadConstraint,
    UnboundedRegionError,
    Vec2,
    cmm_error_geometric,
    e0_squared_formula,
    halfplane_intersection,
    region_area,
    region_centroid,
    tangent_polygon_area,
)
from .error_models import (
    AngleDistribution,
    GapSet,
    InvalidDistributionError,
    NoiseModel,
    angle_gaps,
    gap_pdf_asymptotic,
    gap_pdf_circle_exact,
    gap_pdf_uniform_exact,
    read_angle_histogram,
    sample_angles,
    sample_noncommon,
    write_angle_histogram,
)
from .estimators import (
    DegenerateRegionError,
    EstimateResult,
    FleetScenario,
    LinearizedModel,
    NumericallyDegenerateError,
    WeightedGrid,
    centroid_mc,
    estimate_hard,
    estimate_weighted,
    expected_sq_error_linear,
    linearize,
    orthogonal_error_closed_form,
    scenario_from_angles,
)
from .asymptotics import (
    FourierSpectrum,
    GumbelParams,
    fourier_expected_sq_error,
    gumbel_params_leading,
    orthogonal_expected_sq_error,
    orthogonal_leading_order,
    uniform_expected_sq_error,
)
from .experiments import (
    CampaignResult,
    CampaignSpec,
    calibrate_uniform_constant,
    error_distribution,
    gap_distribution_test,
    run_campaign,
    verify_optimality,
)
from .fleet import (
    AccuracyGrid,
    DensityGrid,
    GridSpec,
    IngestError,
    RoadSegment,
    TimeFilter,
    TripRecord,
    estimate_density,
    evaluate_accuracy,
    export_accuracy,
    grid_city_network,
    ingest_trips,
    synth_fleet,
)
