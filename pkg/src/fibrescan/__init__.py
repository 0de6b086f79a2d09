"""Fibre-system simulation and entropy-based inhomogeneity detection."""

from .detection import (
    DetectionResult,
    InhomogeneityScanner,
    ScanConfig,
    ScanField,
    ScanStats,
    detect,
    detection_quality,
    dvol_bound,
    dvol_estimate,
    excursion_set,
    optimal_scan_width,
    robust_stats,
    scan_entropy_field,
)
from .directional import (
    DirectionalModel,
    FisherDirection,
    RandomStream,
    SchladitzDirection,
    UniformDirection,
    WatsonDirection,
    model_from_spec,
)
from .estimation import (
    KERNELS,
    CltNormalization,
    EstimatorConfig,
    Kernel,
    SphericalKernelDensity,
    clt_normalize,
    clt_study,
    default_bandwidth,
    density_estimate,
    density_sup_error,
    entropy_modified,
    entropy_plain,
    kernel_eval,
    standardized_statistic,
)
from .geometry import (
    Cube,
    Lattice,
    SphereGrid,
    dilate,
    erode,
    geodesic_distance,
    lattice_points,
    sphere_integrate,
    volume_density,
)
from .process import (
    FibreSystem,
    InhomogeneitySpec,
    fibre_segments,
    read_point_cloud,
    restrict,
    simulate_homogeneous,
    simulate_with_inhomogeneity,
    write_point_cloud,
)

__version__ = "0.1.0"
