"""Distribution transfer along flux-conserving string interaction fields.

Two point clouds sit on parallel plates in extended space; each matched pair
of samples is joined by a localized flux tube with a closed-form field, the
batch field is their Monte-Carlo mean, and transfer integrates that field
from one plate to the other with the plate axis as the clock. A trainable
regressor can stand in for the exact field, and a verification suite
certifies the construction numerically.
"""

from .core import (
    ExtendedPoint,
    FieldVector,
    PairBatch,
    Plate,
    PlateGeometry,
    PointCloud,
    StringParams,
    validate_geometry,
)
from .datasets import (
    make_gaussian,
    make_swiss_roll,
    make_two_gaussians,
    read_cloud,
    write_cloud,
)
from .electrostatic import (
    ChargeSystem,
    capacitor_field,
    coulomb_kernel,
    mu_probability,
    nu_probability,
    stochastic_transfer,
    stochastic_transfer_many,
)
from .pairfield import (
    PairFieldDecomposition,
    decompose_pair,
    field_angle,
    field_magnitude,
    pair_field,
    string_width,
    width_log_slope,
)
from .plans import PlanKind, pair_clouds, sample_pairs
from .sampling import ModelField, OracleField, TraceResult, euler_step, transfer, write_traces
from .superpose import normalize_field, normalize_rows, superpose_field, superpose_grid
from .training import (
    FieldModel,
    TrainConfig,
    load_model,
    loss,
    sample_training_point,
    save_model,
    train,
)
from .verify import (
    CheckResult,
    FluxReport,
    TwoSampleReport,
    check_caging,
    check_straightness,
    efm_coverage_experiment,
    energy_distance,
    flux_profile,
    flux_through_plane,
    same_law_threshold,
    sliced_wasserstein2,
    two_sample_distance,
)

__version__ = "0.1.0"
