"""Time-domain linear model-based passive acoustic mapping."""

from .das import td_das
from .errors import (
    ConfigError,
    InvalidInputError,
    SizeBoundExceededError,
    SolverDivergenceError,
    TdpamError,
    UndefinedMetricError,
)
from .geometry import AcquisitionGeometry, DelayTable, build_delay_table, compute_delay, linear_array
from .metrics import (
    FwhmResult,
    PowerMap,
    ZoneMasks,
    cnr,
    detect_peaks,
    dice,
    fwhm,
    nmse,
    pcid,
    position_error,
)
from .operators import (
    DelayOperator,
    RfFrame,
    SourceCube,
    apply_adjoint,
    apply_forward,
    estimate_operator_norm,
    materialize_dense,
)
from .simulate import Scene, SourceEvent, add_noise, default_waveform, make_cloud_scene, make_point_scene, synthesize_rf
from .solvers import (
    Denoiser,
    SolveReport,
    SolverConfig,
    admm_spred_solve,
    admm_sptv_solve,
    apply_diff,
    apply_diff_adjoint,
    default_denoiser,
    fista_solve,
    gaussian_denoiser,
    identity_denoiser,
    power_map,
    soft_threshold,
)

__version__ = "0.1.0"
