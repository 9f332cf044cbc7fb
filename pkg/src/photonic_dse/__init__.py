"""Design-space exploration for microring-based photonic CNN accelerators."""

from .device_models import (
    ALL_ORGS,
    CrosstalkProfile,
    DpuOrganization,
    LossProfile,
    SpectralParams,
    crosstalk_profile,
    fsr_limited_channels,
    loss_profile,
    network_penalty_db,
    out_of_resonance_device_count,
    propagation_loss_db,
    through_loss_db,
)
from .link_budget import (
    InfeasiblePrecisionError,
    PhotonicLinkParams,
    ScalabilityQuery,
    ScalabilityResult,
    enob,
    link_output_power,
    load_params,
    max_n,
    solve_p_pd_opt,
    sweep_scalability,
)
from .mapper import AcceleratorConfig, LayerPlan, PeripheralParams, plan_layer, plan_model
from .simulator import (
    SimReport,
    area_model,
    area_proportionate_counts,
    compare_accelerators,
    reference_config,
    run_inference,
)
from .workload import (
    CnnModel,
    GemmShape,
    LayerDescriptor,
    LayerKind,
    SliceFactor,
    bit_slices,
    bundled_model,
    conv_to_gemm,
    fc_to_gemm,
    load_model,
)

__version__ = "0.1.0"
