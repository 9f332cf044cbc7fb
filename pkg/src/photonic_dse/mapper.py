"""Output-stationary mapping of GEMMs onto DPUs.

A GEMM of dot-product length ``k`` is cut into ``ceil(k / N)`` chunks, the
last one zero-padded to the DPE width.  Every (output, chunk, bit-slice
pass) triple is one DPE dot product, and the psums belonging to the same
output are merged by the tile reduction network.  Outputs are dealt to
DPEs round-robin, so a layer occupies ``ceil(dot products / DPEs)``
symbol cycles.  When an output has several chunks, up to ``M`` of them
run on the DPEs of one DPU and meet in that DPU's adder tree; further
chunk groups and bit-slice passes of the output accumulate at the tree root.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .device_models import DpuOrganization
from .workload import CnnModel, GemmShape, LayerDescriptor, LayerKind, SliceFactor, bit_slices, layer_to_gemm

REDUCTION_MODES = ("tree", "pipelined", "serial")


@dataclass(frozen=True)
class Component:
    power_mw: float
    latency_ns: float
    area_mm2: float = 0.0

    def __post_init__(self):
        if min(self.power_mw, self.latency_ns, self.area_mm2) < 0:
            raise ValueError(f"component figures must be >= 0: {self}")


def _c(power, latency, area=0.0):
    return field(default_factory=lambda: Component(power, latency, area))


@dataclass
class PeripheralParams:
    """Power, latency and area of the electronic periphery.

    Bus and router latencies are given in clock cycles and converted with
    ``clock_ghz``.  EO/TO tuning power is per ring per full FSR of shift.
    """

    reduction_network: Component = _c(0.050, 3.125, 3.00e-5)
    activation_unit: Component = _c(0.52, 0.78, 6.00e-5)
    io_interface: Component = _c(140.18, 0.78, 2.44e-2)
    pooling_unit: Component = _c(0.4, 3.125, 2.40e-4)
    edram: Component = _c(41.1, 1.56, 1.66e-1)
    bus: Component = _c(7.0, 5, 9.00e-3)
    router: Component = _c(42.0, 2, 1.50e-2)
    dac: Component = _c(12.5, 0.78, 2.50e-3)
    adc_1gsps: Component = _c(2.55, 0.78, 2e-3)
    adc_5gsps: Component = _c(11.0, 0.78, 21e-3)
    adc_10gsps: Component = _c(30.0, 0.78, 103e-3)
    eo_tuning: Component = _c(0.080, 20.0)
    to_tuning: Component = _c(275.0, 4000.0)
    clock_ghz: float = 1.282

    def adc(self, datarate_gsps: float) -> Component:
        table = {1: self.adc_1gsps, 5: self.adc_5gsps, 10: self.adc_10gsps}
        for rate, comp in table.items():
            if math.isclose(datarate_gsps, rate):
                return comp
        raise ValueError(f"no ADC entry for {datarate_gsps} GS/s (available: 1, 5, 10)")

    def cycles_ns(self, cycles: float) -> float:
        return cycles / self.clock_ghz


@dataclass
class AcceleratorConfig:
    org: DpuOrganization
    n: int
    dpu_count: int
    datarate_gsps: float
    m: int = None
    dpus_per_tile: int = 4
    hw_bits: int = 4
    peripherals: PeripheralParams = field(default_factory=PeripheralParams)
    reduction_mode: str = "tree"
    weight_load_overlap: bool = False
    use_to_tuning: bool = False
    wall_plug_efficiency: float = 0.2
    laser_power_mw: float = 10.0
    a_mrr_mm2: float = 1e-4
    buffer_width_bits: int = 256

    def __post_init__(self):
        self.org = DpuOrganization.parse(self.org)
        if self.m is None:
            self.m = self.n
        if self.n < 1 or self.m < 1:
            raise ValueError("N and M must be >= 1")
        if self.dpu_count < 0 or self.dpus_per_tile < 1:
            raise ValueError("DPU count must be >= 0 and DPUs per tile >= 1")
        if self.datarate_gsps <= 0:
            raise ValueError("datarate must be > 0")
        if self.reduction_mode not in REDUCTION_MODES:
            raise ValueError(f"reduction mode must be one of {REDUCTION_MODES}")
        if not 0 < self.wall_plug_efficiency <= 1:
            raise ValueError("wall-plug efficiency must be in (0, 1]")

    @property
    def tile_count(self) -> int:
        return math.ceil(self.dpu_count / self.dpus_per_tile)

    @property
    def dpe_count(self) -> int:
        return self.m * self.dpu_count


@dataclass(frozen=True)
class LayerPlan:
    name: str
    gemm: GemmShape
    chunks_per_output: int
    slice_passes: int
    total_dpe_dotproducts: int
    psum_reductions: int
    weight_load_events: int
    symbol_cycles: int
    # chunks of one output merged per symbol by a DPU's own adder tree
    tree_fan_in: int = 1

    @property
    def psum_values_per_output(self) -> int:
        return self.chunks_per_output * self.slice_passes

    @property
    def outputs(self) -> int:
        return self.gemm.groups * self.gemm.rows * self.gemm.cols


@dataclass(frozen=True)
class UnitRecord:
    """Work for a pooling or activation unit (no GEMM)."""

    name: str
    kind: LayerKind
    elements: int


def plan_layer(gemm: GemmShape, slices: SliceFactor, config: AcceleratorConfig,
               name: str = "") -> LayerPlan:
    if config.dpu_count < 1:
        raise ValueError("cannot map a GEMM onto zero DPUs")
    chunks = math.ceil(gemm.k / config.n)
    passes = slices.passes
    outputs = gemm.groups * gemm.rows * gemm.cols
    dots = outputs * chunks * passes
    psums = outputs * (chunks * passes - 1)
    dpes = config.dpe_count
    weight_loads = math.ceil(gemm.groups * gemm.cols * chunks * slices.weight_slices / dpes)
    return LayerPlan(
        name=name,
        gemm=gemm,
        chunks_per_output=chunks,
        slice_passes=passes,
        total_dpe_dotproducts=dots,
        psum_reductions=psums,
        weight_load_events=weight_loads,
        symbol_cycles=math.ceil(dots / dpes),
        tree_fan_in=min(chunks, config.m),
    )


def plan_model(model: CnnModel, config: AcceleratorConfig) -> "list[LayerPlan | UnitRecord]":
    plans = []
    for layer in model.layers:
        plans.extend(_plan_one(layer, config))
    return plans


def _plan_one(layer: LayerDescriptor, config: AcceleratorConfig):
    gemm = layer_to_gemm(layer)
    if gemm is not None:
        return [plan_layer(gemm, bit_slices(layer.model_bits, config.hw_bits), config, layer.name)]
    if layer.kind in (LayerKind.POOL, LayerKind.ACTIVATION):
        return [UnitRecord(layer.name, layer.kind, layer.output_elements)]
    return []


PLAN_HEADER = ["layer", "rows", "k", "cols", "chunks_per_output", "slice_passes",
               "dpe_dotproducts", "symbol_cycles", "psum_reductions", "weight_loads"]


def plans_to_csv(plans) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAN_HEADER)
    for p in plans:
        if not isinstance(p, LayerPlan):
            continue
        w.writerow([p.name, p.gemm.groups * p.gemm.rows, p.gemm.k, p.gemm.cols,
                    p.chunks_per_output, p.slice_passes, p.total_dpe_dotproducts,
                    p.symbol_cycles, p.psum_reductions, p.weight_load_events])
    return buf.getvalue()
