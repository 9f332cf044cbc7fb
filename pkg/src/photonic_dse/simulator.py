"""Transaction-level, event-driven inference simulator.

Each GEMM layer runs as a short sequence of transactions: input buffer
fill, weight programming, one DPU transaction per bit-slice pass, psum
reduction, output write-back.  Transactions are scheduled on a single
(time, seq) ordered queue so runs are bit-for-bit reproducible.

Timing of the psum reduction network is selected by
``AcceleratorConfig.reduction_mode``:

``tree``
    Up to ``M`` chunks of one output are computed side by side on one DPU
    and merged by its binary adder tree before the DPEs take the next
    symbol, so every symbol cycle carries ``ceil(log2(fan-in))`` adder
    stages.  Further chunk groups and bit-slice passes of the same output
    are accumulated at the tree root while the next symbol is in flight.
``pipelined``
    Each tile's network accepts one psum pair per adder latency and
    runs concurrently with the DPUs; only the tree depth is exposed.
``serial``
    All reductions run after compute, one per adder latency per tile.
"""

from __future__ import annotations

import heapq
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

from .device_models import (
    ALL_ORGS,
    DpuOrganization,
    input_modulator_columns,
    mrr_device_count,
    waveguide_length_mm,
)
from .mapper import AcceleratorConfig, Component, LayerPlan, PeripheralParams, UnitRecord, plan_model
from .workload import CnnModel, LayerKind

__all__ = [
    "Component", "PeripheralParams", "EventKind", "Event", "EventQueue", "SimReport",
    "run_inference", "area_model", "area_proportionate_counts", "compare_accelerators",
    "REFERENCE_TABLE", "reference_config", "check_report", "ReportInvariantError",
]

NS = 1e-9
MW = 1e-3

# DPU size N and area-matched DPU count at 4-bit precision, per datarate.
REFERENCE_TABLE = {
    1: {DpuOrganization.ASMW: (36, 160), DpuOrganization.MASW: (43, 186), DpuOrganization.SMWA: (83, 50)},
    5: {DpuOrganization.ASMW: (17, 265), DpuOrganization.MASW: (21, 275), DpuOrganization.SMWA: (42, 147)},
    10: {DpuOrganization.ASMW: (12, 291), DpuOrganization.MASW: (15, 295), DpuOrganization.SMWA: (30, 198)},
}

WAVEGUIDE_PITCH_MM = 0.002


def reference_config(org, datarate_gsps, **overrides) -> AcceleratorConfig:
    org = DpuOrganization.parse(org)
    try:
        n, count = REFERENCE_TABLE[int(datarate_gsps)][org]
    except KeyError:
        raise ValueError(f"no reference entry for {org} at {datarate_gsps} GS/s") from None
    return AcceleratorConfig(org=org, n=n, dpu_count=count, datarate_gsps=datarate_gsps, **overrides)


class EventKind(Enum):
    BUFFER_XFER_DONE = "buffer_xfer_done"
    WEIGHT_LOAD_DONE = "weight_load_done"
    DPU_PASS_DONE = "dpu_pass_done"
    REDUCTION_DONE = "reduction_done"
    LAYER_DONE = "layer_done"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0

    def schedule(self, delay: float, kind: EventKind, **payload) -> Event:
        if delay < 0:
            raise ValueError("events cannot be scheduled in the past")
        ev = Event(self.now + delay, next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev

    def __bool__(self):
        return bool(self._heap)


@dataclass
class SimReport:
    latency_s: float
    energy_j: float
    avg_power_w: float
    area_mm2: float
    fps: float
    fps_per_w: float
    fps_per_w_per_mm2: float
    energy_breakdown: "dict[str, float]"
    symbol_cycles: int = 0
    psum_reductions: int = 0
    weight_loads: int = 0
    buffer_transactions: int = 0
    degenerate: bool = False
    event_count: int = 0


def _tree_depth(fan_in: int) -> int:
    return math.ceil(math.log2(fan_in)) if fan_in > 1 else 0


class _Engine:
    """Drives the layer transactions of one inference through the event queue."""

    def __init__(self, plans, config: AcceleratorConfig):
        self.plans = plans
        self.cfg = config
        self.per = config.peripherals
        self.q = EventQueue()
        self.t_sym_ns = 1.0 / config.datarate_gsps
        self.busy_ns = {"reduction": 0.0, "activation": 0.0, "pooling": 0.0}
        self.counters = {"symbol_cycles": 0, "psum_reductions": 0, "weight_loads": 0,
                         "dotproducts": 0, "dac_columns": 0, "weight_rings": 0,
                         "buffer_transactions": 0}
        self.events = 0
        self.red_ns = self.per.reduction_network.latency_ns

    # -- per-transaction durations (ns) --------------------------------
    def _xfer_ns(self, elements, bits):
        """One eDRAM transaction plus a bus and router hop.

        Every tile reads its input block (or writes its output block) once
        per layer and the tiles do so in parallel, so a single transaction
        is exposed per direction.
        """
        if elements == 0:
            return 0.0
        self.counters["buffer_transactions"] += max(1, self.cfg.tile_count)
        return (self.per.edram.latency_ns + self.per.cycles_ns(self.per.bus.latency_ns)
                + self.per.cycles_ns(self.per.router.latency_ns))

    def _tuning(self) -> Component:
        return self.per.to_tuning if self.cfg.use_to_tuning else self.per.eo_tuning

    def _pass_ns(self, plan: LayerPlan, cycles: int):
        period = self.t_sym_ns
        if self.cfg.reduction_mode == "tree":
            period += _tree_depth(plan.tree_fan_in) * self.red_ns
        return cycles * period

    def _reduction_tail_ns(self, plan: LayerPlan, compute_ns: float) -> float:
        mode = self.cfg.reduction_mode
        if plan.psum_reductions == 0:
            return 0.0
        if mode == "tree":
            return 0.0
        per_tile = math.ceil(plan.psum_reductions / self.cfg.tile_count)
        if mode == "serial":
            return per_tile * self.red_ns
        # pipelined: network runs alongside compute, then drains its tree
        return max(0.0, per_tile * self.red_ns - compute_ns) + _tree_depth(plan.tree_fan_in) * self.red_ns

    # -- event loop ----------------------------------------------------
    def run(self) -> float:
        if self.plans:
            self._start(0)
        while self.q:
            ev = self.q.pop()
            self.events += 1
            getattr(self, "_on_" + ev.kind.value)(ev)
        return self.q.now

    def _start(self, idx):
        item = self.plans[idx]
        if isinstance(item, UnitRecord):
            unit = self.per.activation_unit if item.kind is LayerKind.ACTIVATION else self.per.pooling_unit
            lanes = max(1, self.cfg.tile_count) * self.cfg.dpus_per_tile * self.cfg.m
            dur = math.ceil(item.elements / lanes) * unit.latency_ns
            key = "activation" if item.kind is LayerKind.ACTIVATION else "pooling"
            self.busy_ns[key] += item.elements * unit.latency_ns
            self.q.schedule(dur * NS, EventKind.LAYER_DONE, idx=idx)
            return
        self.q.schedule(self._xfer_ns(item.input_elements, item.bits) * NS,
                        EventKind.BUFFER_XFER_DONE, idx=idx, stage="in")

    def _on_buffer_xfer_done(self, ev):
        idx, plan = ev.payload["idx"], self.plans[ev.payload["idx"]]
        if ev.payload["stage"] == "out":
            self.q.schedule(0.0, EventKind.LAYER_DONE, idx=idx)
            return
        self.counters["weight_loads"] += plan.weight_load_events
        self.counters["weight_rings"] += plan.weight_load_events * self.cfg.dpe_count * self.cfg.n
        wl_ns = 0.0 if self.cfg.weight_load_overlap else plan.weight_load_events * self._tuning().latency_ns
        self.q.schedule(wl_ns * NS, EventKind.WEIGHT_LOAD_DONE, idx=idx)

    def _on_weight_load_done(self, ev):
        self._issue_pass(ev.payload["idx"], 0, 0.0)

    def _issue_pass(self, idx, p, compute_ns):
        plan = self.plans[idx]
        # split the layer's symbol cycles evenly over its bit-slice passes
        base, extra = divmod(plan.symbol_cycles, plan.slice_passes)
        cycles = base + (1 if p < extra else 0)
        dur = self._pass_ns(plan, cycles)
        self.q.schedule(dur * NS, EventKind.DPU_PASS_DONE, idx=idx, p=p,
                        cycles=cycles, compute_ns=compute_ns + dur)

    def _on_dpu_pass_done(self, ev):
        idx, p = ev.payload["idx"], ev.payload["p"]
        plan = self.plans[idx]
        self.counters["symbol_cycles"] += ev.payload["cycles"]
        if p + 1 < plan.slice_passes:
            self._issue_pass(idx, p + 1, ev.payload["compute_ns"])
            return
        compute_ns = ev.payload["compute_ns"]
        dots = plan.total_dpe_dotproducts
        self.counters["dotproducts"] += dots
        cols = input_modulator_columns(self.cfg.org, self.cfg.m)
        self.counters["dac_columns"] += math.ceil(dots * cols / self.cfg.m)
        tail = self._reduction_tail_ns(plan, compute_ns)
        self.q.schedule(tail * NS, EventKind.REDUCTION_DONE, idx=idx)

    def _on_reduction_done(self, ev):
        idx = ev.payload["idx"]
        plan = self.plans[idx]
        self.counters["psum_reductions"] += plan.psum_reductions
        self.busy_ns["reduction"] += plan.psum_reductions * self.red_ns
        self.q.schedule(self._xfer_ns(plan.output_elements, plan.bits) * NS,
                        EventKind.BUFFER_XFER_DONE, idx=idx, stage="out")

    def _on_layer_done(self, ev):
        nxt = ev.payload["idx"] + 1
        if nxt < len(self.plans):
            self._start(nxt)


@dataclass(frozen=True)
class _IoPlan(LayerPlan):
    input_elements: int = 0
    output_elements: int = 0
    bits: int = 8


def _attach_io(model: CnnModel, plans):
    """Annotate GEMM plans with the tensor sizes their layer reads and writes."""
    layers = {layer.name: layer for layer in model.layers}
    out = []
    for p in plans:
        if isinstance(p, LayerPlan):
            layer = layers[p.name]
            p = _IoPlan(**{f: getattr(p, f) for f in LayerPlan.__dataclass_fields__},
                        input_elements=layer.in_c * layer.in_h * layer.in_w,
                        output_elements=layer.output_elements, bits=layer.model_bits)
        out.append(p)
    return out


def static_power_w(config: AcceleratorConfig) -> "dict[str, float]":
    per = config.peripherals
    return {
        "laser": config.laser_power_mw * config.n * config.dpu_count / config.wall_plug_efficiency * MW,
        "io_interface": per.io_interface.power_mw * MW,
        "edram": per.edram.power_mw * MW,
        "bus": per.bus.power_mw * config.tile_count * MW,
        "router": per.router.power_mw * config.tile_count * MW,
    }


def run_inference(model: CnnModel, config: AcceleratorConfig) -> SimReport:
    """Simulate one batch-1 inference of ``model`` on ``config``."""
    per = config.peripherals
    adc = per.adc(config.datarate_gsps)
    area = area_model(config)
    static = static_power_w(config)
    if model.gemm_layers and config.dpu_count < 1:
        raise ValueError("model has GEMM layers but the accelerator has no DPUs")
    plans = _attach_io(model, plan_model(model, config)) if model.gemm_layers else \
        [p for p in plan_model(model, config) if not isinstance(p, LayerPlan)]
    engine = _Engine(plans, config)
    latency_s = engine.run()
    c = engine.counters
    t_sym = NS / config.datarate_gsps
    tuning = engine._tuning()
    breakdown = {name: watts * latency_s for name, watts in static.items()}
    breakdown.update({
        "adc": c["dotproducts"] * adc.power_mw * MW * t_sym,
        "dac": c["dac_columns"] * per.dac.power_mw * MW * t_sym,
        "reduction_network": per.reduction_network.power_mw * MW * engine.busy_ns["reduction"] * NS,
        "activation_unit": per.activation_unit.power_mw * MW * engine.busy_ns["activation"] * NS,
        "pooling_unit": per.pooling_unit.power_mw * MW * engine.busy_ns["pooling"] * NS,
        "tuning": c["weight_rings"] * tuning.power_mw * MW * tuning.latency_ns * NS,
    })
    energy = math.fsum(breakdown.values())
    degenerate = c["symbol_cycles"] == 0
    if latency_s > 0:
        avg_power = energy / latency_s
        fps = 1.0 / latency_s
    else:
        avg_power = math.fsum(static.values())
        fps = math.inf
    fps_per_w = fps / avg_power if avg_power > 0 else math.inf
    return SimReport(
        latency_s=latency_s,
        energy_j=energy,
        avg_power_w=avg_power,
        area_mm2=area,
        fps=fps,
        fps_per_w=fps_per_w,
        fps_per_w_per_mm2=fps_per_w / area if area > 0 else math.inf,
        energy_breakdown=breakdown,
        symbol_cycles=c["symbol_cycles"],
        psum_reductions=c["psum_reductions"],
        weight_loads=c["weight_loads"],
        buffer_transactions=c["buffer_transactions"],
        degenerate=degenerate,
        event_count=engine.events,
    )


def dpu_area_mm2(config: AcceleratorConfig, d_mrr_mm: float = 0.005) -> float:
    org, n, m = config.org, config.n, config.m
    per = config.peripherals
    rings = mrr_device_count(org, n, m) * config.a_mrr_mm2
    # one routed waveguide bundle per DPE
    waveguides = m * waveguide_length_mm(org, n, d_mrr_mm) * WAVEGUIDE_PITCH_MM
    adcs = m * per.adc(config.datarate_gsps).area_mm2
    dacs = (input_modulator_columns(org, m) + m) * per.dac.area_mm2
    return rings + waveguides + adcs + dacs


def area_model(config: AcceleratorConfig) -> float:
    """Chip area in mm^2: DPUs, per-tile electronics and global memory/IO."""
    per = config.peripherals
    tile = (per.bus.area_mm2 + per.router.area_mm2 + per.pooling_unit.area_mm2
            + per.activation_unit.area_mm2 + per.reduction_network.area_mm2)
    glob = per.io_interface.area_mm2 + per.edram.area_mm2
    dpus = config.dpu_count * dpu_area_mm2(config) if config.dpu_count else 0.0
    return dpus + config.tile_count * tile + glob


def area_proportionate_counts(n_per_org: dict, reference: AcceleratorConfig = None,
                              datarate_gsps: float = None, **config_kw) -> "dict[DpuOrganization, int]":
    """Largest DPU count per organization whose area fits the reference chip.

    The default reference is SMWA with N = 83 and 50 DPUs at 1 GS/s.
    """
    if reference is None:
        reference = AcceleratorConfig(DpuOrganization.SMWA, n=83, dpu_count=50, datarate_gsps=1, **config_kw)
    budget = area_model(reference)
    dr = datarate_gsps if datarate_gsps is not None else reference.datarate_gsps
    counts = {}
    for org, n in n_per_org.items():
        org = DpuOrganization.parse(org)
        if n < 1:
            warnings.warn(f"{org}: no feasible DPU size, count set to 0")
            counts[org] = 0
            continue
        probe = AcceleratorConfig(org, n=n, dpu_count=1, datarate_gsps=dr, **config_kw)
        per_dpu = dpu_area_mm2(probe)
        # start from the linear estimate, then settle the tile rounding
        count = max(0, int((budget - area_model(replace(probe, dpu_count=0))) // per_dpu) + 1)
        while count > 0 and area_model(replace(probe, dpu_count=count)) > budget * (1 + 1e-12):
            count -= 1
        while area_model(replace(probe, dpu_count=count + 1)) <= budget * (1 + 1e-12):
            count += 1
        if count == 0:
            warnings.warn(f"{org}: a single DPU of size {n} exceeds the reference area")
        counts[org] = count
    return counts


@dataclass(frozen=True)
class CompareRow:
    model: str
    org: DpuOrganization
    datarate_gsps: float
    config: AcceleratorConfig
    report: SimReport
    norm_fps: float = math.nan
    norm_fps_per_w: float = math.nan
    norm_fps_per_w_per_mm2: float = math.nan

    @property
    def is_gmean(self) -> bool:
        return self.model == "gmean"


BASELINE = ("resnet50", DpuOrganization.ASMW, 10)


def _gmean(values):
    values = list(values)
    return math.exp(math.fsum(math.log(v) for v in values) / len(values))


def compare_accelerators(models: "list[CnnModel]", orgs=ALL_ORGS, dr_list=(1, 5, 10),
                         config_for=None) -> "list[CompareRow]":
    """Simulate every (model, org, datarate) cell and normalize to ASMW/ResNet50/10 GS/s.

    ``config_for(org, datarate)`` supplies the accelerator; by default the
    reference DPU sizes and counts are used.  Geometric-mean rows over the
    models follow the per-model rows.
    """
    config_for = config_for or reference_config
    orgs = [DpuOrganization.parse(o) for o in orgs]
    rows = []
    for model in models:
        for org in orgs:
            for dr in dr_list:
                cfg = config_for(org, dr)
                rows.append(CompareRow(model.name, org, dr, cfg, run_inference(model, cfg)))
    base = [r for r in rows if (r.model, r.org, r.datarate_gsps) == BASELINE]
    if not base:
        raise LookupError("comparison needs the ResNet50 / ASMW / 10 GS/s baseline cell")
    b = base[0].report
    rows = [replace(r, norm_fps=r.report.fps / b.fps,
                    norm_fps_per_w=r.report.fps_per_w / b.fps_per_w,
                    norm_fps_per_w_per_mm2=r.report.fps_per_w_per_mm2 / b.fps_per_w_per_mm2)
            for r in rows]
    gm_rows = []
    for org in orgs:
        for dr in dr_list:
            cell = [r for r in rows if r.org is org and r.datarate_gsps == dr]
            rep = cell[0].report
            gm_report = replace(
                rep,
                latency_s=_gmean(r.report.latency_s for r in cell),
                energy_j=_gmean(r.report.energy_j for r in cell),
                avg_power_w=_gmean(r.report.avg_power_w for r in cell),
                fps=_gmean(r.report.fps for r in cell),
                fps_per_w=_gmean(r.report.fps_per_w for r in cell),
                fps_per_w_per_mm2=_gmean(r.report.fps_per_w_per_mm2 for r in cell),
                energy_breakdown={},
            )
            gm_rows.append(CompareRow(
                "gmean", org, dr, cell[0].config, gm_report,
                norm_fps=_gmean(r.norm_fps for r in cell),
                norm_fps_per_w=_gmean(r.norm_fps_per_w for r in cell),
                norm_fps_per_w_per_mm2=_gmean(r.norm_fps_per_w_per_mm2 for r in cell)))
    return rows + gm_rows


class ReportInvariantError(AssertionError):
    pass


def check_report(report: SimReport, rel: float = 1e-9) -> None:
    """Raise :class:`ReportInvariantError` if the report is internally inconsistent."""
    def close(a, b):
        if math.isinf(a) or math.isinf(b):
            return a == b
        return math.isclose(a, b, rel_tol=rel, abs_tol=0.0) or a == b

    values = [report.latency_s, report.energy_j, report.avg_power_w, report.area_mm2,
              report.fps, report.fps_per_w, report.fps_per_w_per_mm2]
    if any(math.isnan(v) or v < 0 for v in values):
        raise ReportInvariantError(f"negative or NaN figure in {report}")
    if report.latency_s > 0 and not close(report.fps, 1.0 / report.latency_s):
        raise ReportInvariantError("fps != 1 / latency")
    if report.avg_power_w > 0 and not close(report.fps_per_w, report.fps / report.avg_power_w):
        raise ReportInvariantError("fps_per_w != fps / power")
    if report.area_mm2 > 0 and not close(report.fps_per_w_per_mm2, report.fps_per_w / report.area_mm2):
        raise ReportInvariantError("fps_per_w_per_mm2 != fps_per_w / area")
    if report.energy_breakdown and not close(math.fsum(report.energy_breakdown.values()), report.energy_j):
        raise ReportInvariantError("energy breakdown does not add up to the total")
