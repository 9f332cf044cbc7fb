import dataclasses
import math

import pytest
from hypothesis import given, settings, strategies as st

from photonic_dse.device_models import ALL_ORGS, DpuOrganization
from photonic_dse.mapper import AcceleratorConfig, LayerPlan, PeripheralParams, plan_model
from photonic_dse.simulator import (
    REFERENCE_TABLE,
    EventKind,
    EventQueue,
    ReportInvariantError,
    area_model,
    area_proportionate_counts,
    check_report,
    compare_accelerators,
    reference_config,
    run_inference,
)
from photonic_dse.workload import CnnModel, LayerDescriptor, LayerKind, bundled_model

A, M, S = DpuOrganization.ASMW, DpuOrganization.MASW, DpuOrganization.SMWA
LATENCY_FIELDS = [f.name for f in dataclasses.fields(PeripheralParams) if f.name != "clock_ghz"]


def zeroed(keep=()):
    per = PeripheralParams()
    for name in LATENCY_FIELDS:
        if name not in keep:
            setattr(per, name, dataclasses.replace(getattr(per, name), latency_ns=0.0))
    return per


def gemm_4x8x4():
    # 1x1 conv on a 2x2 map: rows 4, k 8, cols 4
    return CnnModel("g", [LayerDescriptor("c", LayerKind.CONV, in_c=8, in_h=2, in_w=2, out_c=4)])


def small_cfg(**kw):
    base = dict(org=A, n=4, dpu_count=1, datarate_gsps=1, hw_bits=8)
    base.update(kw)
    return AcceleratorConfig(**base)


# -- worked examples --------------------------------------------------------

def test_pure_compute_latency():
    r = run_inference(gemm_4x8x4(), small_cfg(peripherals=zeroed()))
    assert r.latency_s == pytest.approx(8e-9, rel=1e-12)
    assert r.symbol_cycles == 8 and r.psum_reductions == 16


def test_serial_reduction_latency():
    cfg = small_cfg(peripherals=zeroed(keep=("reduction_network",)), reduction_mode="serial")
    assert run_inference(gemm_4x8x4(), cfg).latency_s == pytest.approx(58e-9, rel=1e-12)


def test_pipelined_reduction_latency():
    # 16 merges at 3.125 ns outlast 8 ns of compute; the one-stage tree drains after
    cfg = small_cfg(peripherals=zeroed(keep=("reduction_network",)), reduction_mode="pipelined")
    assert run_inference(gemm_4x8x4(), cfg).latency_s == pytest.approx((50 + 3.125) * 1e-9, rel=1e-12)


def test_tree_reduction_latency():
    # two chunks per output meet in a one-stage tree on every symbol
    cfg = small_cfg(peripherals=zeroed(keep=("reduction_network",)), reduction_mode="tree")
    assert run_inference(gemm_4x8x4(), cfg).latency_s == pytest.approx(8 * (1 + 3.125) * 1e-9, rel=1e-12)


def test_weight_load_latency_and_overlap():
    per = zeroed(keep=("eo_tuning",))
    r = run_inference(gemm_4x8x4(), small_cfg(peripherals=per))
    assert r.weight_loads == 2
    assert r.latency_s == pytest.approx((8 + 2 * 20) * 1e-9)
    r = run_inference(gemm_4x8x4(), small_cfg(peripherals=per, weight_load_overlap=True))
    assert r.latency_s == pytest.approx(8e-9)


def test_buffer_transfer_latency():
    per = zeroed(keep=("edram", "bus", "router"))
    r = run_inference(gemm_4x8x4(), small_cfg(peripherals=per))
    hop = 1.56 + 5 / 1.282 + 2 / 1.282
    assert r.latency_s == pytest.approx((8 + 2 * hop) * 1e-9)
    assert r.buffer_transactions == 2


def test_empty_model_is_degenerate():
    cfg = small_cfg()
    r = run_inference(CnnModel("empty"), cfg)
    assert r.latency_s == 0 and r.degenerate and math.isinf(r.fps)
    assert r.energy_j == 0
    check_report(r)


def test_activation_only_model_is_degenerate():
    model = CnnModel("act", [LayerDescriptor("relu", LayerKind.ACTIVATION, in_c=4, in_h=2, in_w=2)])
    r = run_inference(model, small_cfg())
    assert r.degenerate and r.latency_s > 0
    check_report(r)


def test_gemm_on_zero_dpus_rejected():
    with pytest.raises(ValueError):
        run_inference(gemm_4x8x4(), small_cfg(dpu_count=0))


def test_single_dpe_and_single_output():
    one_out = CnnModel("dot", [LayerDescriptor("fc", LayerKind.FC, in_c=7, out_c=1)])
    for cfg in (small_cfg(n=1, m=1), small_cfg(n=16)):
        for model in (one_out, gemm_4x8x4()):
            r = run_inference(model, cfg)
            check_report(r)
            assert not r.degenerate


# -- invariants -------------------------------------------------------------

def test_event_queue_order():
    q = EventQueue()
    q.schedule(2.0, EventKind.LAYER_DONE, tag="late")
    q.schedule(1.0, EventKind.LAYER_DONE, tag="first")
    q.schedule(1.0, EventKind.LAYER_DONE, tag="second")
    tags = []
    while q:
        tags.append(q.pop().payload["tag"])
    assert tags == ["first", "second", "late"]
    with pytest.raises(ValueError):
        q.schedule(-1.0, EventKind.LAYER_DONE)


def test_determinism():
    cfg = reference_config(S, 5)
    model = bundled_model("mobilenet_v2")
    assert run_inference(model, cfg) == run_inference(model, cfg)


@pytest.mark.parametrize("name", ["resnet50", "shufflenet_v2"])
@pytest.mark.parametrize("mode", ["tree", "pipelined", "serial"])
def test_full_model_accounting(name, mode):
    model = bundled_model(name)
    cfg = reference_config(A, 10, reduction_mode=mode)
    r = run_inference(model, cfg)
    check_report(r)
    plans = [p for p in plan_model(model, cfg) if isinstance(p, LayerPlan)]
    assert r.psum_reductions == sum(p.psum_reductions for p in plans)
    assert r.symbol_cycles == sum(p.symbol_cycles for p in plans)
    assert r.latency_s >= sum(p.symbol_cycles for p in plans) / (cfg.datarate_gsps * 1e9)
    assert math.fsum(r.energy_breakdown.values()) == pytest.approx(r.energy_j, rel=1e-9)


def test_reduction_modes_order():
    model = bundled_model("resnet50")
    lat = {m: run_inference(model, reference_config(A, 1, reduction_mode=m)).latency_s
           for m in ("tree", "pipelined", "serial")}
    assert lat["pipelined"] <= lat["serial"]


def test_compute_time_falls_with_datarate():
    model = bundled_model("resnet50")
    lat = [run_inference(model, AcceleratorConfig(S, 30, 50, dr, peripherals=zeroed())).latency_s
           for dr in (1, 5, 10)]
    assert lat[0] > lat[1] > lat[2]


def test_check_report_catches_inconsistency():
    r = run_inference(gemm_4x8x4(), small_cfg())
    with pytest.raises(ReportInvariantError):
        check_report(dataclasses.replace(r, fps=r.fps * 2))
    with pytest.raises(ReportInvariantError):
        check_report(dataclasses.replace(r, energy_j=r.energy_j * 1.01))


@settings(max_examples=40, deadline=None)
@given(org=st.sampled_from(ALL_ORGS), n=st.integers(1, 40), dpus=st.integers(1, 20),
       dr=st.sampled_from([1, 5, 10]), c=st.integers(1, 16), hw=st.integers(5, 12),
       oc=st.integers(1, 24), k=st.sampled_from([1, 3]), hw_bits=st.sampled_from([2, 4, 8]),
       mode=st.sampled_from(["tree", "pipelined", "serial"]))
def test_reports_consistent(org, n, dpus, dr, c, hw, oc, k, hw_bits, mode):
    layers = [
        LayerDescriptor("c1", LayerKind.CONV, in_c=c, in_h=hw, in_w=hw, out_c=oc, kernel_h=k, kernel_w=k,
                        padding=k // 2),
        LayerDescriptor("relu", LayerKind.ACTIVATION, in_c=oc, in_h=hw, in_w=hw),
        LayerDescriptor("pool", LayerKind.POOL, in_c=oc, in_h=hw, in_w=hw, kernel_h=hw, kernel_w=hw),
        LayerDescriptor("fc", LayerKind.FC, in_c=oc, out_c=5),
    ]
    cfg = AcceleratorConfig(org, n, dpus, dr, hw_bits=hw_bits, reduction_mode=mode)
    r = run_inference(CnnModel("rand", layers), cfg)
    check_report(r)
    plans = [p for p in plan_model(CnnModel("rand", layers), cfg) if isinstance(p, LayerPlan)]
    assert r.psum_reductions == sum(p.psum_reductions for p in plans)
    assert r.latency_s >= sum(p.symbol_cycles for p in plans) / (dr * 1e9) * (1 - 1e-12)


# -- area -------------------------------------------------------------------

def test_area_global_only():
    assert area_model(AcceleratorConfig(S, 83, 0, 1)) == pytest.approx(0.0244 + 0.166)


def test_reference_area_golden():
    # hand sum: 50 DPUs x 2.92326 mm2 + 13 tiles x 0.02433 mm2 + 0.1904 mm2 global
    assert area_model(AcceleratorConfig(S, 83, 50, 1)) == pytest.approx(146.66969, rel=1e-12)


@given(org=st.sampled_from(ALL_ORGS), n=st.integers(1, 100), count=st.integers(1, 200))
def test_area_linearity(org, n, count):
    glob = area_model(AcceleratorConfig(org, n, 0, 5))
    one = area_model(AcceleratorConfig(org, n, count, 5)) - glob
    two = area_model(AcceleratorConfig(org, n, 2 * count, 5)) - glob
    # tiles round up, so doubling never more than doubles the area
    if math.ceil(2 * count / 4) == 2 * math.ceil(count / 4):
        assert two == pytest.approx(2 * one, rel=1e-12)
    else:
        assert two < 2 * one


def test_reference_matches_itself():
    assert area_proportionate_counts({S: 83})[S] == 50


@pytest.mark.parametrize("dr", [1, 5, 10])
def test_area_counts_are_largest_fitting(dr):
    sizes = {A: REFERENCE_TABLE[dr][A][0], M: REFERENCE_TABLE[dr][M][0], S: REFERENCE_TABLE[dr][S][0]}
    budget = area_model(AcceleratorConfig(S, 83, 50, 1))
    counts = area_proportionate_counts(sizes, datarate_gsps=dr)
    for org, n in sizes.items():
        fits = [c for c in range(0, 2000) if area_model(AcceleratorConfig(org, n, c, dr)) <= budget]
        assert counts[org] == max(fits)


def test_oversized_dpu_gets_zero_with_warning():
    with pytest.warns(UserWarning):
        counts = area_proportionate_counts({S: 200}, reference=AcceleratorConfig(A, 4, 1, 1))
    assert counts[S] == 0


def test_reference_counts():
    assert {o: reference_config(o, 1).dpu_count for o in ALL_ORGS} == {A: 160, M: 186, S: 50}
    assert {o: reference_config(o, 10).dpu_count for o in ALL_ORGS} == {A: 291, M: 295, S: 198}
    with pytest.raises(ValueError):
        reference_config(A, 2)


# -- comparison -------------------------------------------------------------

def test_compare_baseline_and_gmean():
    models = [bundled_model("resnet50"), bundled_model("shufflenet_v2")]
    rows = compare_accelerators(models)
    assert len(rows) == 2 * 9 + 9
    base = [r for r in rows if r.model == "resnet50" and r.org is A and r.datarate_gsps == 10][0]
    assert (base.norm_fps, base.norm_fps_per_w, base.norm_fps_per_w_per_mm2) == (1.0, 1.0, 1.0)
    for g in (r for r in rows if r.is_gmean):
        cell = [r for r in rows if not r.is_gmean and r.org is g.org and r.datarate_gsps == g.datarate_gsps]
        assert g.norm_fps == pytest.approx(math.sqrt(cell[0].norm_fps * cell[1].norm_fps))


def test_gmean_of_identical_ratios():
    model = bundled_model("resnet50")
    twin = CnnModel("resnet50_copy", model.layers)
    rows = compare_accelerators([model, twin], orgs=[A, S], dr_list=[10])
    g = [r for r in rows if r.is_gmean and r.org is S][0]
    single = [r for r in rows if r.model == "resnet50" and r.org is S][0]
    assert g.norm_fps == pytest.approx(single.norm_fps, rel=1e-12)


def test_compare_requires_baseline():
    with pytest.raises(LookupError):
        compare_accelerators([bundled_model("resnet50")], orgs=[S], dr_list=[10])
    with pytest.raises(LookupError):
        compare_accelerators([bundled_model("googlenet")], orgs=[A], dr_list=[10])
