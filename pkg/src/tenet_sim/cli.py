"""Command-line front end.

Verbs: pack, unpack, asm, run, check, report, dse. Exit codes: 0 on
success, 1 for invalid input, 2 for runtime compute faults (corrupt
streams, failed checks, infeasible spaces).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import codec, kernels
from ._jsonio import dump_json
from .attention import SaConfig
from .checks import SUITES, run_checks
from .das import SparsityConfig
from .dse import DseSpace, PowerCoeffs, grid_search
from .engine import EngineState, assemble, execute
from .errors import ComputeError, ValidationError
from .perf import (
    ACT_FORMATS,
    INT8,
    ACT_INT8,
    REFERENCE_INTENSITIES,
    WEIGHT_FORMATS,
    HardwareConfig,
    Workload,
    build_report,
    phase_traffic,
    weight_bytes_per_token,
)
from .presets import MODEL_PRESETS, model_dims, naive_v1
from .quant import (
    ModelDims,
    check_keys,
    matrix_from_json,
    matrix_to_json,
    quantize_weights_ternary,
    ternary_from_json,
    ternary_to_json,
)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}") from None


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def cmd_pack(args) -> int:
    obj = _load_json(args.infile)
    if args.quantize:
        w = quantize_weights_ternary(matrix_from_json(obj))
    else:
        w = ternary_from_json(obj)
    n_bytes = codec.write_packed_weights(w, args.out)
    stats = codec.compression_stats(w.rows * w.cols)
    print(f"packed {w.rows}x{w.cols} ternary weights -> {args.out} ({n_bytes} bytes)")
    print(
        f"payload {stats['bytes_twd']} bytes vs int2 {stats['bytes_int2']} "
        f"vs int8 {stats['bytes_int8']}; {_fmt(stats['bits_per_weight'])} bits/weight"
    )
    return 0


def cmd_unpack(args) -> int:
    w = codec.read_packed_weights(args.infile)
    dump_json(ternary_to_json(w), args.out, exact=True)
    print(f"unpacked {w.rows}x{w.cols} weights (scale {_fmt(w.scale)}) -> {args.out}")
    return 0


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from None


def cmd_asm(args) -> int:
    program = assemble(_read_text(args.program))
    listing = []
    for inst in program:
        rec = {"op": type(inst).__name__.lower(), "line": inst.line}
        for k, v in vars(inst).items():
            if k != "line":
                rec[k] = v
        listing.append(rec)
    if args.out:
        dump_json(listing, args.out)
    print(f"assembled {len(program)} instructions from {args.program}")
    return 0


def _build_engine_state(spec: dict) -> EngineState:
    check_keys(spec, required=("vectors",), optional=("weights", "kv"), what="engine state")
    state = EngineState()
    state.load_vectors(matrix_from_json(spec["vectors"]))
    for entry in spec.get("weights", []):
        check_keys(entry, required=("addr",), optional=("file", "tensor"), what="weight region")
        if ("file" in entry) == ("tensor" in entry):
            raise ValidationError("weight region needs exactly one of 'file' or 'tensor'")
        if "file" in entry:
            w = codec.read_packed_weights(entry["file"])
        else:
            w = ternary_from_json(entry["tensor"])
        state.load_weights(int(entry["addr"]), w)
    for entry in spec.get("kv", []):
        check_keys(entry, required=("addr", "matrix"), optional=(), what="kv region")
        state.load_kv(int(entry["addr"]), matrix_from_json(entry["matrix"]))
    return state


def cmd_run(args) -> int:
    program = assemble(_read_text(args.program))
    state = _build_engine_state(_load_json(args.state))
    hw = HardwareConfig() if args.cycles else None
    trace = execute(program, state, hw=hw)
    out = state.output()
    if args.out:
        dump_json(matrix_to_json(out), args.out, exact=True)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for ev in trace:
                fh.write(json.dumps(ev) + "\n")
    emitted = sum(1 for ev in trace if ev["op"] == "emit_row")
    print(f"ran {len(program)} instructions on kernel '{kernels.ACTIVE}'; "
          f"output {out.shape[0]}x{out.shape[1]} ({emitted} rows emitted)")
    if hw is not None:
        total = sum(ev.get("cycles", 0) for ev in trace)
        print(f"modeled cycles: {total}")
    return 0


def cmd_check(args) -> int:
    results = run_checks(seed=args.seed, suites=args.suite or None, corrupt_stl=args.corrupt_stl)
    ok = True
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        ok = ok and r["passed"]
        print(f"{status} {r['name']} (seed={args.seed}): {r['detail']}")
    if not ok:
        print("check failed", file=sys.stderr)
        return 2
    return 0


def _dims_from_config(obj) -> ModelDims:
    if isinstance(obj, str):
        return model_dims(obj)
    check_keys(
        obj,
        required=("d_model", "n_heads", "d_ffn", "n_layers"),
        optional=("d_head",),
        what="model dims",
    )
    d_head = obj.get("d_head", obj["d_model"] // obj["n_heads"])
    return ModelDims(
        d_model=int(obj["d_model"]),
        n_heads=int(obj["n_heads"]),
        d_head=int(d_head),
        d_ffn=int(obj["d_ffn"]),
        n_layers=int(obj["n_layers"]),
    )


def _workload_from_config(cfg: dict) -> Workload:
    check_keys(
        cfg,
        required=("model", "tl_prefill", "tl_decode", "weights", "activations", "dataflow"),
        optional=("das", "sa", "ppl", "tokens"),
        what="workload config",
    )
    wf = cfg["weights"]
    if wf not in WEIGHT_FORMATS:
        raise ValidationError(f"unknown weight format {wf!r}; choices: {sorted(WEIGHT_FORMATS)}")
    af = cfg["activations"]
    if af not in ACT_FORMATS:
        raise ValidationError(f"unknown activation format {af!r}; choices: {sorted(ACT_FORMATS)}")
    das = None
    if cfg.get("das") is not None:
        d = cfg["das"]
        check_keys(d, required=(), optional=("block_size", "ratio", "topk_domain"), what="das config")
        das = SparsityConfig(**{k: d[k] for k in d})
    sa = None
    if cfg.get("sa") is not None:
        s = cfg["sa"]
        check_keys(s, required=(), optional=("tl_sa", "sink", "pack_len"), what="sa config")
        sa = SaConfig(**{k: s[k] for k in s})
    return Workload(
        dims=_dims_from_config(cfg["model"]),
        tl_prefill=int(cfg["tl_prefill"]),
        tl_decode=int(cfg["tl_decode"]),
        weight_format=WEIGHT_FORMATS[wf],
        act_format=ACT_FORMATS[af],
        dataflow=cfg["dataflow"],
        das=das,
        sa=sa,
    )


def _hardware_from_config(obj) -> HardwareConfig:
    if obj is None:
        return HardwareConfig()
    fields = (
        "p_l", "p_h", "thpt", "clock_hz", "dram_bw_bytes_per_s", "vbuffer_bytes",
        "kv_buffer_bytes", "e_mac_pj", "e_dram_pj_per_byte", "p_static_w",
    )
    check_keys(obj, required=(), optional=fields, what="hardware config")
    return HardwareConfig(**{k: obj[k] for k in obj})


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def cmd_report(args) -> int:
    cfg = _load_json(args.config)
    wl_cfg = dict(cfg)
    hw = _hardware_from_config(wl_cfg.pop("hardware", None))
    w = _workload_from_config(wl_cfg)
    ppl = args.ppl if args.ppl is not None else wl_cfg.get("ppl")
    tokens = args.tokens if args.tokens is not None else wl_cfg.get("tokens")
    report = build_report(w, hw, ppl=ppl, tokens=tokens)
    os.makedirs(args.out, exist_ok=True)
    dump_json(report, os.path.join(args.out, "report.json"))

    mem_rows = []
    for phase in ("prefill", "decode"):
        for cls in ("weights", "activations", "kv"):
            mem_rows.append((phase, cls, report["traffic"][phase][cls]))
    _write_csv(os.path.join(args.out, "memory_breakdown.csv"),
               ("phase", "tensor_class", "bytes"), mem_rows)
    comp_rows = [
        (cls, report["compute"][cls]["mults"], report["compute"][cls]["adds"])
        for cls in ("qkv_proj", "o_proj", "ffn", "attn_qk", "attn_sv")
    ]
    _write_csv(os.path.join(args.out, "compute_breakdown.csv"),
               ("layer_class", "mults", "adds"), comp_rows)

    print(f"report written to {args.out} (kernel '{kernels.ACTIVE}')")
    proj = report["intensity"]["qkv_projection"]["intensity"]
    qk = report["intensity"]["qk"]["intensity"]
    print(f"qkv projection intensity {_fmt(proj)} flop/byte "
          f"(reference {_fmt(REFERENCE_INTENSITIES['qkv_projection'])})")
    print(f"attention qk intensity {_fmt(qk)} flop/byte "
          f"(reference {_fmt(REFERENCE_INTENSITIES['qk'])})")
    if w.dataflow == "naive":
        from .perf import naive_head_traffic

        share = naive_head_traffic(w.dims, w.tl_prefill, w.weight_format, w.act_format)
        print(f"per-head activation share: {100.0 * share['activation_share']:.2f}%")
    else:
        base = naive_v1(w.dims, w.tl_prefill, w.tl_decode, INT8, ACT_INT8)
        for phase in ("prefill", "decode"):
            ours = phase_traffic(w, phase)["total"]
            theirs = phase_traffic(base, phase)["total"]
            cut = 100.0 * (1.0 - ours / theirs)
            print(f"{phase} bytes vs naive int8 baseline: {cut:.2f}% lower")
        wcut = 1 - weight_bytes_per_token(w.dims, w.weight_format) / weight_bytes_per_token(
            w.dims, INT8
        )
        print(f"per-token weight bytes vs int8: {100.0 * float(wcut):.2f}% lower")
    if "efficiency" in report:
        print(f"ipj: {_fmt(report['efficiency']['ipj'])} tokens/(ppl*J)")
    return 0


def cmd_dse(args) -> int:
    cfg = _load_json(args.config)
    check_keys(
        cfg,
        required=("workload", "p_l_choices", "p_h_choices", "tl_sa_choices", "power", "ppl_table"),
        optional=("hardware",),
        what="dse config",
    )
    power_cfg = cfg["power"]
    check_keys(power_cfg, required=(), optional=("a_stl", "a_hp", "a_kv", "p_c"), what="power config")
    table = {}
    for row in cfg["ppl_table"]:
        check_keys(row, required=("s_a", "tl_sa", "ppl"), optional=(), what="ppl table row")
        table[(float(row["s_a"]), int(row["tl_sa"]))] = float(row["ppl"])
    space = DseSpace(
        workload=_workload_from_config(cfg["workload"]),
        hw_base=_hardware_from_config(cfg.get("hardware")),
        power=PowerCoeffs(**{k: power_cfg[k] for k in power_cfg}),
        p_l_choices=tuple(int(v) for v in cfg["p_l_choices"]),
        p_h_choices=tuple(int(v) for v in cfg["p_h_choices"]),
        tl_sa_choices=tuple(int(v) for v in cfg["tl_sa_choices"]),
        ppl_table=table,
    )
    result = grid_search(space, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    dump_json(result, os.path.join(args.out, "dse_result.json"))
    header = ("p_l", "p_h", "tl_sa", "feasible", "boundary", "ppl", "power_w", "latency_s", "loss")
    rows = [tuple(e[k] for k in header) for e in result["evaluations"]]
    _write_csv(os.path.join(args.out, "dse_grid.csv"), header, rows)
    best = result["best"]
    print(
        f"best: p_l={best['p_l']} p_h={best['p_h']} tl_sa={best['tl_sa']} "
        f"loss={_fmt(best['loss'])} (ppl {_fmt(best['ppl'])}, "
        f"{_fmt(best['power_w'])} W, {_fmt(best['latency_s'])} s/token)"
    )
    n_boundary = sum(1 for e in result["evaluations"] if e["boundary"])
    n_infeasible = sum(1 for e in result["evaluations"] if not e["feasible"])
    print(
        f"{len(result['evaluations'])} points: {n_infeasible} infeasible "
        f"({n_boundary} exactly on the balance boundary), "
        f"{len(result['pareto'])} on the pareto front"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenet-sim",
        description="Ternary LUT inference simulator and analytic cost models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="pack ternary weights into a .twd file")
    p.add_argument("--in", dest="infile", required=True, help="input matrix JSON")
    p.add_argument("--out", required=True, help="output .twd path")
    p.add_argument("--quantize", action="store_true",
                   help="input holds real values; quantize before packing")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("unpack", help="unpack a .twd file to JSON")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("asm", help="assemble an engine program")
    p.add_argument("--program", required=True)
    p.add_argument("--out", help="write the instruction listing as JSON")
    p.set_defaults(func=cmd_asm)

    p = sub.add_parser("run", help="execute an engine program")
    p.add_argument("--program", required=True)
    p.add_argument("--state", required=True, help="JSON file with buffers to preload")
    p.add_argument("--out", help="write the output matrix as JSON")
    p.add_argument("--trace", help="write the execution trace as JSONL")
    p.add_argument("--cycles", action="store_true", help="annotate the trace with cycle counts")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run randomized self checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", choices=SUITES,
                   help="run one suite (repeatable); default all")
    p.add_argument("--corrupt-stl", action="store_true",
                   help="inject a lookup-table fault (the stl suite must then fail)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("report", help="analytic traffic/latency/energy report")
    p.add_argument("--config", required=True, help="workload config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ppl", type=float, help="measured perplexity for IPJ")
    p.add_argument("--tokens", type=int, help="token count for IPJ (default tl_decode)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dse", help="grid search over lane counts and attention budget")
    p.add_argument("--config", required=True, help="design-space config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: TENET_SIM_THREADS, else 1)")
    p.set_defaults(func=cmd_dse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ComputeError as e:
        print(f"compute error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
