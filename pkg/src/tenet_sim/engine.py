"""Two-stage matrix engine: ternary first product, then a dense second.

The first product P = X @ A runs through the LUT path row by row in
standard mode, or builds P^T column by column in transposed mode; the
optional second stage multiplies by a dense buffer B. A tiny ISA drives
the same code paths through an interpreter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ComputeError, ShapeError, ValidationError
from .quant import TernaryTensor, quantize_activation_int8
from .stl import stl_gemv

REGISTERS = ("KT_ITERS", "NT_ITERS", "MODE", "M_ITERS")
MODE_STANDARD = 0
MODE_TRANSPOSED = 1


class AsmError(ValidationError):
    """Malformed program text; message carries the 1-based line number."""


class EngineFault(ComputeError):
    """Runtime violation inside the interpreter."""


@dataclass(frozen=True)
class SWr:
    reg: str
    value: int
    line: int


@dataclass(frozen=True)
class FMvMul:
    en_stl: bool
    weight_addr: int
    en_hp: bool
    kv_addr: int
    line: int


@dataclass(frozen=True)
class Halt:
    line: int


_CLAUSE_RE = re.compile(r"^(stl|hp)@(0x[0-9a-fA-F]+|\d+)$")


def assemble(text: str) -> list:
    """Parse program text into instruction records.

    Grammar: `s_wr <REG> <imm>`, `fmvmul [stl@<addr>] [hp@<addr>]`,
    `halt`; `#` starts a comment. The program must end in `halt` and may
    not contain one earlier.
    """
    program: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op = parts[0]
        if op == "s_wr":
            if len(parts) != 3:
                raise AsmError(f"line {lineno}: s_wr takes a register and an immediate")
            reg = parts[1]
            if reg not in REGISTERS:
                raise AsmError(f"line {lineno}: unknown register {reg!r}")
            try:
                value = int(parts[2], 0)
            except ValueError:
                raise AsmError(f"line {lineno}: bad immediate {parts[2]!r}") from None
            program.append(SWr(reg=reg, value=value, line=lineno))
        elif op == "fmvmul":
            en_stl = en_hp = False
            w_addr = kv_addr = 0
            for clause in parts[1:]:
                m = _CLAUSE_RE.match(clause)
                if m is None:
                    raise AsmError(f"line {lineno}: bad fmvmul clause {clause!r}")
                addr = int(m.group(2), 0)
                if m.group(1) == "stl":
                    if en_stl:
                        raise AsmError(f"line {lineno}: duplicate stl clause")
                    en_stl, w_addr = True, addr
                else:
                    if en_hp:
                        raise AsmError(f"line {lineno}: duplicate hp clause")
                    en_hp, kv_addr = True, addr
            program.append(
                FMvMul(en_stl=en_stl, weight_addr=w_addr, en_hp=en_hp, kv_addr=kv_addr, line=lineno)
            )
        elif op == "halt":
            if len(parts) != 1:
                raise AsmError(f"line {lineno}: halt takes no operands")
            program.append(Halt(line=lineno))
        else:
            raise AsmError(f"line {lineno}: unknown opcode {op!r}")
    if not program:
        raise AsmError("empty program")
    if not isinstance(program[-1], Halt):
        raise AsmError(f"program must end in halt (last opcode on line {program[-1].line})")
    return program


class EngineState:
    """Host-visible machine state: buffers, registers, and outputs."""

    def __init__(
        self,
        vbuffer_words: int = 1 << 20,
        wbuffer_trits: int = 1 << 26,
        kv_words: int = 1 << 22,
        obuffer_words: int = 1 << 22,
    ):
        self.vbuffer_words = vbuffer_words
        self.wbuffer_trits = wbuffer_trits
        self.kv_words = kv_words
        self.obuffer_words = obuffer_words
        self.regs = {name: 0 for name in REGISTERS}
        self.x: np.ndarray | None = None
        self.weights: dict[int, TernaryTensor] = {}
        self.kv: dict[int, np.ndarray] = {}
        self.out_rows: list[np.ndarray] = []
        self._out_words = 0

    def load_vectors(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError("vector buffer holds a 2-D matrix")
        if x.size > self.vbuffer_words:
            raise ValidationError(f"{x.size} words exceed the {self.vbuffer_words}-word vector buffer")
        self.x = x

    def load_weights(self, addr: int, w: TernaryTensor) -> None:
        if addr < 0 or addr + w.rows * w.cols > self.wbuffer_trits:
            raise ValidationError(f"weight region at {addr} exceeds the {self.wbuffer_trits}-trit buffer")
        self.weights[addr] = w

    def load_kv(self, addr: int, m: np.ndarray) -> None:
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError("kv regions hold 2-D matrices")
        if addr < 0 or addr + m.size > self.kv_words:
            raise ValidationError(f"kv region at {addr} exceeds the {self.kv_words}-word buffer")
        self.kv[addr] = m

    def output(self) -> np.ndarray:
        if not self.out_rows:
            return np.zeros((0, 0))
        return np.concatenate(self.out_rows, axis=0)

    def _emit(self, rows: np.ndarray) -> None:
        if self._out_words + rows.size > self.obuffer_words:
            raise EngineFault(
                f"output of {rows.size} words overflows the {self.obuffer_words}-word buffer"
            )
        self.out_rows.append(rows)
        self._out_words += rows.size


def hmvm_first_product(x: np.ndarray, a: TernaryTensor) -> np.ndarray:
    """P = X @ A row by row: quantize each row, LUT GEMV, rescale."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != a.rows:
        raise ShapeError(f"input shape {x.shape} vs {a.rows} weight rows")
    out = np.zeros((x.shape[0], a.cols))
    for i in range(x.shape[0]):
        qa = quantize_activation_int8(x[i])
        y, _ = stl_gemv(qa, a)
        out[i] = y.astype(np.float64) * (qa.scale * a.scale)
    return out


def hmvm_transposed_first(x: np.ndarray, a: TernaryTensor) -> np.ndarray:
    """P^T built column-wise: one LUT pass per weight column.

    Element (j, i) comes from the same single-column dot product as
    element (i, j) of the standard first product, so the two agree
    bitwise.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != a.rows:
        raise ShapeError(f"input shape {x.shape} vs {a.rows} weight rows")
    m = x.shape[0]
    qas = [quantize_activation_int8(x[i]) for i in range(m)]
    out = np.zeros((a.cols, m))
    for j in range(a.cols):
        col = a.slice_cols(j, j + 1)
        for i, qa in enumerate(qas):
            y, _ = stl_gemv(qa, col)
            out[j, i] = float(y[0]) * (qa.scale * a.scale)
    return out


def _second_product(first: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    if b is None:
        return first
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != first.shape[1]:
        raise ShapeError(f"second operand {b.shape} vs first product width {first.shape[1]}")
    return first @ b


def hmvm_standard(x: np.ndarray, a: TernaryTensor, b: np.ndarray | None = None) -> np.ndarray:
    """(X @ A) @ B, or just the first product when B is omitted."""
    return _second_product(hmvm_first_product(x, a), b)


def hmvm_transposed(x: np.ndarray, a: TernaryTensor, b: np.ndarray | None = None) -> np.ndarray:
    """(X @ A)^T @ B via the column-wise first product."""
    return _second_product(hmvm_transposed_first(x, a), b)


def execute(program: list, state: EngineState, hw=None) -> list[dict]:
    """Run an assembled program; returns the trace event list.

    Faults (bad register values, missing regions, shape mismatches,
    buffer overflow) raise EngineFault with the source line.
    """
    trace: list[dict] = []
    halted = False
    for pc, inst in enumerate(program):
        if halted:
            raise EngineFault(f"line {inst.line}: instruction after halt")
        if isinstance(inst, SWr):
            state.regs[inst.reg] = inst.value
            trace.append({"pc": pc, "line": inst.line, "op": "s_wr", "reg": inst.reg, "value": inst.value})
        elif isinstance(inst, Halt):
            halted = True
            trace.append({"pc": pc, "line": inst.line, "op": "halt"})
        elif isinstance(inst, FMvMul):
            trace.extend(_run_fmvmul(pc, inst, state, hw))
        else:
            raise EngineFault(f"unknown instruction object {inst!r}")
    if not halted:
        raise EngineFault("program ended without executing halt")
    return trace


def _run_fmvmul(pc: int, inst: FMvMul, state: EngineState, hw) -> list[dict]:
    kt = state.regs["KT_ITERS"]
    nt = state.regs["NT_ITERS"]
    mode = state.regs["MODE"]
    m = state.regs["M_ITERS"]
    where = f"line {inst.line}"
    if mode not in (MODE_STANDARD, MODE_TRANSPOSED):
        raise EngineFault(f"{where}: MODE must be 0 or 1, got {mode}")
    if state.x is None:
        raise EngineFault(f"{where}: vector buffer is empty")
    if m <= 0 or m > state.x.shape[0]:
        raise EngineFault(f"{where}: M_ITERS {m} outside the loaded {state.x.shape[0]} rows")
    if kt != state.x.shape[1]:
        raise EngineFault(f"{where}: KT_ITERS {kt} vs loaded row length {state.x.shape[1]}")
    xm = state.x[:m]
    transposed = mode == MODE_TRANSPOSED

    if inst.en_stl:
        a = state.weights.get(inst.weight_addr)
        if a is None:
            raise EngineFault(f"{where}: no weight region at {inst.weight_addr:#x}")
        if a.rows != kt or a.cols != nt:
            raise EngineFault(
                f"{where}: weight region is {a.rows}x{a.cols}, registers say {kt}x{nt}"
            )
        first = hmvm_transposed_first(xm, a) if transposed else hmvm_first_product(xm, a)
    else:
        first = np.ascontiguousarray(xm.T) if transposed else xm

    if inst.en_hp:
        b = state.kv.get(inst.kv_addr)
        if b is None:
            raise EngineFault(f"{where}: no kv region at {inst.kv_addr:#x}")
        if b.shape[0] != first.shape[1]:
            raise EngineFault(
                f"{where}: kv region rows {b.shape[0]} vs first product width {first.shape[1]}"
            )
        result = first @ b
    else:
        result = first

    state._emit(result)
    events: list[dict] = [{
        "pc": pc,
        "line": inst.line,
        "op": "fmvmul",
        "mode": "transposed" if transposed else "standard",
        "en_stl": inst.en_stl,
        "en_hp": inst.en_hp,
        "weight_addr": inst.weight_addr,
        "kv_addr": inst.kv_addr,
        "rows_out": int(result.shape[0]),
        "cols_out": int(result.shape[1]),
    }]
    if hw is not None:
        from .perf import attention_latency_cycles, linear_latency_cycles

        stl_cyc = m * linear_latency_cycles(nt, kt, hw) if inst.en_stl else 0
        hp_cyc = (
            result.shape[0] * attention_latency_cycles(first.shape[1], result.shape[1], hw)
            if inst.en_hp
            else 0
        )
        events[0]["cycles"] = int(max(stl_cyc, hp_cyc))
    source = "first_product_col" if transposed else "first_product_row"
    for j in range(result.shape[0]):
        events.append({"pc": pc, "line": inst.line, "op": "emit_row", "index": j, "source": source})
    return events
