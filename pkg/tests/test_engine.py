import numpy as np
import pytest

from tenet_sim.engine import (
    AsmError,
    EngineFault,
    EngineState,
    FMvMul,
    Halt,
    REGISTERS,
    SWr,
    assemble,
    execute,
    hmvm_first_product,
    hmvm_standard,
    hmvm_transposed,
    hmvm_transposed_first,
)
from tenet_sim.errors import ShapeError
from tenet_sim.perf import HardwareConfig
from tenet_sim.quant import quantize_weights_ternary

PROGRAM = """\
# two-stage multiply
s_wr KT_ITERS 32
s_wr NT_ITERS 12
s_wr MODE 0
s_wr M_ITERS 4
fmvmul stl@0x0 hp@0x100
halt
"""


def _tern(rng, k, n):
    return quantize_weights_ternary(rng.normal(size=(k, n)))


def test_assemble_basics():
    prog = assemble(PROGRAM)
    assert [type(i) for i in prog] == [SWr] * 4 + [FMvMul, Halt]
    assert prog[0].reg == "KT_ITERS" and prog[0].value == 32
    fm = prog[4]
    assert fm.en_stl and fm.weight_addr == 0
    assert fm.en_hp and fm.kv_addr == 0x100
    assert set(i.reg for i in prog[:4]) == set(REGISTERS)


def test_assemble_hex_and_decimal():
    prog = assemble("s_wr M_ITERS 0x10\nfmvmul stl@255\nhalt\n")
    assert prog[0].value == 16
    assert prog[1].weight_addr == 255 and not prog[1].en_hp


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("s_wr BOGUS 1\nhalt\n", "line 1"),
        ("s_wr KT_ITERS\nhalt\n", "line 1"),
        ("s_wr KT_ITERS twelve\nhalt\n", "immediate"),
        ("fmvmul stl@zz\nhalt\n", "clause"),
        ("fmvmul stl@0 stl@4\nhalt\n", "duplicate"),
        ("jump 3\nhalt\n", "opcode"),
        ("s_wr KT_ITERS 1\n", "halt"),
        ("", "empty"),
        ("halt extra\n", "line 1"),
    ],
)
def test_assemble_errors(text, fragment):
    with pytest.raises(AsmError) as exc:
        assemble(text)
    assert fragment in str(exc.value)


def test_halt_must_be_last_executed():
    prog = assemble("halt\nhalt\n")
    with pytest.raises(EngineFault) as exc:
        execute(prog, EngineState())
    assert "after halt" in str(exc.value)


def test_first_product_matches_quantized_matmul():
    rng = np.random.default_rng(70)
    x = rng.normal(size=(6, 40))
    a = _tern(rng, 40, 9)
    p = hmvm_first_product(x, a)
    from tenet_sim.quant import quantize_activation_int8, reference_linear

    for i in range(6):
        qa = quantize_activation_int8(x[i])
        ref, rescale = reference_linear(qa, a)
        assert np.array_equal(p[i], ref.astype(np.float64) * rescale)


def test_transposed_first_is_exact_transpose():
    rng = np.random.default_rng(71)
    for _ in range(30):
        m = int(rng.integers(1, 7))
        k = int(rng.integers(1, 50))
        n = int(rng.integers(1, 20))
        x = rng.normal(size=(m, k))
        a = _tern(rng, k, n)
        assert np.array_equal(hmvm_transposed_first(x, a), hmvm_first_product(x, a).T)


def test_duality_with_second_operand():
    rng = np.random.default_rng(72)
    for _ in range(40):
        m = int(rng.integers(1, 7))
        k = int(rng.integers(1, 50))
        n = int(rng.integers(1, 20))
        c = int(rng.integers(1, 9))
        x = rng.normal(size=(m, k))
        a = _tern(rng, k, n)
        b = rng.normal(size=(m, c))
        left = hmvm_transposed(x, a, b)
        right = np.ascontiguousarray(hmvm_first_product(x, a).T) @ b
        assert np.array_equal(left, right)


def test_second_operand_shape_checked():
    rng = np.random.default_rng(73)
    x = rng.normal(size=(3, 10))
    a = _tern(rng, 10, 4)
    with pytest.raises(ShapeError):
        hmvm_standard(x, a, rng.normal(size=(5, 2)))
    with pytest.raises(ShapeError):
        hmvm_transposed(x, a, rng.normal(size=(4, 2)))


def _loaded_state(rng, m=4, k=32, n=12, c=3):
    x = rng.normal(size=(m, k))
    a = _tern(rng, k, n)
    b = rng.normal(size=(m, c))
    state = EngineState()
    state.load_vectors(x)
    state.load_weights(0, a)
    state.load_kv(0x100, b)
    return state, x, a, b


def test_interpreter_matches_library_standard():
    rng = np.random.default_rng(74)
    state, x, a, b = _loaded_state(rng)
    bk = np.random.default_rng(75).normal(size=(12, 5))
    state.load_kv(0x100, bk)
    execute(assemble(PROGRAM), state)
    assert np.array_equal(state.output(), hmvm_standard(x, a, bk))


def test_interpreter_matches_library_transposed():
    rng = np.random.default_rng(76)
    state, x, a, b = _loaded_state(rng)
    text = PROGRAM.replace("MODE 0", "MODE 1")
    execute(assemble(text), state)
    assert np.array_equal(state.output(), hmvm_transposed(x, a, b))


def test_bypass_paths():
    rng = np.random.default_rng(77)
    state, x, a, b = _loaded_state(rng)
    # lookup stage only
    execute(assemble("s_wr KT_ITERS 32\ns_wr NT_ITERS 12\ns_wr MODE 0\ns_wr M_ITERS 4\nfmvmul stl@0\nhalt\n"), state)
    assert np.array_equal(state.output(), hmvm_first_product(x, a))
    # dense stage only, transposed feed
    state2 = EngineState()
    state2.load_vectors(x)
    state2.load_kv(0x100, b)
    execute(assemble("s_wr KT_ITERS 32\ns_wr NT_ITERS 12\ns_wr MODE 1\ns_wr M_ITERS 4\nfmvmul hp@0x100\nhalt\n"), state2)
    # contiguous copy so both sides take the identical matmul path
    assert np.array_equal(state2.output(), np.ascontiguousarray(x.T) @ b)


def test_trace_emit_rows_and_source():
    rng = np.random.default_rng(78)
    state, x, a, b = _loaded_state(rng)
    trace = execute(assemble(PROGRAM.replace("MODE 0", "MODE 1")), state)
    fm = [e for e in trace if e["op"] == "fmvmul"][0]
    emits = [e for e in trace if e["op"] == "emit_row"]
    assert fm["mode"] == "transposed"
    assert len(emits) == fm["rows_out"] == 12
    assert all(e["source"] == "first_product_col" for e in emits)
    assert "cycles" not in fm


def test_trace_cycles_with_hardware():
    rng = np.random.default_rng(79)
    state, x, a, b = _loaded_state(rng)
    state.load_kv(0x100, rng.normal(size=(12, 5)))
    trace = execute(assemble(PROGRAM), state, hw=HardwareConfig())
    fm = [e for e in trace if e["op"] == "fmvmul"][0]
    assert fm["cycles"] >= 1


@pytest.mark.parametrize(
    "patch,fragment",
    [
        ("s_wr MODE 2", "MODE"),
        ("s_wr M_ITERS 9", "M_ITERS"),
        ("s_wr KT_ITERS 31", "KT_ITERS"),
        ("s_wr NT_ITERS 11", "registers say"),
        ("fmvmul stl@0x8", "weight region"),
        ("fmvmul stl@0x0 hp@0x9", "kv region"),
    ],
)
def test_execute_faults(patch, fragment):
    rng = np.random.default_rng(80)
    state, *_ = _loaded_state(rng)
    if patch.startswith("s_wr"):
        reg = patch.split()[1]
        text = "\n".join(p if not p.startswith(f"s_wr {reg}") else patch for p in PROGRAM.splitlines()) + "\n"
    else:
        text = "\n".join(p if not p.startswith("fmvmul") else patch for p in PROGRAM.splitlines()) + "\n"
    with pytest.raises(EngineFault) as exc:
        execute(assemble(text), state)
    assert fragment in str(exc.value)


def test_second_stage_width_fault():
    rng = np.random.default_rng(83)
    state, *_ = _loaded_state(rng)
    # kv region still holds the (4, 3) transposed-mode operand
    with pytest.raises(EngineFault) as exc:
        execute(assemble(PROGRAM), state)
    assert "kv region rows 4 vs first product width 12" in str(exc.value)


def test_empty_vector_buffer_faults():
    with pytest.raises(EngineFault) as exc:
        execute(assemble("fmvmul stl@0\nhalt\n"), EngineState())
    assert "vector buffer" in str(exc.value)


def test_output_capacity_enforced():
    rng = np.random.default_rng(81)
    x = rng.normal(size=(4, 32))
    a = _tern(rng, 32, 12)
    state = EngineState(obuffer_words=10)
    state.load_vectors(x)
    state.load_weights(0, a)
    with pytest.raises(EngineFault) as exc:
        execute(assemble("s_wr KT_ITERS 32\ns_wr NT_ITERS 12\ns_wr MODE 0\ns_wr M_ITERS 4\nfmvmul stl@0\nhalt\n"), state)
    assert "overflow" in str(exc.value)


def test_region_bounds_checked():
    state = EngineState(wbuffer_trits=16)
    rng = np.random.default_rng(82)
    from tenet_sim.errors import ValidationError

    with pytest.raises(ValidationError):
        state.load_weights(0, _tern(rng, 5, 4))
