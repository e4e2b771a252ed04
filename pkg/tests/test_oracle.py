import itertools

import pytest
from conftest import brute_force_pressure, brute_force_utilization

from xpucost.dataset import GeneratorConfig, generate_functions
from xpucost.errors import ConfigError, InvalidFunctionError
from xpucost.ir import GraphFunction, TensorShape, parse_function, validate
from xpucost.oracle import (
    MachineConfig,
    cost_report,
    register_pressure,
    slot_counts,
    vector_alu_utilization,
)


def fn(body: str, args: str = "%arg0: tensor<16xf32>", rets: str = "tensor<16xf32>",
       returns: str = "%0") -> GraphFunction:
    return parse_function(f"func @t({args}) -> ({rets}) {{\n{body}\n  return {returns}\n}}")


class TestRegisterPressure:
    def test_binary_add_peaks_at_def(self, machine):
        # two args plus the result are live at the defining op
        f = fn(
            "  %0 = xpu.add %arg0, %arg1 : tensor<16xf32>",
            args="%arg0: tensor<16xf32>, %arg1: tensor<16xf32>",
        )
        assert register_pressure(f, machine) == 3
        assert brute_force_pressure(f, machine) == 3

    def test_copy_chain_holds_two(self, machine):
        f = fn(
            "  %0 = xpu.copy %arg0 : tensor<16xf32>\n"
            "  %1 = xpu.copy %0 : tensor<16xf32>\n"
            "  %2 = xpu.copy %1 : tensor<16xf32>\n"
            "  %3 = xpu.copy %2 : tensor<16xf32>",
            returns="%3",
        )
        assert register_pressure(f, machine) == 2
        assert brute_force_pressure(f, machine) == 2

    def test_arg_to_return_is_one(self, machine):
        # the body must be non-empty, so route past a dead copy: a value that
        # is never read and never returned occupies nothing
        f = fn("  %0 = xpu.copy %arg0 : tensor<16xf32>", returns="%arg0")
        assert register_pressure(f, machine) == 1

    def test_footprint_is_ceiling(self, machine):
        # tensor<17xf32> is 68 bytes -> 2 registers of 64 bytes
        f = fn(
            "  %0 = xpu.copy %arg0 : tensor<17xf32>",
            args="%arg0: tensor<17xf32>",
            rets="tensor<17xf32>",
        )
        assert register_pressure(f, machine) == 4  # two values of footprint 2

    def test_monotone_under_returned_append(self, machine):
        base = fn(
            "  %0 = xpu.add %arg0, %arg1 : tensor<16xf32>",
            args="%arg0: tensor<16xf32>, %arg1: tensor<16xf32>",
        )
        extended = parse_function(
            "func @t(%arg0: tensor<16xf32>, %arg1: tensor<16xf32>)"
            " -> (tensor<16xf32>, tensor<16xf32>) {\n"
            "  %0 = xpu.add %arg0, %arg1 : tensor<16xf32>\n"
            "  %1 = xpu.relu %0 : tensor<16xf32>\n"
            "  return %0, %1\n}"
        )
        assert register_pressure(extended, machine) >= register_pressure(base, machine)

    def test_invalid_function_rejected(self, machine):
        s = TensorShape((1,), "f32")
        f = GraphFunction("bad", (("%arg0", s),), (), ("%arg0",))
        with pytest.raises(InvalidFunctionError):
            register_pressure(f, machine)
        with pytest.raises(InvalidFunctionError):
            vector_alu_utilization(f, machine)


class TestUtilization:
    def test_all_vector_ops(self, machine):
        f = fn(
            "  %0 = xpu.mult %arg0, %arg1 : tensor<16xf32>\n"
            "  %1 = xpu.add %0, %arg1 : tensor<16xf32>",
            args="%arg0: tensor<16xf32>, %arg1: tensor<16xf32>",
            returns="%1",
        )
        assert vector_alu_utilization(f, machine) == 1.0

    def test_no_vector_ops(self, machine):
        f = fn(
            "  %0 = xpu.load %arg0 : tensor<16xf32>\n"
            "  %1 = xpu.store %0 : tensor<16xf32>",
            returns="%1",
        )
        assert vector_alu_utilization(f, machine) == 0.0

    def test_slot_weighting(self, machine):
        # mult (1 slot, vector) + matmul (4 slots, not vector) -> 1/5
        f = parse_function(
            "func @t(%arg0: tensor<4x4xf32>, %arg1: tensor<4x4xf32>) -> (tensor<4x4xf32>) {\n"
            "  %0 = xpu.mult %arg0, %arg1 : tensor<4x4xf32>\n"
            "  %1 = xpu.matmul %0, %arg1 : (tensor<4x4xf32>, tensor<4x4xf32>) -> tensor<4x4xf32>\n"
            "  return %1\n}"
        )
        assert vector_alu_utilization(f, machine) == pytest.approx(0.2)
        assert slot_counts(f, machine) == (1, 5)
        assert brute_force_utilization(f, machine) == pytest.approx(0.2)

    def test_bounds_and_extremes(self, machine):
        cfg = GeneratorConfig(num_samples=2, op_count_range=(1, 8), seed=5)
        for f in generate_functions(cfg, 100):
            u = vector_alu_utilization(f, machine)
            assert 0.0 <= u <= 1.0
            all_vector = all(
                op.opcode.removeprefix("xpu.") in machine.vector_alu_ops for op in f.body
            )
            assert (u == 1.0) == all_vector


class TestScheduleSensitivity:
    @staticmethod
    def _dependency_respecting_orders(f: GraphFunction):
        producer = {op.result_id: i for i, op in enumerate(f.body)}
        deps = [
            {producer[o] for o in op.operand_ids if o in producer} for op in f.body
        ]
        for perm in itertools.permutations(range(len(f.body))):
            position = {op_i: slot for slot, op_i in enumerate(perm)}
            if all(position[d] < position[i] for i in range(len(f.body)) for d in deps[i]):
                yield GraphFunction(
                    f.name, f.args, tuple(f.body[i] for i in perm), f.returns
                )

    def test_all_permutations_match_brute_force(self, machine):
        cfg = GeneratorConfig(num_samples=2, op_count_range=(2, 6), seed=17)
        distinct = 0
        for f in generate_functions(cfg, 25):
            pressures = set()
            for g in self._dependency_respecting_orders(f):
                assert validate(g) == []
                p = register_pressure(g, machine)
                assert p == brute_force_pressure(g, machine)
                pressures.add(p)
            distinct += len(pressures) > 1
        assert distinct > 0  # reordering really can change the answer

    def test_rename_invariance(self, machine):
        f = parse_function(
            "func @t(%arg0: tensor<64xf32>) -> (tensor<64xf32>) {\n"
            "  %5 = xpu.relu %arg0 : tensor<64xf32>\n"
            "  %2 = xpu.sigmoid %5 : tensor<64xf32>\n"
            "  return %2\n}"
        )
        g = parse_function(
            "func @t(%arg0: tensor<64xf32>) -> (tensor<64xf32>) {\n"
            "  %0 = xpu.relu %arg0 : tensor<64xf32>\n"
            "  %1 = xpu.sigmoid %0 : tensor<64xf32>\n"
            "  return %1\n}"
        )
        assert register_pressure(f, machine) == register_pressure(g, machine)
        assert vector_alu_utilization(f, machine) == vector_alu_utilization(g, machine)


class TestMachineConfig:
    def test_text_round_trip(self, machine):
        again = MachineConfig.from_text(machine.to_text())
        assert again == machine

    def test_partial_text_keeps_defaults(self):
        m = MachineConfig.from_text("register_width_bytes = 32\nslot_cost.matmul = 8\n")
        assert m.register_width_bytes == 32
        assert m.slot_cost["matmul"] == 8
        assert m.slot_cost["add"] == 1

    @pytest.mark.parametrize(
        "text",
        [
            "register_width_bytes = 0",
            "vector_alu_ops = add,warp_shuffle",
            "slot_cost.matmul = -1",
            "slot_cost.unknown_op = 2",
            "nonsense line",
            "mystery_key = 3",
        ],
    )
    def test_bad_config_rejected(self, text):
        with pytest.raises(ConfigError):
            MachineConfig.from_text(text)

    def test_cost_report_bundles_both(self, machine):
        f = fn("  %0 = xpu.relu %arg0 : tensor<16xf32>")
        report = cost_report(f, machine)
        assert report.register_pressure == 2
        assert report.xpu_utilization == 1.0
