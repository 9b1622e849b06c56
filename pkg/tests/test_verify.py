"""The conformance suite must pass on the pristine library — and, just as
important, actually notice when something is wrong.  The mutant tests
tamper with a fault-table row or a gadget implementation and require the
corresponding check to fail with a pointed detail string."""

import dataclasses

import pytest

from qecqpe import verify
from qecqpe.steane import rotation_fault_table, transversal_ops


@pytest.fixture(scope="module")
def report():
    return verify.run_all(seed=0)


class TestPristine:
    def test_every_check_passes(self, report):
        assert all(r.ok for r in report), [
            (r.name, r.detail) for r in report if not r.ok
        ]

    def test_check_census(self, report):
        assert [r.name for r in report] == [
            "fault-table",
            "encodings",
            "transversal-cliffords",
            "parity-flags",
            "error-correction",
            "direct-rotations",
            "resource-states",
            "teleported-rotations",
            "byproduct-paths",
        ]

    def test_fault_table_reports_full_row_count(self, report):
        detail = next(r.detail for r in report if r.name == "fault-table")
        assert "45/45" in detail

    def test_rotation_sweeps_are_exhaustive(self, report):
        by_name = {r.name: r.detail for r in report}
        # 64 grid angles x two preparation modes
        assert by_name["direct-rotations"].startswith("128/128")
        assert by_name["teleported-rotations"].startswith("128/128")
        # every ladder path of every angle, both modes
        assert by_name["byproduct-paths"].startswith("520/520")

    def test_seed_does_not_matter(self):
        r = verify.check_teleported_rotations(seed=2026)
        assert r.ok


class TestMutants:
    def test_tampered_propagation_is_flagged(self):
        rows = list(rotation_fault_table())
        victim = rows[20]
        rows[20] = dataclasses.replace(victim, propagated="X0")
        result = verify.check_fault_table(rows)
        assert not result.ok
        assert f"slot {victim.slot} {victim.error}" in result.detail

    def test_tampered_sign_flip_is_flagged(self):
        rows = list(rotation_fault_table())
        rows[3] = dataclasses.replace(rows[3], flips_angle=rows[3].flips_angle ^ 1)
        result = verify.check_fault_table(rows)
        assert not result.ok
        assert "sign flip" in result.detail

    def test_tampered_syndrome_is_flagged(self):
        rows = list(rotation_fault_table())
        rows[40] = dataclasses.replace(rows[40], syndrome="1(1)11")
        result = verify.check_fault_table(rows)
        assert not result.ok
        assert "syndrome" in result.detail

    def test_dropped_row_breaks_census(self):
        result = verify.check_fault_table(list(rotation_fault_table())[1:])
        assert not result.ok
        assert "census" in result.detail

    def test_wrong_phase_gate_is_detected(self, monkeypatch):
        # swap the logical S for its adjoint; the Clifford check must notice
        def swapped(block, name):
            if name in ("S", "Sdg"):
                name = "Sdg" if name == "S" else "S"
            return transversal_ops(block, name)

        monkeypatch.setattr(verify, "transversal_ops", swapped)
        result = verify.check_cliffords()
        assert not result.ok
        assert "S" in result.detail
