import pytest

from core import selftest
from core.selftest import (CheckResult, check_c2_sign, check_limits, check_rho_monotone, check_tree_bp,
                           check_zero_element, run_selftest, sample_channel_points)
from handlers import selftest_handlers
from handlers.selftest_handlers import SelftestHandlers
from utils.errors import NumericalGateError
from utils.helpers import derive_rng
from utils.messages import MessageTemplates


def test_channel_points_cover_requested_ranges():
    points = sample_channel_points(derive_rng(9), 50)
    assert all(0.1 <= p.sigma_w <= 20.0 for p in points)
    assert all(0.0 <= p.x0 <= 15.0 for p in points)
    assert {p.prior.q for p in points} <= {0.02, 0.05}


def test_limits():
    passed, detail = check_limits()
    assert passed, detail


def test_zero_element():
    passed, detail = check_zero_element()
    assert passed, detail


def test_rho_monotone():
    passed, detail = check_rho_monotone()
    assert passed, detail


def test_c2_sign_resolves_negative():
    passed, detail = check_c2_sign(sample_channel_points(derive_rng(2), 4))
    assert passed, detail


def test_tree_bp_few_instances():
    passed, detail = check_tree_bp(seed=11, instances=3)
    assert passed, detail


def test_raising_check_is_reported_failed(monkeypatch):
    def broken():
        raise NumericalGateError("boom")

    monkeypatch.setattr(selftest, "check_limits", broken)
    monkeypatch.setattr(selftest, "check_oracle", lambda points: (True, "skipped"))
    monkeypatch.setattr(selftest, "check_bht_reduction", lambda points: (True, "skipped"))
    monkeypatch.setattr(selftest, "check_c2_sign", lambda points: (True, "skipped"))
    monkeypatch.setattr(selftest, "check_tree_bp", lambda seed, instances: (True, "skipped"))
    results = run_selftest(1, quick=True)
    failed = [r for r in results if not r.passed]
    assert [r.name for r in failed] == ["noise limits"]
    assert "NumericalGateError" in failed[0].detail


@pytest.mark.slow
def test_quick_selftest_passes():
    results = run_selftest(20121, quick=True)
    assert all(r.passed for r in results), [r for r in results if not r.passed]


class TestSelftestHandler:
    @pytest.fixture
    def handler(self, store):
        return SelftestHandlers(store, MessageTemplates())

    def test_exit_zero_when_all_pass(self, handler, monkeypatch, capsys):
        monkeypatch.setattr(selftest_handlers, "run_selftest",
                            lambda seed, quick: [CheckResult("a", True, "fine")])
        assert handler.selftest_command({"seed": 1, "quick": True}) == 0
        assert "All checks passed" in capsys.readouterr().out

    def test_exit_two_on_failure(self, handler, monkeypatch, capsys):
        monkeypatch.setattr(selftest_handlers, "run_selftest",
                            lambda seed, quick: [CheckResult("a", True, "fine"), CheckResult("b", False, "off")])
        assert handler.selftest_command({"seed": 1}) == 2
        assert "[FAIL] b" in capsys.readouterr().out
