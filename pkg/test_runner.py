"""
测试脚本
端到端验证各子命令：python test_runner.py 或 pytest
"""
import json
import os

import pytest

from actions import ExperimentResult, get_action_class, list_available_actions
from actions.factorize import read_decomposition_file
from config import ExperimentConfig
from core.atoms import standard_atom
from actions.commutator_bench import DOMINATION_SLACK
from core.errors import ConfigError
from core.ledger_store import LedgerStore
from core.measure_geometry import Interval
from core.step_functions import StepFunction
from runner import ExperimentRunner, exit_code_for, main


def tiny_config(tmp_path, **kwargs) -> ExperimentConfig:
    params = dict(
        lambda_list=[1.0], p_list=[1.0], battery_size=4, symbol_count=2, resolution=32,
        operator_cells=8, k_max=1, scan_grid=4, workers=1, output_dir=str(tmp_path),
    )
    params.update(kwargs)
    return ExperimentConfig(**params).validate()


def run(tmp_path, subcommand, payload=None, **kwargs):
    store = LedgerStore(str(tmp_path))
    result = ExperimentRunner(tiny_config(tmp_path, **kwargs), store).run(subcommand, payload)
    return result, store


def test_registry():
    assert list_available_actions() == ["battery", "kernel-scan", "atom-demo", "factorize", "commutator-bench"]
    with pytest.raises(ValueError):
        get_action_class("fetch")


def test_battery_is_deterministic(tmp_path):
    first, _ = run(tmp_path / "a", "battery")
    second, _ = run(tmp_path / "b", "battery")
    assert first.ok and second.ok
    name = "battery_lam1_p1.json"
    with open(first.evidence[name], "rb") as f1, open(second.evidence[name], "rb") as f2:
        assert f1.read() == f2.read()

    with open(first.evidence[name], "r", encoding="utf-8") as f:
        payload = json.load(f)
    assert len(payload["atoms"]) == 4
    assert len(payload["symbols"]) == 2


def test_summary_and_index_written(tmp_path):
    result, store = run(tmp_path, "battery", {"size": "4"})
    runs = store.list_runs()
    assert runs[-1]["status"] == "success"
    summary_path = os.path.join(store.run_dir(runs[-1]["id"]), "summary.json")
    with open(summary_path, "r", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["ok"] is True
    assert summary["run_id"] == runs[-1]["id"]
    assert "timing_ms" not in summary
    assert "kernel_cache" in summary


def test_kernel_scan(tmp_path):
    result, _ = run(tmp_path, "kernel-scan", {"grid": "4"})
    assert result.ok
    assert result.data["rows"] == 16
    entry = result.data["lambda=1"]
    assert 0.0 < entry["K1"] < 1.0 and 0.0 < entry["K2"] < 0.5
    header, rows = LedgerStore.read_csv(result.evidence["kernel_scan.csv"])
    assert header[:3] == ["lambda", "x", "y"]
    assert all(row[1] != row[2] for row in rows)


def test_atom_demo(tmp_path):
    result, _ = run(tmp_path, "atom-demo", {"cases": "3"}, p_list=[0.9])
    assert result.ok, result.failures
    entry = result.data["lambda=1,p=0.9"]
    assert entry["cases"] == 3
    assert entry["max_reconstruction_error"] <= 1e-12


def test_factorize_from_input_file(tmp_path):
    atom = standard_atom(Interval(1.0, 0.25), 1.0, 1.0)
    (tmp_path / "atom.txt").write_text(atom.profile.to_text(), encoding="utf-8")
    (tmp_path / "input.txt").write_text("# alpha center radius profile\n1.0 1.0 0.25 atom.txt\n", encoding="utf-8")

    result, _ = run(tmp_path / "out", "factorize", {"input": str(tmp_path / "input.txt")})
    assert result.error_code != "EXCEPTION", result.error_message
    if result.error_code in (None, "CERTIFICATE_FAILURE"):
        assert os.path.exists(result.evidence["factorize_levels.csv"])
        assert os.path.exists(result.evidence["factorize_lam1_p1.json"])


def test_commutator_bench_skips_p_equal_one(tmp_path):
    result, _ = run(tmp_path, "commutator-bench")
    assert result.ok
    assert result.data == {}


def test_commutator_bench_below_one(tmp_path):
    result, _ = run(tmp_path, "commutator-bench", {"atoms": "1"}, p_list=[0.9], symbol_count=1)
    assert result.ok, result.failures
    entry = result.data["lambda=1,p=0.9"]
    assert entry["q"] > 2.0
    assert 0.0 < entry["max_ratio"] < float("inf")
    assert 0.0 < entry["max_domination_ratio"] <= DOMINATION_SLACK
    assert entry["domination_violations"] == 0
    header, rows = LedgerStore.read_csv(result.evidence["commutator_bench.csv"])
    assert len(rows) == 1


def test_read_decomposition_file(tmp_path):
    atom = standard_atom(Interval(3.0, 1.0), 0.9, 1.0)
    (tmp_path / "a.txt").write_text(atom.profile.to_text(), encoding="utf-8")
    good = tmp_path / "good.txt"
    good.write_text("0.5 3.0 1.0 a.txt\n\n-2 3.0 1.0 a.txt  # 第二项\n", encoding="utf-8")
    decomposition = read_decomposition_file(str(good), 0.9, 1.0)
    assert decomposition.coefficients.tolist() == [0.5, -2.0]
    assert decomposition.terms[0].atom.profile == atom.profile
    assert decomposition.terms[0].atom.support == Interval(3.0, 1.0)

    bad = tmp_path / "bad.txt"
    bad.write_text("0.5 3.0 a.txt\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_decomposition_file(str(bad), 0.9, 1.0)
    bad.write_text("x 3.0 1.0 a.txt\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_decomposition_file(str(bad), 0.9, 1.0)

    # 支撑比声明的区间大
    bad.write_text("0.5 3.0 0.5 a.txt\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_decomposition_file(str(bad), 0.9, 1.0)
    # 高度加倍后超过 m_λ(I)^{-1/p}
    doubled = tmp_path / "doubled.txt"
    doubled.write_text(atom.profile.scale(2.0).to_text(), encoding="utf-8")
    bad.write_text("0.5 3.0 1.0 doubled.txt\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_decomposition_file(str(bad), 0.9, 1.0)


def test_factorize_rejects_non_atom_input(tmp_path):
    chi = StepFunction.indicator(0.75, 1.25, 0.5)
    (tmp_path / "chi.txt").write_text(chi.to_text(), encoding="utf-8")
    (tmp_path / "input.txt").write_text("1.0 1.0 0.25 chi.txt\n", encoding="utf-8")
    result, _ = run(tmp_path / "out", "factorize", {"input": str(tmp_path / "input.txt")})
    assert not result.ok
    assert result.error_code == ConfigError.code
    assert exit_code_for(result) == 2


def test_exit_codes():
    assert exit_code_for(ExperimentResult(ok=True, action="battery")) == 0
    assert exit_code_for(ExperimentResult(ok=False, action="battery", error_code="CERTIFICATE_FAILURE")) == 1
    assert exit_code_for(ExperimentResult(ok=False, action="factorize", error_code=ConfigError.code)) == 2


def test_main_rejects_invalid_p(tmp_path):
    assert main(["battery", "--lambda", "1", "--p", "0.5", "--output-dir", str(tmp_path)]) == 2
    assert main(["battery", "--config", str(tmp_path / "missing.conf"), "--output-dir", str(tmp_path)]) == 2


def run_all_tests():
    """运行所有测试"""
    print("=" * 60)
    print("Bessel Hardy-space Factorization 测试")
    print("=" * 60)

    code = pytest.main(["-q", os.path.dirname(os.path.abspath(__file__))])

    print("\n" + "=" * 60)
    print("测试完成" if code == 0 else f"测试失败（退出码 {code}）")
    print("=" * 60)
    return code


if __name__ == "__main__":
    raise SystemExit(run_all_tests())
