import json
import math
from pathlib import Path

import pytest

import awkd

CONFIGS = Path(__file__).resolve().parents[2] / "configs"
DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def test_version_and_kinds():
    assert awkd.__version__ == "0.1.0"
    assert set(awkd.list_kinds()) >= {"appendix_a", "rate", "safety"}


def test_entropy_and_divergences():
    assert awkd.entropy([1.0, 0.0, 0.0]) == 0.0
    assert awkd.entropy([1 / 3] * 3) == pytest.approx(math.log(3), abs=1e-12)
    assert awkd.kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0


def test_two_teacher_ensemble():
    w = awkd.inverse_entropy_weights([0.68, 1.52])
    assert w == pytest.approx([0.69, 0.31], abs=5e-3)
    q = awkd.weighted_ensemble([0.5, 0.5], [[0.8, 0.15, 0.05], [0.4, 0.35, 0.25]])
    assert q == pytest.approx([0.6, 0.25, 0.15], abs=1e-12)


def test_clip_normalize_bounds():
    w = awkd.clip_normalize([10.0, 1.0, 1.0], 0.1, 0.6)
    assert sum(w) == pytest.approx(1.0, abs=1e-12)
    assert max(w) <= 0.6 + 1e-12
    with pytest.raises(awkd.AwkdError) as info:
        awkd.clip_normalize([1.0, 1.0], 0.6, 0.9)
    assert info.value.code == "InfeasibleBounds"


def test_uniform_unified_weight_is_exact():
    third = [1 / 3] * 3
    assert awkd.unified_weight(third, third, third) == [1 / 3] * 3


def test_validate_and_run(tmp_path):
    meta = awkd.validate(str(CONFIGS / "appendix_a.json"))
    assert meta["kind"] == "appendix_a"
    summary = awkd.run(str(CONFIGS / "appendix_a.json"), out=str(tmp_path))
    assert set(summary) == {"config_hash", "kind", "assertions"}
    assert summary["config_hash"] == meta["config_hash"]
    assert all(a["pass"] for a in summary["assertions"])
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["config_hash"] == meta["config_hash"]


def test_config_errors_raise():
    with pytest.raises(awkd.AwkdError) as info:
        awkd.validate(str(DATA / "infeasible_bounds.json"))
    assert info.value.code == "InfeasibleBounds"
