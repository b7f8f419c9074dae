#!/usr/bin/env python3
"""
Test that configuration loading works: ringsynth.conf defaults, environment
overrides and validation.
"""

import os
import sys
import tempfile

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from bin.config import (DEFAULTS, ConfigError, PipelineConfig, find_config_file, load_config_value,
                        parse_bound_range, parse_optimizations)
from bin.machine import Timing


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in list(DEFAULTS) + ["RINGSYNTH_BASE_DIR"]:
        monkeypatch.delenv(key, raising=False)


def test_shipped_config():
    print("🧪 Testing conf/ringsynth.conf...")
    path = find_config_file()
    assert path is not None and path.endswith(os.path.join("conf", "ringsynth.conf"))
    config = PipelineConfig.from_config()
    assert (config.bound_min, config.bound_max) == (2, 6)
    assert config.solver == "builtin"
    assert config.timing == Timing.SYNCHRONOUS
    assert config.optimizations == ["hardcode-token", "hub"]
    assert list(config.bounds) == [2, 3, 4, 5, 6]
    print("✅ Shipped config test passed!")


def test_environment_overrides_file(monkeypatch):
    monkeypatch.setenv("BOUND_MAX", "9")
    monkeypatch.setenv("TIMING", "interleaving")
    config = PipelineConfig.from_config()
    assert config.bound_max == 9
    assert config.timing == Timing.INTERLEAVING
    assert load_config_value("BOUND_MIN") == "2"


def test_base_dir_config(monkeypatch):
    print("🧪 Testing RINGSYNTH_BASE_DIR...")
    with tempfile.TemporaryDirectory() as temp_dir:
        os.makedirs(os.path.join(temp_dir, "conf"))
        with open(os.path.join(temp_dir, "conf", "ringsynth.conf"), "w") as f:
            f.write("# test\nBOUND_MIN=3\nSOLVER=external:z3 -in\nOPTIMIZATIONS=gr1-direct\n")
        monkeypatch.setenv("RINGSYNTH_BASE_DIR", temp_dir)
        config = PipelineConfig.from_config()
        assert config.bound_min == 3
        assert config.solver == "external:z3 -in"
        assert config.optimizations == ["gr1-direct"]
        assert config.bound_max == 6, "keys missing from the file fall back to the defaults"
        options = config.validate().synth_options()
        assert options.external_command == "z3 -in"
        assert options.gr1_direct and not options.hardcode_token
        assert "BOUND_MIN" not in os.environ, "reading the file must not touch the environment"
    print("✅ Base directory config test passed!")


def test_bad_values(monkeypatch):
    monkeypatch.setenv("SOLVER_TIMEOUT", "soon")
    with pytest.raises(ConfigError):
        PipelineConfig.from_config()
    monkeypatch.setenv("SOLVER_TIMEOUT", "60")
    monkeypatch.setenv("TIMING", "whenever")
    with pytest.raises(ConfigError):
        PipelineConfig.from_config()


def test_parse_bound_range():
    assert parse_bound_range("2..6") == (2, 6)
    assert parse_bound_range("4") == (4, 4)
    with pytest.raises(ConfigError):
        parse_bound_range("two..six")


def test_parse_optimizations():
    assert parse_optimizations("gr1-direct, hub") == ["gr1-direct", "hub"]
    assert parse_optimizations("none") == []
    assert parse_optimizations("") == []
    with pytest.raises(ConfigError):
        parse_optimizations("hub,fast")


def test_validate():
    print("🧪 Testing config validation...")
    bad = [
        PipelineConfig(bound_min=5, bound_max=3),
        PipelineConfig(bound_min=1),
        PipelineConfig(solver="z3"),
        PipelineConfig(solver="external:  "),
        PipelineConfig(timeout=0),
        PipelineConfig(jobs=0),
    ]
    for config in bad:
        with pytest.raises(ConfigError):
            config.validate()
    config = PipelineConfig(emit_smt="out/smt", verbose=True).validate()
    options = config.synth_options()
    assert options.smt_dir == "out/smt" and options.verbose
    assert options.hardcode_token and not options.gr1_direct
    print("✅ Config validation test passed!")


def main():
    """Run all tests"""
    print("🚀 Starting configuration tests...")
    test_shipped_config()
    test_parse_bound_range()
    test_parse_optimizations()
    test_validate()
    print("\n🎉 All configuration tests passed!")


if __name__ == "__main__":
    main()
