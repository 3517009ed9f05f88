"""
Tests for config.factory module.
"""

from unittest.mock import MagicMock, patch

import pytest


def run_config(**overrides):
    from config import RunConfig

    values = {"mode": "simulate"}
    values.update(overrides)
    return RunConfig(**values)


class TestNormalizeArgv:
    def test_positional_mode(self):
        from config.factory import normalize_argv

        assert normalize_argv(["simulate", "--reps", "5"]) == ["--mode", "simulate", "--reps", "5"]

    def test_flags_untouched(self):
        from config.factory import normalize_argv

        assert normalize_argv(["--mode", "match"]) == ["--mode", "match"]
        assert normalize_argv([]) == []


class TestMetaArgs:
    def test_profile_from_cli(self, clean_env):
        from config.factory import _parse_meta_args

        clean_env.setenv("MEPSCORE_PROFILE", "env-profile")
        profile, rest = _parse_meta_args(["--profile", "quick", "--reps", "3"])
        assert profile == "quick"
        assert rest == ["--reps", "3"]

    def test_profile_from_env(self, clean_env):
        from config.factory import _parse_meta_args

        clean_env.setenv("MEPSCORE_PROFILE", "district")
        profile, rest = _parse_meta_args(["--profile=ignored-form", "-v"])
        assert rest == ["-v"]
        assert _parse_meta_args(["-v"])[0] == "district"

    def test_default_profile(self, clean_env):
        from config.factory import _parse_meta_args

        assert _parse_meta_args([])[0] == "default"


class TestKnownKeys:
    def test_accepts_fields(self):
        from config.factory import check_known_keys

        check_known_keys({"caliper": 0.5, "reps": 10}, "test")

    def test_sample_profile_file_uses_known_keys(self, test_data_dir):
        from config.factory import check_known_keys
        from utils.file_utils import load_structured_file

        document = load_structured_file(test_data_dir / "configs" / "sample_config.yaml")
        check_known_keys(document["defaults"], "defaults")
        for name, profile in document["profiles"].items():
            check_known_keys({k: v for k, v in profile.items() if k != "inherits"}, name)

    def test_rejects_unknown(self):
        from config.factory import check_known_keys
        from utils.exceptions import UsageError

        with pytest.raises(UsageError, match="model_string"):
            check_known_keys({"model_string": "x"}, "profile 'default'")


class TestProfileResolution:
    def test_missing_config_file_uses_defaults(self):
        from config.arguments import ARGUMENT_DEFAULTS
        from config.factory import resolve_profile_and_env
        from profile_config.exceptions import ConfigNotFoundError

        with patch("config.factory.ProfileConfigResolver") as resolver_class:
            instance = MagicMock()
            instance.resolve.side_effect = ConfigNotFoundError("No config")
            resolver_class.return_value = instance
            merged = resolve_profile_and_env("default", env={})

        assert merged == ARGUMENT_DEFAULTS

    def test_missing_profile(self):
        from config.factory import resolve_profile_and_env
        from profile_config.exceptions import ProfileNotFoundError
        from utils.exceptions import UsageError

        with patch("config.factory.ProfileConfigResolver") as resolver_class:
            resolver_class.return_value.resolve.side_effect = ProfileNotFoundError("nope")
            with pytest.raises(UsageError, match="profile not found: nope"):
                resolve_profile_and_env("nope", env={})

    def test_precedence_defaults_profile_env(self):
        from config.factory import resolve_profile_and_env

        with patch("config.factory.ProfileConfigResolver") as resolver_class:
            resolver_class.return_value.resolve.return_value = {"reps": 50, "caliper": 0.5}
            merged = resolve_profile_and_env("quick", env={"reps": 10})

        assert merged["reps"] == 10
        assert merged["caliper"] == 0.5
        assert merged["seed"] == 7

    def test_unknown_profile_key(self):
        from config.factory import resolve_profile_and_env
        from utils.exceptions import UsageError

        with patch("config.factory.ProfileConfigResolver") as resolver_class:
            resolver_class.return_value.resolve.return_value = {"headless": True}
            with pytest.raises(UsageError, match="headless"):
                resolve_profile_and_env("default", env={})


class TestValidateConfig:
    def test_simulate_defaults_are_valid(self):
        from config import validate_config

        config = validate_config(run_config())
        assert config.caliper_values() == (0.5, 0.7, 1.0)
        assert config.kinds() == ("ml", "rc", "naive")

    def test_missing_mode(self):
        from config import validate_config
        from utils.exceptions import UsageError

        with pytest.raises(UsageError, match="no mode given"):
            validate_config(run_config(mode=None))

    def test_unknown_ps_kind(self):
        from config import validate_config
        from utils.exceptions import UsageError

        with pytest.raises(UsageError, match="probit"):
            validate_config(run_config(ps_kinds="ml,probit"))

    def test_data_mode_needs_input(self, tmp_path):
        from config import validate_config
        from utils.exceptions import UsageError

        with pytest.raises(UsageError, match="needs --input"):
            validate_config(run_config(mode="fit-ps"))
        with pytest.raises(UsageError, match="input file not found"):
            validate_config(run_config(mode="fit-ps", input=str(tmp_path / "none.csv")))

    def test_data_mode_with_input(self, sample_csv, csem_dir):
        from config import validate_config

        config = validate_config(run_config(mode="match", input=str(sample_csv), csem_dir=str(csem_dir)))
        assert config.needs_input

    def test_missing_csem_dir(self, tmp_path):
        from config import validate_config
        from utils.exceptions import UsageError

        with pytest.raises(UsageError, match="CSEM directory"):
            validate_config(run_config(csem_dir=str(tmp_path / "absent")))

    @pytest.mark.parametrize(
        "overrides",
        [
            {"caliper": 0.0},
            {"max_controls": 0},
            {"max_treated": 0},
            {"workers": 0},
            {"reps": 1},
            {"calipers": "0.5,abc"},
            {"calipers": "0.5,-1"},
        ],
    )
    def test_rejected_values(self, overrides):
        from config import validate_config
        from utils.exceptions import UsageError

        with pytest.raises(UsageError):
            validate_config(run_config(**overrides))

    def test_as_dict_drops_profile(self):
        config = run_config()
        record = config.as_dict()
        assert "profile" not in record
        assert record["mode"] == "simulate"


@pytest.mark.integration
class TestParseConfig:
    def test_flags_over_environment(self, clean_env):
        from config import parse_config
        from profile_config.exceptions import ConfigNotFoundError

        clean_env.setenv("MEPSCORE_REPS", "40")
        clean_env.setenv("MEPSCORE_SEED", "3")
        with patch("config.factory.ProfileConfigResolver") as resolver_class:
            resolver_class.return_value.resolve.side_effect = ConfigNotFoundError("No config")
            config = parse_config(["simulate", "--reps", "12"])

        assert config.mode == "simulate"
        assert config.reps == 12
        assert config.seed == 3
        assert config.profile == "default"
