#!/usr/bin/env python
# this_file: tests/test_config.py
"""Tests for experiment files."""

from pathlib import Path

import pytest

import actkit
from actkit.config import DEFAULT_AUGMENTATIONS, load_config, parse_augmentations, parse_config, parse_lines

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.conf"


class TestParseLines:
    """Test the line-level reader."""

    def test_comments_and_blanks(self):
        """Test that comments and blank lines are skipped."""
        values, lines = parse_lines("# header\n\nseed = 4  # trailing\nK=3\n")
        assert values == {"seed": "4", "K": "3"}
        assert lines == {"seed": 3, "K": 4}

    def test_unknown_key_names_line(self):
        """Test that an unknown key reports its line."""
        with pytest.raises(actkit.ConfigurationError) as info:
            parse_lines("seed = 1\n\nlearning_rat = 0.1\n")
        assert info.value.line == 3
        assert info.value.key == "learning_rat"
        assert str(info.value).startswith("line 3:")

    def test_duplicate_key(self):
        """Test that a repeated key reports the second occurrence."""
        with pytest.raises(actkit.ConfigurationError) as info:
            parse_lines("seed = 1\nepochs = 3\nepochs = 4\n")
        assert info.value.line == 3
        assert "line 2" in str(info.value)

    def test_missing_equals(self):
        """Test that a line without '=' is refused."""
        with pytest.raises(actkit.ConfigurationError) as info:
            parse_lines("seed = 1\nepochs 3\n")
        assert info.value.line == 2


class TestParseConfig:
    """Test validation into an experiment."""

    def test_seed_only(self):
        """Test that every other key has a default."""
        config = parse_config("seed = 7\n")
        assert config.seed == 7
        assert config.lam == 5.0
        assert config.optimizer == "adam"
        assert config.learning_rate == 3e-3
        assert config.augmentations == DEFAULT_AUGMENTATIONS
        assert config.augmentation_set().m == 22

    def test_missing_seed(self):
        """Test the required key message."""
        with pytest.raises(actkit.ConfigurationError, match="missing required key 'seed'"):
            parse_config("epochs = 3\n")

    def test_bad_value_names_line(self):
        """Test that an unparsable value reports its line."""
        with pytest.raises(actkit.ConfigurationError) as info:
            parse_config("seed = 1\nepochs = many\n")
        assert info.value.line == 2
        assert info.value.key == "epochs"

    def test_out_of_range_value(self):
        """Test range checks on individual keys."""
        with pytest.raises(actkit.ConfigurationError) as info:
            parse_config("seed = 1\nlambda = -2\n")
        assert info.value.key == "lambda"

    @pytest.mark.parametrize(
        "text",
        [
            "seed = 1\nwidth = 4\n",
            "seed = 1\nb1 = 2\nb2 = 1\n",
            "seed = 1\nepsilon_min = 3\n",
            "seed = 1\nclass_radius = 2\n",
            "seed = 1\nbatch_size = 1\n",
        ],
    )
    def test_inconsistent_settings(self, text):
        """Test cross-key checks."""
        with pytest.raises(actkit.ConfigurationError):
            parse_config(text)

    def test_nested_configs(self):
        """Test the derived synthetic, training and encoder settings."""
        config = parse_config("seed = 2\nd = 6\nK = 3\nwidth = 8\nd_star = 3\nlambda = 0\noptimizer = sgd\n")
        assert config.synthetic().n_classes == 3
        assert config.train_config().lam == 0.0
        assert config.train_config().optimizer == "sgd"
        encoder = config.initial_encoder()
        assert encoder.widths == (6, 8, 8, 3)


class TestAugmentationSpecs:
    """Test the augmentation list syntax."""

    def test_parse(self):
        """Test kind:param:seed triples."""
        assert parse_augmentations("noise:0.1:1, mask:0.2:2") == (("noise", 0.1, 1), ("mask", 0.2, 2))

    def test_seed_range(self):
        """Test that first-last expands to one transform per seed."""
        specs = parse_augmentations("noise:0.3:4-6, smooth:0.5:9")
        assert specs == (("noise", 0.3, 4), ("noise", 0.3, 5), ("noise", 0.3, 6), ("smooth", 0.5, 9))
        assert parse_augmentations("mask:0.2:3-3") == (("mask", 0.2, 3),)

    def test_default_family(self):
        """Test twenty noise offsets, one mask and one smoothing map."""
        kinds = [kind for kind, _, _ in parse_augmentations(DEFAULT_AUGMENTATIONS)]
        assert kinds == ["noise"] * 20 + ["mask", "smooth"]
        seeds = [seed for _, _, seed in parse_augmentations(DEFAULT_AUGMENTATIONS)]
        assert len(set(seeds)) == 22

    @pytest.mark.parametrize("text", ["", "noise:0.1", "blur:0.1:1", "noise:x:1", "noise:0.1:5-2", "noise:0.1:a-b"])
    def test_invalid(self, text):
        """Test malformed lists."""
        with pytest.raises(ValueError):
            parse_augmentations(text)

    def test_invalid_in_file(self):
        """Test that a bad augmentation list is a configuration error."""
        with pytest.raises(actkit.ConfigurationError):
            parse_config("seed = 1\naugmentations = noise:0.1\n")


class TestLoadConfig:
    """Test reading experiment files."""

    def test_reference_file(self):
        """Test the shipped reference experiment."""
        config = load_config(DEFAULT_CONFIG)
        assert config.seed == 0
        assert (config.d, config.n_classes, config.width, config.depth, config.d_star) == (20, 4, 64, 2, 8)
        assert config.epochs == 200
        assert config.augmentations == DEFAULT_AUGMENTATIONS

    def test_missing_file(self, tmp_path):
        """Test that an unreadable file is a configuration error."""
        with pytest.raises(actkit.ConfigurationError):
            load_config(tmp_path / "absent.conf")
