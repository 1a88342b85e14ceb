#!/usr/bin/env python
# this_file: tests/test_synthgen.py
"""Tests for the synthetic source and target domains."""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.spatial.distance import cdist

import actkit
from actkit.diagnostics import prior_gap
from actkit.synthgen import (
    SyntheticConfig,
    class_geometry,
    generate_source,
    generate_target,
    read_dataset,
    read_dataset_csv,
    source_priors,
    target_priors,
    uniform_ball,
    write_dataset,
    write_dataset_csv,
)


class TestConfig:
    """Test configuration checks."""

    def test_defaults(self):
        """Test the reference setting."""
        cfg = SyntheticConfig()
        assert (cfg.d, cfg.n_classes, cfg.n_s, cfg.n_t, cfg.n_test) == (20, 4, 2000, 40, 400)
        assert SyntheticConfig(K=3).n_classes == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_classes": 1},
            {"d": 3, "n_classes": 4},
            {"class_radius": 1.5, "center_separation": 3.0},
            {"shift_rho": -0.1},
            {"n_classes": 4, "shift_eta": 0.25},
        ],
    )
    def test_invalid(self, kwargs):
        """Test rejected settings."""
        with pytest.raises(ValidationError):
            SyntheticConfig(**kwargs)


class TestGeometry:
    """Test class axes, shifts and priors."""

    def test_orthogonal_centers(self):
        """Test that centers lie on orthogonal axes at the chosen separation."""
        cfg = SyntheticConfig(d=7, n_classes=4, center_separation=2.5)
        geometry = class_geometry(cfg)
        np.testing.assert_allclose(geometry.centers @ geometry.centers.T, 6.25 * np.eye(4), atol=1e-12)

    def test_shift_lengths(self):
        """Test that every class moves by exactly ρ."""
        geometry = class_geometry(SyntheticConfig(shift_rho=0.3))
        np.testing.assert_allclose(np.linalg.norm(geometry.shifts, axis=1), 0.3)

    def test_target_priors(self):
        """Test the alternating ±η pattern on the simplex."""
        cfg = SyntheticConfig(n_classes=4, shift_eta=0.05)
        np.testing.assert_allclose(source_priors(cfg), 0.25)
        np.testing.assert_allclose(target_priors(cfg), [0.3, 0.2, 0.3, 0.2])
        odd = target_priors(SyntheticConfig(n_classes=3, shift_eta=0.1))
        assert odd.sum() == pytest.approx(1.0)
        assert np.all(odd > 0)

    def test_uniform_ball(self, rng):
        """Test radius bound and the degenerate ball."""
        points = uniform_ball(rng, 500, 3, 2.0)
        assert np.all(np.linalg.norm(points, axis=1) <= 2.0 + 1e-12)
        np.testing.assert_array_equal(uniform_ball(rng, 4, 3, 0.0), np.zeros((4, 3)))


class TestGenerate:
    """Test the generated datasets."""

    def test_same_seed_same_data(self):
        """Test determinism per seed."""
        cfg = SyntheticConfig(n_s=50, seed=9)
        a, b = generate_source(cfg), generate_source(cfg)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert not np.array_equal(a.samples, generate_source(cfg, seed=10).samples)

    def test_zero_radius(self):
        """Test that every class-k sample equals its center."""
        cfg = SyntheticConfig(class_radius=0.0, n_s=40)
        data = generate_source(cfg)
        centers = class_geometry(cfg).centers
        np.testing.assert_array_equal(data.samples, centers[data.labels])

    def test_class_counts(self):
        """Test counts within three standard deviations of the multinomial mean."""
        data = generate_source(SyntheticConfig(n_s=1000, n_classes=4, seed=3))
        counts = data.class_counts()
        sd = np.sqrt(1000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 250) <= 3 * sd)

    def test_labels_start_at_zero(self):
        """Test that the first class is label 0 and the last is K-1."""
        cfg = SyntheticConfig(n_s=400, n_classes=4, class_radius=0.0, seed=5)
        data = generate_source(cfg)
        assert sorted(set(data.labels.tolist())) == [0, 1, 2, 3]
        first = data.samples[data.labels == 0]
        np.testing.assert_allclose(first, np.broadcast_to(class_geometry(cfg).centers[0], first.shape))
        assert target_priors(cfg.model_copy(update={"shift_eta": 0.1}))[0] > source_priors(cfg)[0]

    def test_classes_disjoint(self):
        """Test a positive gap between samples of different classes."""
        data = generate_source(SyntheticConfig(d=5, n_classes=3, n_s=300, class_radius=1.0, center_separation=2.2))
        for i in range(3):
            for j in range(i + 1, 3):
                gap = cdist(data.samples[data.labels == i], data.samples[data.labels == j]).min()
                assert gap > 0.0

    def test_target_split(self):
        """Test sizes and shifted class means."""
        cfg = SyntheticConfig(n_t=40, n_test=400, class_radius=0.0, shift_rho=0.5)
        split = generate_target(cfg)
        assert len(split.labeled) == 40
        assert len(split.test) == 400
        geometry = class_geometry(cfg)
        np.testing.assert_allclose(split.test.samples, (geometry.centers + geometry.shifts)[split.test.labels])

    def test_prior_gap_tracks_eta(self):
        """Test that the measured gap on 10⁴ samples is close to η."""
        cfg = SyntheticConfig(d=4, n_classes=2, n_s=10_000, n_test=10_000, shift_eta=0.1, seed=4)
        source = generate_source(cfg)
        target = generate_target(cfg).test
        assert prior_gap(source.labels, target.labels, 2) == pytest.approx(0.1, abs=0.03)


class TestDatasetFiles:
    """Test binary and CSV dataset files."""

    def test_binary_round_trip(self, tmp_path):
        """Test bit-identical samples and labels."""
        data = generate_source(SyntheticConfig(n_s=30))
        loaded = read_dataset(write_dataset(tmp_path / "source.bin", data.samples, data.labels, data.n_classes))
        np.testing.assert_array_equal(loaded.samples, data.samples)
        np.testing.assert_array_equal(loaded.labels, data.labels)
        assert loaded.n_classes == 4

    def test_unlabeled_file(self, tmp_path):
        """Test that a file without labels refuses to become a labeled set."""
        loaded = read_dataset(write_dataset(tmp_path / "x.bin", np.ones((3, 2)), None, 2))
        assert loaded.labels is None
        with pytest.raises(actkit.DataError):
            loaded.labeled()

    def test_bad_files(self, tmp_path):
        """Test missing, foreign and truncated files."""
        with pytest.raises(actkit.DataError):
            read_dataset(tmp_path / "absent.bin")
        foreign = tmp_path / "foreign.bin"
        foreign.write_bytes(b"something else\n")
        with pytest.raises(actkit.DataError):
            read_dataset(foreign)
        path = write_dataset(tmp_path / "t.bin", np.ones((3, 2)), np.zeros(3), 1)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(actkit.DataError):
            read_dataset(path)

    def test_csv(self, tmp_path):
        """Test the CSV export and its header."""
        data = generate_source(SyntheticConfig(d=3, n_classes=2, n_s=10))
        path = write_dataset_csv(tmp_path / "source.csv", data)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "x0,x1,x2,label"
        loaded = read_dataset_csv(path, n_classes=2)
        np.testing.assert_array_equal(loaded.samples, data.samples)
        np.testing.assert_array_equal(loaded.labels, data.labels)
