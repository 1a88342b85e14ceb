#!/usr/bin/env python
# this_file: tests/test_encoder.py
"""Tests for the norm-constrained encoder."""

import math

import numpy as np
import pytest

import actkit
from actkit.autodiff import Matrix, Tape, evaluate_graph, finite_difference_check
from actkit.encoder import (
    EncoderParams,
    forward,
    init_params,
    kappa,
    lipschitz_ratio,
    load_checkpoint,
    param_inputs,
    project_kappa,
    record_forward,
    register_params,
    save_checkpoint,
)


class TestInit:
    """Test parameter initialization."""

    def test_shapes(self):
        """Test layer shapes for d=5, W=9, L=3, d*=2."""
        params = init_params(5, 2, 9, 3, seed=0)
        assert params.widths == (5, 9, 9, 9, 2)
        assert params.depth == 3
        assert [w.shape for w in params.weights] == [(9, 5), (9, 9), (9, 9), (2, 9)]
        assert [b.shape for b in params.biases] == [(9,), (9,), (9,)]

    def test_same_seed_same_params(self):
        """Test bit-identical initialization per seed."""
        a = init_params(4, 3, 6, 2, seed=11)
        b = init_params(4, 3, 6, 2, seed=11)
        c = init_params(4, 3, 6, 2, seed=12)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_invalid_architecture(self):
        """Test that narrow or zero-depth networks are rejected."""
        with pytest.raises(actkit.ConfigurationError):
            init_params(10, 2, 8, 2, seed=0)
        with pytest.raises(actkit.ConfigurationError):
            init_params(4, 2, 8, 0, seed=0)

    def test_non_finite_params_rejected(self):
        """Test that NaN weights raise NumericalError."""
        params = init_params(3, 2, 4, 1, seed=0)
        arrays = params.arrays()
        arrays[0] = arrays[0].copy()
        arrays[0][0, 0] = np.nan
        with pytest.raises(actkit.NumericalError):
            params.with_arrays(arrays)


class TestForward:
    """Test evaluation and the output projection."""

    def test_unit_sphere_outputs(self, small_encoder, rng):
        """Test that B1 = B2 = 1 puts every output on the unit sphere."""
        out = forward(small_encoder, rng.normal(size=(20, 6)))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0)

    def test_single_sample(self, small_encoder, rng):
        """Test that a 1-D input gives a 1-D output equal to the batch row."""
        x = rng.normal(size=(4, 6))
        np.testing.assert_allclose(forward(small_encoder, x[2]), forward(small_encoder, x)[2])

    def test_norm_interval(self, rng):
        """Test outputs land in [B1, B2] for a wider interval."""
        params = init_params(6, 3, 8, 2, seed=1, b1=0.5, b2=2.0)
        norms = np.linalg.norm(forward(params, rng.normal(size=(50, 6)) * 10.0), axis=1)
        assert np.all(norms >= 0.5 - 1e-12)
        assert np.all(norms <= 2.0 + 1e-12)

    def test_wrong_width_input(self, small_encoder):
        """Test that a wrong feature count raises ShapeError."""
        with pytest.raises(actkit.ShapeError):
            forward(small_encoder, np.zeros((2, 5)))

    def test_tape_matches_numpy(self, small_encoder, rng):
        """Test the recorded network against the numpy forward pass."""
        x = rng.normal(size=(5, 6))
        tape = Tape()
        ids = register_params(tape, small_encoder)
        xs = tape.constant("x", (5, 6))
        w = tape.constant("w", (5, 3))
        out = record_forward(tape, ids, xs)
        tape.set_output(tape.inner(out, w))
        weights = rng.normal(size=(5, 3))
        value = evaluate_graph(tape, [*param_inputs(small_encoder), Matrix(x), Matrix(weights)])
        assert value == pytest.approx(float(np.sum(forward(small_encoder, x) * weights)), abs=1e-12)
        for leaf in ids:
            assert finite_difference_check(tape, leaf) < 1e-4


class TestKappa:
    """Test the Lipschitz certificate."""

    def test_kappa_formula(self):
        """Test κ on a hand-built single-layer network."""
        params = EncoderParams(
            weights=(np.array([[1.0, -2.0], [0.5, 0.5]]), np.array([[3.0, 1.0]])),
            biases=(np.array([0.5, 0.0]),),
        )
        # ‖A_1‖∞ = 4, ‖(A_0, b_0)‖∞ = 3.5
        assert kappa(params) == pytest.approx(14.0)

    def test_small_layers_count_as_one(self):
        """Test that layers with ∞-norm below one contribute a factor of 1."""
        params = EncoderParams(
            weights=(np.array([[0.1, 0.1]]), np.array([[0.5]])),
            biases=(np.array([0.1]),),
        )
        assert kappa(params) == pytest.approx(0.5)

    def test_certificate_holds_in_inf_norm(self, rng):
        """Test ‖φ(x) − φ(y)‖∞ ≤ κ ‖x − y‖∞ on random pairs and nets."""
        for seed in range(20):
            params = init_params(5, 4, 8, 1 + seed % 3, seed=seed)
            x = rng.normal(size=(1000, 5))
            y = rng.normal(size=(1000, 5))
            assert lipschitz_ratio(params, x, y) <= kappa(params) * (1 + 1e-12)

    def test_certificate_on_unit_cube_in_two_norm(self, rng):
        """Test ‖φ(x) − φ(y)‖₂ ≤ κ ‖x − y‖₂ for 1000 pairs in [0,1]^d on 20 nets."""
        violations = 0
        for seed in range(20):
            params = init_params(6, 4, 12, 1 + seed % 3, seed=100 + seed)
            x = rng.uniform(0.0, 1.0, size=(1000, 6))
            y = rng.uniform(0.0, 1.0, size=(1000, 6))
            gap = np.linalg.norm(forward(params, x, project=False) - forward(params, y, project=False), axis=1)
            violations += int(np.sum(gap > kappa(params) * np.linalg.norm(x - y, axis=1) * (1 + 1e-12)))
        assert violations == 0

    def test_certificate_in_two_norm(self, rng):
        """Test ‖φ(x) − φ(y)‖₂ ≤ √d* · κ ‖x − y‖₂ with the dimension factor."""
        for seed in range(20):
            params = init_params(5, 4, 8, 2, seed=seed)
            x = rng.normal(size=(1000, 5))
            y = rng.normal(size=(1000, 5))
            ratio = lipschitz_ratio(params, x, y, norm=2)
            assert ratio <= math.sqrt(params.d_star) * kappa(params) * (1 + 1e-12)

    def test_project_kappa(self):
        """Test that the projection enforces the budget and is idempotent."""
        params = init_params(6, 3, 8, 2, seed=3, kappa_budget=0.5)
        assert kappa(params) > 0.5
        projected = project_kappa(params)
        assert kappa(projected) == pytest.approx(0.5)
        assert project_kappa(projected) is projected


class TestCheckpoint:
    """Test the binary checkpoint format."""

    def test_round_trip(self, small_encoder, tmp_path):
        """Test that a saved encoder loads bit-identically."""
        path = save_checkpoint(small_encoder, tmp_path / "enc.ckpt")
        loaded = load_checkpoint(path)
        assert loaded.widths == small_encoder.widths
        for a, b in zip(loaded.arrays(), small_encoder.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_header_is_text(self, small_encoder, tmp_path):
        """Test the readable header line."""
        path = save_checkpoint(small_encoder, tmp_path / "enc.ckpt")
        header = path.read_bytes().split(b"\n", 1)[0].decode()
        assert header.startswith("actkit-encoder ")
        assert "widths=6,8,8,3" in header

    def test_missing_and_truncated(self, small_encoder, tmp_path):
        """Test DataError for absent and truncated files."""
        with pytest.raises(actkit.DataError):
            load_checkpoint(tmp_path / "absent.ckpt")
        path = save_checkpoint(small_encoder, tmp_path / "enc.ckpt")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(actkit.DataError):
            load_checkpoint(path)
