"""Whole-model tests: ablation variants, persistence, determinism."""

import numpy as np
import pytest

from hgwave import hypergraph as hg
from hgwave.model import AblationFlags, ModelConfig, PredictionModel
from hgwave.temporal import TemporalConfig


TINY = TemporalConfig(lookback=6, proj_dim=4, conv_channels=4, kernel_size=3,
                      hidden_dim=4, memory_dim=3, dgf_hidden=4)


def build(ablation=None, seed=0, n=4, n_feat=3):
    cfg = ModelConfig(temporal=TINY, conv_layers=1, poly_order=2,
                      head_hidden=4,
                      ablation=AblationFlags.from_name(ablation))
    return PredictionModel(cfg, n, n_feat, seed=seed), cfg


def small_graph():
    return hg.Hypergraph(n=4, edges=[hg.Hyperedge((0, 1, 2), 0.6),
                                     hg.Hyperedge((2, 3), 0.4)])


class TestAblationFlags:
    def test_known_names(self):
        assert AblationFlags.from_name("est1").no_hypergraph
        assert AblationFlags.from_name("EST2").no_dgf
        assert AblationFlags.from_name("est3").no_corr_augment
        assert AblationFlags.from_name("est4").fourier_basis
        assert AblationFlags.from_name(None) == AblationFlags()

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            AblationFlags.from_name("est9")


class TestForward:
    def test_full_model_output_shape(self, rng):
        model, _ = build()
        out = model.forward(rng.normal(size=(4, 6, 3)), small_graph())
        assert out.shape == (4,)

    def test_temporal_only_variant_needs_no_graph(self, rng):
        model, _ = build("est1")
        out = model.forward(rng.normal(size=(4, 6, 3)))
        assert out.shape == (4,)
        assert model.conv_layers == []

    def test_full_model_requires_graph(self, rng):
        model, _ = build()
        with pytest.raises(ValueError):
            model.forward(rng.normal(size=(4, 6, 3)))

    def test_fourier_variant_runs(self, rng):
        model, _ = build("est4")
        g = small_graph()
        cache = hg.spectral_prepare(g, with_eig=True)
        out = model.forward(rng.normal(size=(4, 6, 3)), g, cache)
        assert out.shape == (4,)

    def test_variants_differ_from_full_model(self, rng):
        x = rng.normal(size=(4, 6, 3))
        g = small_graph()
        cache = hg.spectral_prepare(g, with_eig=True)
        full = build(seed=0)[0].forward(x, g).data
        for name in ("est2", "est4"):
            other = build(name, seed=0)[0].forward(x, g, cache).data
            assert not np.allclose(full, other)

    def test_deterministic_given_seed(self, rng):
        x = rng.normal(size=(4, 6, 3))
        g = small_graph()
        a = build(seed=5)[0].forward(x, g).data
        b = build(seed=5)[0].forward(x, g).data
        np.testing.assert_array_equal(a, b)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path, rng):
        model, cfg = build(seed=1)
        x = rng.normal(size=(4, 6, 3))
        g = small_graph()
        before = model.forward(x, g).data
        path = tmp_path / "ckpt.json"
        model.save(path, extra={"phase_id": 3})
        fresh = PredictionModel(cfg, 4, 3, seed=99)
        extra = fresh.load(path)
        assert extra["phase_id"] == 3
        np.testing.assert_array_equal(fresh.forward(x, g).data, before)

    def test_load_rejects_mismatched_names(self, tmp_path):
        model, _ = build("est1")
        path = tmp_path / "ckpt.json"
        model.save(path)
        full, cfg = build()
        with pytest.raises(ValueError):
            full.load(path)
