"""Spiking simulator: encoder, neurons, plasticity, network training and decoding."""
import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnhpo.earlystop import EXCITATORY, INHIBITORY, StopCriterion, exp1_criteria
from snnhpo.exceptions import ValidationError
from snnhpo.searchspace import REFERENCE_CONFIGURATION
from snnhpo.snnsim import datasets, network
from snnhpo.snnsim.blackbox import SNNBlackBox, SNNProfile, spec_from_config
from snnhpo.snnsim.encoding import poisson_encode, poisson_encode_batch
from snnhpo.snnsim.learning import normalize_weights, stdp_update
from snnhpo.snnsim.network import NetworkSpec, TrainedNetwork, assign_labels, decode
from snnhpo.snnsim.neurons import LIFState, NeuronParams, lif_step, max_reachable_potential

EXC = NeuronParams(v_th=-52.0, v_rest=-65.0, v_reset=-65.0, tau=100.0, t_ref=5, theta_plus=0.05, tau_theta=1e6)
INH = NeuronParams(v_th=-40.0, v_rest=-60.0, v_reset=-45.0, tau=10.0, t_ref=2)


def small_spec(**kw):
    base = dict(n_inputs=64, map_size=10, exc_params=EXC, inh_params=INH, exc_strength=20.0,
                inh_strength=5.0, lambda_minus=1e-3, lambda_plus=5e-3, weight_norm=20.0, epochs=1,
                decoder="Max", T=40)
    base.update(kw)
    return NetworkSpec(**base)


@pytest.fixture(scope="module")
def blobs8():
    return datasets.synthetic_blobs(n_train=60, n_valid=30, n_test=30, seed=1)


class TestEncoding:
    def test_zero_image_silent(self):
        assert poisson_encode(np.zeros(20), 100, np.random.default_rng(0)).sum() == 0

    def test_full_intensity_mean_count(self):
        rng = np.random.default_rng(1)
        counts = [poisson_encode(np.ones(1), 100, rng).sum() for _ in range(1000)]
        assert abs(np.mean(counts) - 25.0) <= 1.5

    def test_empty_train(self):
        assert poisson_encode(np.ones(5), 0, np.random.default_rng(0)).shape == (0, 5)
        with pytest.raises(ValidationError):
            small_spec(T=0)

    def test_seeded(self):
        img = np.random.default_rng(2).random(30)
        a = poisson_encode(img, 50, np.random.default_rng(3))
        b = poisson_encode(img, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_rejects_bad_intensity(self):
        with pytest.raises(ValidationError):
            poisson_encode(np.array([1.2]), 10, np.random.default_rng(0))

    @pytest.mark.parametrize("intensity", [0.1, 0.5, 0.9])
    def test_rate_within_binomial_bounds(self, intensity):
        n = 1000 * 100
        p = intensity * 0.25
        spikes = poisson_encode(np.full(1000, intensity), 100, np.random.default_rng(4)).sum()
        assert abs(spikes - n * p) <= 3 * math.sqrt(n * p * (1 - p))

    def test_batch_shape(self):
        out = poisson_encode_batch(np.zeros((4, 7)), 9, np.random.default_rng(0))
        assert out.shape == (9, 4, 7) and out.dtype == bool


class TestLIF:
    def test_fixed_point(self):
        s = LIFState.rest(1, EXC)
        _, spk = lif_step(s, 0.0, EXC)
        assert s.v[0] == EXC.v_rest and not spk[0]

    def test_forced_crossing(self):
        p = NeuronParams(v_th=-55.0, v_rest=-65.0, v_reset=-70.0, tau=20.0, t_ref=3)
        s = LIFState.rest(1, p)
        _, spk = lif_step(s, 20.0, p)
        assert spk[0] and s.v[0] == -70.0 and s.refractory[0] == 3

    def test_theta_decay_negligible(self):
        s = LIFState.rest(1, EXC)
        lif_step(s, 100.0, EXC)
        assert s.theta[0] == 0.05
        for _ in range(1000):
            lif_step(s, 0.0, EXC)
        assert s.theta[0] == pytest.approx(0.05, rel=2e-3)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), t_ref=st.integers(0, 6))
    def test_refractory_and_theta(self, seed, t_ref):
        p = NeuronParams(v_th=-50.0, v_rest=-65.0, v_reset=-65.0, tau=20.0, t_ref=t_ref,
                         theta_plus=0.5, tau_theta=50.0)
        rng = np.random.default_rng(seed)
        s = LIFState.rest(5, p)
        raster, prev_theta = [], s.theta.copy()
        for _ in range(200):
            _, spk = lif_step(s, rng.uniform(0, 12, 5), p)
            raster.append(spk.copy())
            assert np.all(s.theta >= 0)
            # theta only grows where a spike happened
            assert np.all((s.theta <= prev_theta) | spk)
            prev_theta = s.theta.copy()
        raster = np.array(raster)
        for j in range(5):
            times = np.flatnonzero(raster[:, j])
            assert np.all(np.diff(times) > t_ref)

    def test_param_validation(self):
        with pytest.raises(ValidationError):
            NeuronParams(v_th=-50, v_rest=-65, v_reset=-40, tau=10)
        with pytest.raises(ValidationError):
            NeuronParams(v_th=-50, v_rest=-65, v_reset=-65, tau=0)

    def test_max_reachable(self):
        assert max_reachable_potential(-65.0, 100, 78.4) == pytest.approx(-65.0 + 7840.0)


class TestSTDP:
    def test_no_spikes(self):
        w = np.random.default_rng(0).random((4, 3))
        w0 = w.copy()
        stdp_update(w, np.ones(4), np.ones(3), np.zeros(4, bool), np.zeros(3, bool), 0.1, 0.1)
        np.testing.assert_array_equal(w, w0)

    def test_pre_then_post(self):
        decay = math.exp(-1 / 20)
        w = np.zeros((1, 1))
        pre_tr, post_tr = np.zeros(1), np.zeros(1)
        stdp_update(w, pre_tr, post_tr, np.array([True]), np.array([False]), 0.0, 0.01)
        pre_tr[:] = 1.0
        pre_tr *= decay
        post_tr *= decay
        stdp_update(w, pre_tr, post_tr, np.array([False]), np.array([True]), 0.0, 0.01)
        assert w[0, 0] == pytest.approx(0.01 * decay, rel=1e-12)
        assert w[0, 0] == pytest.approx(0.00951, abs=1e-5)

    def test_post_only_and_depression_bounds(self):
        w = np.full((3, 2), 0.5)
        prev = w.copy()
        for _ in range(50):
            stdp_update(w, np.zeros(3), np.ones(2), np.zeros(3, bool), np.ones(2, bool), 0.2, 0.2)
            assert np.all(w <= prev) and np.all(w >= 0)
            prev = w.copy()
        for _ in range(200):
            stdp_update(w, np.zeros(3), np.ones(2), np.ones(3, bool), np.zeros(2, bool), 0.2, 0.2)
            assert np.all(w <= prev) and np.all(w >= 0)
            prev = w.copy()
        assert w.max() < 1e-10

    def test_potentiation_soft_bound(self):
        w = np.full((2, 1), 0.9)
        for _ in range(500):
            stdp_update(w, np.ones(2), np.zeros(1), np.zeros(2, bool), np.ones(1, bool), 0.0, 0.5)
        assert np.all(w <= 1.0) and w.min() > 0.99


class TestNormalize:
    def test_idempotent(self):
        w = np.random.default_rng(0).random((10, 3))
        w *= 2.0 / w.sum(0)
        w0 = w.copy()
        normalize_weights(w, 2.0)
        np.testing.assert_allclose(w, w0, atol=1e-12)

    def test_proportional(self):
        np.testing.assert_allclose(normalize_weights(np.array([[0.2], [0.2]]), 1.0), [[0.5], [0.5]])

    def test_zero_column(self):
        w = np.array([[0.0, 0.2], [0.0, 0.3]])
        normalize_weights(w, 1.0)
        np.testing.assert_array_equal(w[:, 0], 0.0)

    def test_bad_target(self):
        with pytest.raises(ValidationError):
            normalize_weights(np.ones((2, 2)), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 40), target_frac=st.floats(0.01, 1.3))
    def test_capped_sum(self, seed, n, target_frac):
        rng = np.random.default_rng(seed)
        w = rng.random((n, 3)) ** rng.uniform(1, 6) * (rng.random((n, 3)) < 0.8)
        target = target_frac * n
        out = normalize_weights(w.copy(), target, 1.0)
        assert np.all(out >= 0) and np.all(out <= 1.0)
        for j in range(3):
            n_pos = int((w[:, j] > 0).sum())
            if n_pos:
                assert out[:, j].sum() == pytest.approx(min(target, n_pos), rel=1e-9)


class TestTraining:
    def test_invariants(self, blobs8):
        spec = small_spec()
        net, outcome = network.train(spec, blobs8.train, [StopCriterion(EXCITATORY, 1, 1.0)], np.random.default_rng(0))
        w = net.w_in_exc
        assert np.all(w >= 0) and np.all(w <= spec.w_max)
        np.testing.assert_allclose(w.sum(0), spec.weight_norm, rtol=1e-6)
        assert np.all(net.adaptive_theta >= 0)
        assert not outcome.stopped and outcome.samples_processed == len(blobs8.train)

    def test_normalized_after_every_sample(self, blobs8):
        spec = small_spec()
        rng = np.random.default_rng(0)
        w = network.init_weights(spec, rng)
        np.testing.assert_allclose(w.sum(0), spec.weight_norm, rtol=1e-6)
        pres = network._Presenter(spec, w, np.zeros(spec.map_size))
        for i in range(10):
            raster, _ = pres.present(poisson_encode(blobs8.train.images[i], spec.T, rng))
            normalize_weights(w, spec.weight_norm, spec.w_max)
            np.testing.assert_allclose(w.sum(0), spec.weight_norm, rtol=1e-6)
            for j in range(spec.map_size):
                assert np.all(np.diff(np.flatnonzero(raster[:, j])) > EXC.t_ref)

    def test_beta_one_never_stops(self, blobs8):
        spec = small_spec(epochs=2, exc_params=NeuronParams(1e4, -65.0, -65.0, 100.0))
        crit = [StopCriterion(EXCITATORY, 5, 1.0), StopCriterion(INHIBITORY, 1, 1.0)]
        _, outcome = network.train(spec, blobs8.train, crit, np.random.default_rng(0))
        assert not outcome.stopped
        assert outcome.samples_processed == 2 * len(blobs8.train)

    @pytest.mark.parametrize("seed", range(5))
    def test_silent_network_stops_at_minimal_index(self, blobs8, seed):
        v_th = max_reachable_potential(-65.0, 40, 20.0) + 1.0
        spec = small_spec(exc_params=NeuronParams(v_th, -65.0, -65.0, 100.0))
        crit = exp1_criteria()
        net, outcome = network.train(spec, blobs8.train, crit, np.random.default_rng(seed))
        S = len(blobs8.train)
        assert outcome.stopped
        assert outcome.samples_processed == math.floor(0.1 * S) + 1
        assert outcome.violations == [pytest.approx(7 / 60 - 0.1)] * 2
        assert net.activity.counts.sum() == 0

    def test_rejects_mismatched_dataset(self, blobs8):
        with pytest.raises(ValidationError):
            network.train(small_spec(n_inputs=10), blobs8.train, exp1_criteria(), np.random.default_rng(0))

    def test_rejects_unknown_layer(self, blobs8):
        with pytest.raises(ValidationError):
            network.train(small_spec(), blobs8.train, [StopCriterion("readout", 1, 0.1)], np.random.default_rng(0))

    def test_reference_configuration_is_active(self):
        profile = SNNProfile(image_size=28)
        splits = profile.load()
        spec = spec_from_config({"map_size": 30, "epochs": 1}, profile, splits.train.n_inputs)
        net, outcome = network.train(spec, splits.train, [StopCriterion(EXCITATORY, 1, 1.0)], np.random.default_rng(0))
        active = (net.activity.counts.sum(1) > 0).mean()
        assert active >= 0.95

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            small_spec(map_size=0)
        with pytest.raises(ValidationError):
            small_spec(decoder="Median")
        with pytest.raises(ValidationError):
            small_spec(weight_norm=-1.0)


class TestLabelsAndDecoding:
    def _net(self, k=3, m=3):
        return TrainedNetwork(np.zeros((4, m)), np.zeros(m), k)

    def test_class_specific_neuron(self):
        counts = np.array([[0, 0, 1], [0, 0, 0], [0, 0, 5], [0, 0, 0]])
        net = assign_labels(self._net(), counts, np.array([0, 1, 2, 2]))
        assert net.label_of_neuron[2] == 2

    def test_tie_goes_to_lowest(self):
        counts = np.array([[3, 0, 0], [3, 0, 0]])
        net = assign_labels(self._net(), counts, np.array([1, 2]))
        assert net.label_of_neuron[0] == 1

    def test_dead_neurons(self):
        net = assign_labels(self._net(), np.zeros((6, 3)), np.array([0, 1, 2, 0, 1, 2]))
        assert np.all(net.dead) and np.all(net.label_of_neuron == 0)
        labels = np.array([0, 1, 2] * 10)
        assert network.accuracy(decode(net, np.zeros((30, 3)), "Max"), labels) == pytest.approx(1 / 3)

    def test_max_single_firing_neuron(self):
        net = assign_labels(self._net(), np.eye(3), np.array([2, 1, 0]))
        assert decode(net, np.array([[0, 4, 0]]), "Max")[0] == 1

    def test_zero_spike_predicts_class_zero(self):
        net = assign_labels(self._net(), np.eye(3), np.array([2, 1, 0]))
        for dec in ("Max", "Average"):
            assert decode(net, np.zeros((1, 3)), dec)[0] == 0

    def test_average_equals_max_with_one_neuron_per_class(self):
        net = assign_labels(self._net(), np.eye(3), np.array([0, 1, 2]))
        counts = np.random.default_rng(0).integers(1, 9, (50, 3))
        np.testing.assert_array_equal(decode(net, counts, "Max"), decode(net, counts, "Average"))

    def test_ngram(self):
        orders = [(0, 1, 2), (2, 1, 0), (0, 1, 2)]
        counts = np.ones((3, 3))
        net = assign_labels(self._net(), counts, np.array([0, 1, 0]), orders, 2)
        assert net.ngram_table[(0, 1)][0] == 2
        pred = decode(net, counts[:2], "2-gram", [(0, 1), (2, 1)])
        np.testing.assert_array_equal(pred, [0, 1])

    def test_ngram_without_table(self):
        net = assign_labels(self._net(), np.eye(3), np.array([0, 1, 2]))
        with pytest.raises(ValidationError):
            decode(net, np.eye(3), "3-gram", [(), (), ()])

    def test_decode_needs_labels(self):
        with pytest.raises(ValidationError):
            decode(self._net(), np.eye(3), "Max")


class TestDatasets:
    def test_synthetic_shapes_and_balance(self):
        s = datasets.synthetic_blobs(n_train=30, n_valid=9, n_test=6, seed=0)
        assert s.train.images.shape == (30, 64)
        assert np.bincount(s.train.labels).tolist() == [10, 10, 10]
        assert s.train.images.min() >= 0 and s.train.images.max() <= 1

    def test_synthetic_deterministic(self):
        a = datasets.synthetic_blobs(seed=4)
        b = datasets.synthetic_blobs(seed=4)
        np.testing.assert_array_equal(a.valid.images, b.valid.images)

    def test_prototypes_disjoint(self):
        protos = datasets._blob_prototypes(3, 28)
        assert np.all(((protos > 0).sum(0)) <= 1)

    def test_idx_round_trip(self, tmp_path):
        s = datasets.synthetic_blobs(n_train=5, n_valid=3, n_test=2, seed=0)
        imgs = np.vstack([s.train.images, s.valid.images, s.test.images])
        labels = np.concatenate([s.train.labels, s.valid.labels, s.test.labels])
        datasets.write_idx(tmp_path / "i.idx", tmp_path / "l.idx", imgs, labels, (8, 8))
        loaded = datasets.load_idx(tmp_path / "i.idx", tmp_path / "l.idx", 5, 3, 2)
        np.testing.assert_allclose(loaded.train.images, np.round(s.train.images * 255) / 255)
        np.testing.assert_array_equal(loaded.test.labels, s.test.labels)

    def test_idx_bad_magic(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x01" + b"\x00" * 12)
        with pytest.raises(ValidationError, match="magic"):
            datasets.read_idx_images(tmp_path / "bad")

    def test_idx_too_few_samples(self, tmp_path):
        datasets.write_idx(tmp_path / "i", tmp_path / "l", np.zeros((2, 4)), np.zeros(2), (2, 2))
        with pytest.raises(ValidationError):
            datasets.load_idx(tmp_path / "i", tmp_path / "l", 2, 1, 0)


class TestBlackBox:
    def test_spec_from_config_defaults(self):
        spec = spec_from_config({"map_size": 25}, SNNProfile(), 64)
        assert spec.map_size == 25
        assert spec.lambda_plus == REFERENCE_CONFIGURATION["lambda_plus"]
        assert spec.exc_params.v_reset == -60.0 and spec.tau_trace_pre == 20.0

    def test_picklable_and_deterministic(self):
        bb = SNNBlackBox(SNNProfile(n_train=30, n_valid=15, n_test=3, T=30), exp1_criteria())
        cfg = {"map_size": 12, "epochs": 1, "weight_norm": 20.0}
        a = bb(cfg, 5)
        b = pickle.loads(pickle.dumps(bb))(cfg, 5)
        assert (a.objective, a.violations, a.samples_processed) == (b.objective, b.violations, b.samples_processed)
        assert 0.0 <= a.objective <= 1.0 and len(a.violations) == 2

    @pytest.mark.parametrize("decoder", ["Average", "2-gram", "3-gram"])
    def test_all_decoders_run(self, decoder):
        bb = SNNBlackBox(SNNProfile(n_train=20, n_valid=10, n_test=3, T=30), exp1_criteria())
        ev = bb({"map_size": 10, "epochs": 1, "weight_norm": 20.0, "decoder": decoder}, 1)
        assert 0.0 <= ev.objective <= 1.0
