import math

import numpy as np
import pytest

from faceact.errors import ConfigError, StructuralError, ValidationError
from faceact.retrieval import (
    AdamW,
    ContrastiveRetrievalEvaluator,
    EncoderParams,
    TrainConfig,
    ZScoreScaler,
    ZScoreStats,
    cosine_lr,
    encode,
    infonce_loss,
    infonce_loss_and_grad,
    init_encoder,
    load_checkpoint,
    read_embeddings,
    train_encoders,
    write_embeddings,
    zscore_apply,
    zscore_fit,
)


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_separable(n_train, n_val, seed, noise=0.05, shuffle_train=False):
    """Matched pairs share a per-pair latent; classes are orthogonal prototypes."""
    rng = np.random.default_rng(seed)
    protos = np.eye(61)[:32]
    proj = rng.standard_normal((61, 64)) / math.sqrt(61)

    def draw(n):
        classes = rng.integers(0, 32, size=n)
        latent = protos[classes] + rng.normal(0.0, noise, size=(n, 61))
        return latent @ proj, latent.copy()

    train = draw(n_train)
    val = draw(n_val)
    if shuffle_train:
        perm = rng.permutation(n_train)
        train = (train[0], train[1][perm])
    return train, val


class TestZScore:
    def test_hand_example(self):
        stats = zscore_fit(np.array([[0.0], [2.0]]))
        assert stats.mean[0] == 1.0
        assert stats.std[0] == 1.0  # population std
        assert zscore_apply(stats, np.array([1.0]))[0] == 0.0

    def test_constant_dimension_floored(self):
        X = np.full((5, 3), 0.7)
        stats = zscore_fit(X)
        assert np.all(stats.std == 1e-8)
        assert np.all(zscore_apply(stats, X) == 0.0)

    def test_mean_maps_to_zero(self, rng):
        X = rng.standard_normal((20, 6))
        stats = zscore_fit(X)
        assert np.allclose(zscore_apply(stats, stats.mean), 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            zscore_fit(np.zeros((0, 4)))

    def test_scaler_round_trip(self, rng):
        X = rng.standard_normal((30, 5)) * 3.0 + 1.0
        scaler = ZScoreScaler().fit(X)
        Z = scaler.transform(X)
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Z.std(axis=0), 1.0, atol=1e-12)
        assert scaler.get_params() == {"floor": 1e-8}


class TestInfoNCE:
    def test_uniform_similarity_is_ln_n(self, rng):
        for n in (2, 8, 32):
            a = np.tile(unit_rows(rng, 1, 16), (n, 1))
            b = np.tile(unit_rows(rng, 1, 16), (n, 1))
            assert infonce_loss(a, b, 0.07) == pytest.approx(math.log(n), abs=1e-9)

    def test_sharp_diagonal_is_tiny(self, rng):
        u = unit_rows(rng, 1, 8)[0]
        a = np.stack([u, -u])
        b = np.stack([u, -u])
        assert infonce_loss(a, b, 0.07) < 1e-10

    def test_monte_carlo_near_ln_32(self):
        losses = [
            infonce_loss(
                unit_rows(np.random.default_rng(s), 32, 1024),
                unit_rows(np.random.default_rng(1000 + s), 32, 1024),
                0.07,
            )
            for s in range(100)
        ]
        assert abs(float(np.mean(losses)) - math.log(32)) < 0.3

    def test_non_negative(self, rng):
        for _ in range(20):
            a, b = unit_rows(rng, 6, 12), unit_rows(rng, 6, 12)
            assert infonce_loss(a, b, 0.07) >= 0.0

    def test_permutation_invariance(self, rng):
        a, b = unit_rows(rng, 10, 12), unit_rows(rng, 10, 12)
        perm = rng.permutation(10)
        assert infonce_loss(a[perm], b[perm], 0.07) == pytest.approx(
            infonce_loss(a, b, 0.07), abs=1e-12
        )

    def test_batch_of_one_rejected(self, rng):
        a = unit_rows(rng, 1, 4)
        with pytest.raises(ValidationError):
            infonce_loss(a, a, 0.07)

    def test_gradient_matches_finite_differences(self):
        worst = 0.0
        for trial in range(100):
            rng = np.random.default_rng(trial)
            a, b = unit_rows(rng, 8, 16), unit_rows(rng, 8, 16)
            _, da, db = infonce_loss_and_grad(a, b, 0.07)
            h = 1e-5
            for mat, g in ((a, da), (b, db)):
                fd = np.zeros_like(mat)
                for i in range(mat.shape[0]):
                    for j in range(mat.shape[1]):
                        mat[i, j] += h
                        up = infonce_loss(a, b, 0.07)
                        mat[i, j] -= 2 * h
                        down = infonce_loss(a, b, 0.07)
                        mat[i, j] += h
                        fd[i, j] = (up - down) / (2 * h)
                rel = np.linalg.norm(g - fd) / (np.linalg.norm(g) + np.linalg.norm(fd))
                worst = max(worst, rel)
        assert worst < 1e-4


class TestEncoder:
    def test_output_unit_norm(self, rng):
        enc = init_encoder(rng, 10, 16, 8)
        Y = encode(enc, rng.standard_normal((40, 10)))
        assert np.allclose(np.linalg.norm(Y, axis=1), 1.0, atol=1e-6)

    def test_zero_weight_encoder_returns_normalized_bias(self, rng):
        b = rng.standard_normal(8)
        enc = EncoderParams(
            w1=np.zeros((10, 16)),
            b1=np.zeros(16),
            w2=np.zeros((16, 8)),
            b2=b.copy(),
        )
        out = encode(enc, rng.standard_normal(10))
        assert np.allclose(out, b / np.linalg.norm(b))

    def test_forward_matches_reference(self, rng):
        enc = init_encoder(rng, 5, 7, 4)
        x = rng.standard_normal(5)
        h = np.tanh(x @ enc.w1 + enc.b1) @ enc.w2 + enc.b2
        expected = h / np.linalg.norm(h)
        assert np.allclose(encode(enc, x), expected, atol=1e-12)
        # doubling the input moves the output only through the tanh
        doubled = np.tanh(2 * x @ enc.w1 + enc.b1) @ enc.w2 + enc.b2
        assert np.allclose(encode(enc, 2 * x), doubled / np.linalg.norm(doubled))

    def test_dimension_mismatch(self, rng):
        enc = init_encoder(rng, 5, 7, 4)
        with pytest.raises(StructuralError):
            encode(enc, np.zeros(6))

    def test_full_parameter_gradient_check(self):
        from faceact.retrieval import _backward, _forward

        rng = np.random.default_rng(3)
        enc_i = init_encoder(rng, 6, 7, 5)
        enc_m = init_encoder(rng, 4, 7, 5)
        Xi = rng.standard_normal((8, 6))
        Xm = rng.standard_normal((8, 4))

        def loss_value():
            yi, _ = _forward(enc_i, Xi)
            ym, _ = _forward(enc_m, Xm)
            return infonce_loss(yi, ym, 0.07)

        yi, ci = _forward(enc_i, Xi)
        ym, cm = _forward(enc_m, Xm)
        _, dyi, dym = infonce_loss_and_grad(yi, ym, 0.07)
        grads = _backward(enc_i, ci, dyi) + _backward(enc_m, cm, dym)
        arrays = enc_i.arrays() + enc_m.arrays()
        h = 1e-6
        for arr, g in zip(arrays, grads):
            flat, gf = arr.ravel(), g.ravel()
            for k in range(0, flat.size, max(1, flat.size // 8)):
                old = flat[k]
                flat[k] = old + h
                up = loss_value()
                flat[k] = old - h
                down = loss_value()
                flat[k] = old
                fd = (up - down) / (2 * h)
                assert fd == pytest.approx(gf[k], rel=1e-3, abs=1e-8)


class TestSchedule:
    def test_endpoints(self):
        assert cosine_lr(1e-4, 0, 1000) == 1e-4
        assert cosine_lr(1e-4, 1000, 1000) <= 1e-7 * 1e-4

    def test_monotone_decreasing(self):
        values = [cosine_lr(1.0, e, 100) for e in range(101)]
        assert values == sorted(values, reverse=True)


class TestAdamW:
    def test_hand_computed_step(self):
        # m=0.05, v=2.5e-4; mhat=0.5, vhat=0.25
        # p = 1 - 0.1*(0.5/(0.5+1e-8) + 0.01*1)
        p = np.array([1.0])
        opt = AdamW([p], weight_decay=0.01)
        opt.step([np.array([0.5])], lr=0.1)
        expected = 1 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01)
        assert p[0] == pytest.approx(expected, abs=1e-15)

    def test_zero_grad_only_decays(self):
        p = np.array([2.0])
        opt = AdamW([p], weight_decay=0.1)
        opt.step([np.array([0.0])], lr=0.5)
        assert p[0] == pytest.approx(2.0 - 0.5 * 0.1 * 2.0)


class TestTraining:
    def _tiny_config(self, **overrides):
        defaults = dict(max_epochs=8, patience=3, batch_size=16, hidden_dim=32,
                        output_dim=16, seed=42)
        defaults.update(overrides)
        return TrainConfig(**defaults)

    def test_deterministic_curves(self):
        (img, mot), (vimg, vmot) = make_separable(96, 48, seed=5)
        stats = zscore_fit(mot)
        cfg = self._tiny_config()
        r1 = train_encoders(img, zscore_apply(stats, mot), vimg, zscore_apply(stats, vmot), cfg)
        r2 = train_encoders(img, zscore_apply(stats, mot), vimg, zscore_apply(stats, vmot), cfg)
        assert r1.history == r2.history  # bitwise-identical floats
        for a, b in zip(r1.image_encoder.arrays(), r2.image_encoder.arrays()):
            assert np.array_equal(a, b)

    def test_best_checkpoint_has_best_rp1(self):
        (img, mot), (vimg, vmot) = make_separable(128, 64, seed=6)
        stats = zscore_fit(mot)
        result = train_encoders(
            img, zscore_apply(stats, mot), vimg, zscore_apply(stats, vmot),
            self._tiny_config(max_epochs=12),
        )
        best_seen = max(h.val_rp1 for h in result.history)
        assert result.best_val_rp1 == best_seen

    def test_early_stopping_caps_epochs(self):
        (img, mot), (vimg, vmot) = make_separable(64, 32, seed=7, shuffle_train=True)
        stats = zscore_fit(mot)
        cfg = self._tiny_config(max_epochs=50, patience=3)
        result = train_encoders(
            img, zscore_apply(stats, mot), vimg, zscore_apply(stats, vmot), cfg
        )
        # patience must have triggered well before the epoch budget
        assert len(result.history) < 50

    def test_empty_split_rejected(self):
        with pytest.raises(ValidationError):
            train_encoders(
                np.zeros((0, 4)), np.zeros((0, 4)), np.zeros((2, 4)), np.zeros((2, 4)),
                self._tiny_config(),
            )


class TestEvaluatorEstimator:
    def test_fit_requires_validation(self, rng):
        evaluator = ContrastiveRetrievalEvaluator(max_epochs=2)
        with pytest.raises(ConfigError):
            evaluator.fit(rng.standard_normal((8, 4)), rng.standard_normal((8, 6)))

    def test_fit_embed_and_checkpoint_bitwise(self, tmp_path):
        (img, mot), (vimg, vmot) = make_separable(96, 48, seed=9)
        evaluator = ContrastiveRetrievalEvaluator(
            hidden_dim=32, output_dim=16, max_epochs=4, patience=2, batch_size=16
        )
        evaluator.fit(img, mot, X_val=vimg, y_val=vmot)
        emb_i = evaluator.embed_image(vimg)
        emb_m = evaluator.embed_motion(vmot)
        assert np.allclose(np.linalg.norm(emb_i, axis=1), 1.0, atol=1e-6)

        path = tmp_path / "ckpt.json"
        evaluator.save(path)
        again = load_checkpoint(path)
        assert np.array_equal(again.embed_image(vimg), emb_i)
        assert np.array_equal(again.embed_motion(vmot), emb_m)

        # identical rewrites are byte-identical
        path2 = tmp_path / "ckpt2.json"
        evaluator.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_get_params_round_trip(self):
        evaluator = ContrastiveRetrievalEvaluator(hidden_dim=8)
        params = evaluator.get_params()
        clone = ContrastiveRetrievalEvaluator(**params)
        assert clone.get_params() == params

    def test_bad_checkpoint_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other/9"}')
        with pytest.raises(ValidationError):
            load_checkpoint(path)


class TestEmbeddingFiles:
    def test_round_trip(self, tmp_path, rng):
        table = {f"img{i}": rng.standard_normal(6) for i in range(4)}
        path = tmp_path / "emb.jsonl"
        write_embeddings(path, table, meta={"dim": 6})
        again = read_embeddings(path)
        assert set(again) == set(table)
        for key in table:
            assert np.array_equal(again[key], table[key])


class TestSklearnCompose:
    def test_estimators_clone(self):
        from sklearn.base import clone

        from faceact.frames import NeutralCalibrator

        for estimator in (
            NeutralCalibrator(),
            ZScoreScaler(floor=1e-6),
            ContrastiveRetrievalEvaluator(hidden_dim=8, max_epochs=2),
        ):
            duplicate = clone(estimator)
            assert duplicate.get_params() == estimator.get_params()

    def test_scaler_in_pipeline(self, rng):
        from sklearn.pipeline import Pipeline

        X = rng.standard_normal((20, 4)) * 2 + 3
        pipe = Pipeline([("scale", ZScoreScaler())])
        Z = pipe.fit_transform(X)
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-12)
