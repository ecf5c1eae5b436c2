"""Forger lab: indistinguishability game, advantage, failure detection."""

import hashlib
import math

import numpy as np
import pytest

from poa import kernels
from poa.errors import DomainError, IllegalQuery
from poa.forgery import (
    BROKEN_TRUNC_PRF,
    BROKEN_XOR_PRF,
    REAL_PRF,
    BackdooredSurrogateBackend,
    bit_frequency_distinguisher,
    detect_a2_violation,
    estimate_advantage,
    key_recovery_distinguisher,
    play_prf_game,
    random_forger_success,
    random_guess_strategy,
    replay_strategy,
    trivial_distinguisher,
)
from poa.gennorm import fit_gennorm, gennorm_quantile, similarity
from poa.generator import SurrogateBackend, get_model
from poa.latent import Latent
from poa.seeding import Identity, Kappa, MetaParams, canonical_kappa_bytes, derive_seed

EPOCH = "1970-01-01T00:00:00+00:00"


def _seed(tag: bytes) -> bytes:
    return hashlib.sha3_256(b"forgery-test:" + tag).digest()


def _stderr(rounds, p=0.5):
    return math.sqrt(p * (1 - p) / rounds)


class TestGame:
    def test_trivial_distinguisher_at_chance(self):
        t = play_prf_game(trivial_distinguisher, REAL_PRF, 2000, _seed(b"trivial"))
        assert abs(t.advantage) <= 3 * _stderr(2000)

    def test_bit_frequency_at_chance_on_real_prf(self):
        t = play_prf_game(bit_frequency_distinguisher, REAL_PRF, 2000, _seed(b"freq"))
        assert abs(t.advantage) <= 3 * _stderr(2000)

    def test_key_recovery_at_chance_on_real_prf(self):
        t = play_prf_game(key_recovery_distinguisher, REAL_PRF, 1000, _seed(b"krr"))
        assert abs(t.advantage) <= 3 * _stderr(1000)

    def test_key_recovery_breaks_xor_family(self):
        t = play_prf_game(key_recovery_distinguisher, BROKEN_XOR_PRF, 1000, _seed(b"krb"))
        assert t.win_rate >= 0.99

    def test_challenge_input_excluded(self):
        def naughty(round):
            round.oracle(canonical_kappa_bytes(round.kappa))
            return 0

        with pytest.raises(IllegalQuery):
            play_prf_game(naughty, REAL_PRF, 100, _seed(b"naughty"))

    def test_minimum_rounds(self):
        with pytest.raises(DomainError):
            play_prf_game(trivial_distinguisher, REAL_PRF, 10, _seed(b"few"))

    def test_challenger_soundness_audit(self):
        # keyed rounds carry exactly f_key(<m,e,r>); random rounds are fresh
        t = play_prf_game(
            trivial_distinguisher, REAL_PRF, 300, _seed(b"audit"), record_audit=True)
        randoms = []
        for entry in t.audit:
            expected = REAL_PRF.evaluate(
                entry["key"], canonical_kappa_bytes(entry["kappa"]))
            if entry["sigma"] == 1:
                assert entry["challenge"] == expected
            else:
                assert entry["challenge"] != expected
                randoms.append(entry["challenge"])
        assert len(set(randoms)) == len(randoms)
        assert 0.35 <= sum(e["sigma"] for e in t.audit) / len(t.audit) <= 0.65


class TestAdvantage:
    def _setup(self, meta):
        backend = SurrogateBackend(default_m=meta)
        from poa.generator import embedding_from_prompt

        emb = embedding_from_prompt("advantage scene")
        forger = Identity(id_bytes=_seed(b"forger-id"), label="mallory", registered_at=EPOCH)
        return backend, emb, forger

    def _instance(self, meta, emb, backend, prf, idx):
        author = Identity(
            id_bytes=_seed(b"author-%d" % idx), label="alice", registered_at=EPOCH)
        kappa = Kappa(m=meta, e_digest=emb.digest, r=_seed(b"r-%d" % idx)[:16])
        gen_seed = prf.evaluate(author.id_bytes, canonical_kappa_bytes(kappa))
        contested = backend.generate(meta, emb.digest, gen_seed)
        return author, kappa, contested

    def test_replay_no_edge_under_real_prf(self, meta):
        # a single instance's estimate is itself ~U(-1/2, 1/2); soundness is
        # asserted on the mean over independent instances
        backend, emb, forger = self._setup(meta)
        vals = []
        for i in range(24):
            _, kappa, contested = self._instance(meta, emb, backend, REAL_PRF, i)
            est = estimate_advantage(
                replay_strategy(), contested, kappa, forger, 128, backend,
                _seed(b"replay-%d" % i), prf=REAL_PRF)
            vals.append(est.advantage)
        mean = float(np.mean(vals))
        stderr_mean = math.sqrt(1.0 / 12.0 / len(vals))
        assert abs(mean) <= 3 * stderr_mean

    def test_random_guess_no_edge(self, meta):
        backend, emb, forger = self._setup(meta)
        vals = []
        for i in range(24):
            _, kappa, contested = self._instance(meta, emb, backend, REAL_PRF, 100 + i)
            est = estimate_advantage(
                random_guess_strategy(), contested, kappa, forger, 128, backend,
                _seed(b"guess-%d" % i), prf=REAL_PRF)
            vals.append(est.advantage)
        assert abs(float(np.mean(vals))) <= 3 * math.sqrt(1.0 / 12.0 / len(vals))

    def test_replay_wins_under_keyless_prf(self, meta):
        # the truncating family ignores the key: replaying the parameters
        # replays the seed, so the forged object equals the contested one
        backend, emb, forger = self._setup(meta)
        _, kappa, contested = self._instance(meta, emb, backend, BROKEN_TRUNC_PRF, 7)
        est = estimate_advantage(
            replay_strategy(), contested, kappa, forger, 512, backend,
            _seed(b"replay-trunc"), prf=BROKEN_TRUNC_PRF)
        assert est.advantage >= 0.45

    def test_minimum_trials(self, meta):
        backend, emb, forger = self._setup(meta)
        _, kappa, contested = self._instance(meta, emb, backend, REAL_PRF, 0)
        with pytest.raises(DomainError):
            estimate_advantage(replay_strategy(), contested, kappa, forger, 50,
                               backend, _seed(b"few"))


class TestRandomForger:
    def test_vacuous_threshold(self, meta, backend, author, kappa, embedding):
        J = backend.generate(meta, embedding.digest, derive_seed(author, kappa))
        rate = random_forger_success(
            J, kappa, author, -math.inf, 64, backend, _seed(b"vac"))
        assert rate == 1.0

    def test_quantile_calibration(self, meta, backend, author, kappa, embedding):
        J = backend.generate(meta, embedding.digest, derive_seed(author, kappa))
        G, c = backend.transfer(meta, embedding.digest)
        w = G.T @ J.data
        k0 = float(np.dot(J.data, c))
        # fit resolved well beyond binomial noise (see lab.study_random_forger)
        n = 8192
        scores = (kernels.gaussian_dot(_seed(b"cal-null"), 1, n, w) + k0) / J.d
        fitted = fit_gennorm(scores)
        tail = 2.0 ** -8
        threshold = gennorm_quantile(fitted, tail)
        trials = 2 ** 13
        rate = random_forger_success(
            J, kappa, author, threshold, trials, backend, _seed(b"cal-trials"))
        stderr = math.sqrt(tail * (1 - tail) / trials)
        assert abs(rate - tail) <= 3 * stderr

    def test_no_success_at_self_similarity(self, meta, backend, author, kappa, embedding):
        J = backend.generate(meta, embedding.digest, derive_seed(author, kappa))
        rate = random_forger_success(
            J, kappa, author, similarity(J, J), 2 ** 13, backend, _seed(b"self"))
        assert rate == 0.0


class TestA2Detection:
    def _scores(self, backend_obj, meta, emb_digest, n, tag, target=None):
        starts = kernels.gaussian_rows(_seed(tag), 1, n, meta.latent_size)
        if isinstance(backend_obj, BackdooredSurrogateBackend):
            outs = backend_obj.generate_batch_from_starts(meta, emb_digest, starts)
            tgt = backend_obj.fixed_latent(meta, emb_digest) if target is None else target
        else:
            outs = get_model(meta).generate_batch(emb_digest, starts)
            tgt = (
                get_model(meta).generate(emb_digest, kernels.gaussians(_seed(tag + b"t"), meta.latent_size))
                if target is None else target
            )
        return outs @ tgt / meta.latent_size

    def test_clean_scores_pass(self, meta):
        emb_digest = _seed(b"a2-clean-embed")
        scores = self._scores(SurrogateBackend(default_m=meta), meta, emb_digest, 2048, b"a2c")
        diag = detect_a2_violation(scores, fit_gennorm(scores))
        assert diag.status == "ok"

    def test_backdoored_scores_flagged(self, meta):
        bad = BackdooredSurrogateBackend(rho=0.05, default_m=meta)
        emb_digest = _seed(b"a2-bad-embed")
        scores = self._scores(bad, meta, emb_digest, 2048, b"a2b")
        diag = detect_a2_violation(scores, fit_gennorm(scores))
        assert diag.status == "violated"

    def test_rho_zero_reduces_to_clean(self, meta):
        none = BackdooredSurrogateBackend(rho=0.0, default_m=meta)
        emb_digest = _seed(b"a2-zero-embed")
        target = Latent(
            shape=meta.latent_shape,
            data=get_model(meta).generate(
                emb_digest, kernels.gaussians(_seed(b"a2z-target"), meta.latent_size)),
        )
        scores = self._scores(none, meta, emb_digest, 2048, b"a2z", target=target.data)
        diag = detect_a2_violation(scores, fit_gennorm(scores))
        assert diag.status == "ok"

    def test_trigger_probability(self, meta):
        bad = BackdooredSurrogateBackend(rho=0.05, default_m=meta)
        starts = kernels.gaussian_rows(_seed(b"trigger"), 1, 40000, 8)
        rate = float(np.mean(bad._trigger(starts)))
        assert rate == pytest.approx(0.05, abs=0.005)

    def test_minimum_scores(self, meta):
        from poa.gennorm import GenNormParams

        with pytest.raises(DomainError):
            detect_a2_violation(np.zeros(100), GenNormParams(0.0, 1.0, 2.0))

    def test_backdoor_batch_matches_single(self, meta):
        bad = BackdooredSurrogateBackend(rho=0.05, default_m=meta)
        emb_digest = _seed(b"a2-eq-embed")
        starts = kernels.gaussian_rows(_seed(b"a2-eq"), 1, 64, meta.latent_size)
        batch = bad.generate_batch_from_starts(meta, emb_digest, starts)
        for i in (0, 7, 33):
            from poa.seeding import sample_gaussian

            # reconstruct the per-sample path through .generate on a seed
            # whose expansion equals this exact start row is impractical;
            # instead check trigger-consistency directly
            if bad._trigger(starts[i : i + 1])[0]:
                assert np.allclose(batch[i], bad.fixed_latent(meta, emb_digest))
            else:
                assert np.allclose(
                    batch[i], get_model(meta).generate(emb_digest, starts[i]), atol=1e-8)
