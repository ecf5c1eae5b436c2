"""Acceptance gate: one test per criterion, stated tolerances pinned.

Each test prints a single ``criterion N PASS/FAIL`` line (visible with
``pytest -rA``). Criterion 2 implements the documented error-bound
validation exactly as stated; the analysis of why its threshold cannot be
met at the prescribed sample count lives in the project notes.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from poa import kernels
import poa.lab as lab
from poa.adjudicator import ClaimRequest, adjudicate, judge
from poa.forgery import BROKEN_XOR_PRF, REAL_PRF
from poa.gennorm import fit_gennorm, required_samples, similarity, tail_prob
from poa.generator import SurrogateBackend, embedding_from_prompt
from poa.latent import Latent
from poa.seeding import Identity, Kappa, MetaParams, derive_seed
from poa.transforms import worst_case_perturbation

EPOCH = "1970-01-01T00:00:00+00:00"


def _line(n, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {n} {status}: {detail}")
    return ok


def test_criterion_01_sample_size_rule():
    # ceil(ln^2(1/alpha) ln(1/delta)) at delta = 1e-3; the middle and last
    # rows are sometimes quoted as 2988 / 8297, but the formula's ceil gives
    # 2987 / 8298 - the ~2^8 / 2^12 / 2^13 magnitudes hold either way and
    # are asserted here.
    values = [required_samples(2.0 ** -k, 1e-3) for k in (10, 30, 50)]
    exact = [math.log(2.0 ** k) ** 2 * math.log(1e3) for k in (10, 30, 50)]
    ok = values == [math.ceil(v) for v in exact]
    ok = ok and values[0] == 332
    ok = ok and [round(math.log2(n)) for n in values] == [8, 12, 13]
    assert _line(1, ok, f"required_samples -> {values} (exact {np.round(exact, 2)})")


def test_criterion_02_tail_error_bound_validation():
    # 200 synthetic repetitions, known ground truth, n = required_samples
    # (2^-10, 1e-3); relative error of q_hat at the true quantile must stay
    # within 1/5 in >= 99.9% of repetitions.
    alpha = 2.0 ** -10
    n = required_samples(alpha, 1e-3)
    mu, gamma, beta = 0.0, 1.0, 2.0
    threshold = float(stats.gennorm.ppf(1.0 - alpha, beta, loc=mu, scale=gamma))
    reps = 200
    within = 0
    rel_errors = []
    for k in range(reps):
        u = kernels.uniforms(lab.lab_seed(f"tail-error-bound-{k}"), n, 0)
        xs = mu + gamma * stats.gennorm.ppf(u, beta)
        fitted = fit_gennorm(xs)
        q_hat = tail_prob(fitted, threshold)
        rel = abs(q_hat - alpha) / alpha
        rel_errors.append(rel)
        within += rel <= 0.2
    share = within / reps
    ok = share >= 0.999
    detail = (
        f"share with |q_hat-q|/q <= 1/5 at n={n}: {share:.3f} "
        f"(need >= 0.999; median rel err {np.median(rel_errors):.2f})"
    )
    _line(2, ok, detail)
    assert ok, detail


def test_criterion_03_ks_study():
    out = lab.study_ks(embeddings=20, n_samples=332)
    ok = out["ks_mean"] <= 0.05
    assert _line(3, ok, f"mean KS over 20 embeddings = {out['ks_mean']:.4f} (limit 0.05)")


def test_criterion_05_concentration():
    d = 16384
    band = 3.0 * math.sqrt(8.0 / d)
    seed = lab.lab_seed("concentration")
    inside = 0
    dists = np.empty(1000)
    for t in range(1000):
        x = kernels.gaussians(seed, d, 2 * t)
        y = kernels.gaussians(seed, d, 2 * t + 1)
        nd = float(np.sum((x - y) ** 2)) / d
        dists[t] = nd
        inside += abs(nd - 2.0) <= band
    mean = float(dists.mean())
    ok = inside >= 990 and abs(mean - 2.0) <= 0.01
    assert _line(
        5, ok,
        f"{inside}/1000 trials within 2 +/- {band:.4f}; mean {mean:.4f} (within 0.01 of 2)",
    )


def test_criterion_06_distance_preservation():
    out = lab.study_distance(embeddings=30, points=30)
    ok = out["min_embedding_mean"] > out["lower_bound"]
    assert _line(
        6, ok,
        f"ratio means in [{out['min_embedding_mean']:.3f}, ...], "
        f"bound f(abar_T) = {out['lower_bound']:.3f}",
    )


def test_criterion_07_worst_case_tightness():
    d = 1024
    data = kernels.gaussians(lab.lab_seed("worst-case-tightness"), d)
    L = Latent(shape=(1, 1, d), data=data)
    eps = 0.5
    rng_dirs = np.random.default_rng(20240809)
    ok = True
    details = []
    for p in (1.0, 1.5, 2.0, 4.0):
        q = math.inf if p == 1.0 else p / (p - 1.0)
        v = worst_case_perturbation(L, eps, p)
        norm_q = (
            float(np.max(np.abs(L.data))) if math.isinf(q)
            else float(np.sum(np.abs(L.data) ** q)) ** (1.0 / q)
        )
        drop = similarity(L, L) - similarity(L.data, L.data + v.data)
        rel = abs(drop - eps * norm_q / d) / (eps * norm_q / d)
        ok = ok and rel <= 1e-8
        # no random eps-ball vector does better over 1e4 trials
        dirs = rng_dirs.standard_normal((10000, d))
        norms = np.sum(np.abs(dirs) ** p, axis=1) ** (1.0 / p)
        rand_best = float(np.min((dirs * (eps / norms)[:, None]) @ L.data))
        ok = ok and rand_best >= float(L.data @ v.data)
        details.append(f"p={p:g}: rel err {rel:.2e}")
    assert _line(7, ok, "; ".join(details))


def test_criterion_08_security_contrast():
    rounds = 10000
    real = lab.study_prf_game(insecure=False, rounds=rounds)
    stderr = math.sqrt(0.25 / rounds)
    ok = all(
        abs(v["advantage"]) <= 3 * stderr for v in real["distinguishers"].values()
    )
    broken = lab.study_prf_game(insecure=True, rounds=rounds)
    ok = ok and broken["distinguishers"]["key-recovery"]["win_rate"] >= 0.99
    adv = lab.study_advantage("replay", insecure=True, instances=16, trials=256)
    ok = ok and adv["min_advantage"] >= 0.45
    assert _line(
        8, ok,
        f"real-prf advantages {[round(v['advantage'], 4) for v in real['distinguishers'].values()]} "
        f"(3se={3 * stderr:.4f}); broken key-recovery win "
        f"{broken['distinguishers']['key-recovery']['win_rate']:.3f}; "
        f"replay-under-broken advantage min {adv['min_advantage']:.3f}",
    )


def test_criterion_09_a2_failure_detection():
    out = lab.study_a2(runs=100, n_scores=8192, rho=0.05)
    ok = out["clean_ok"] >= 99 and out["backdoored_violated"] == 100
    assert _line(
        9, ok,
        f"clean ok {out['clean_ok']}/100 (need >= 99); "
        f"backdoored violated {out['backdoored_violated']}/100 (need 100)",
    )


def test_criterion_10_determinism():
    m = MetaParams()
    backend = SurrogateBackend(default_m=m)
    emb = embedding_from_prompt("determinism check")
    ident = Identity(id_bytes=lab.lab_seed("determinism-id"), label="a", registered_at=EPOCH)
    kappa = Kappa(m=m, e_digest=emb.digest, r=bytes(16))
    J = backend.generate(m, emb.digest, derive_seed(ident, kappa))

    def run():
        req = ClaimRequest(
            contested=J, identity=ident, kappa=kappa,
            alpha=2.0 ** -11, delta=1e-4, backend=backend,
        )
        return adjudicate(req).to_canonical_json()

    ok = run() == run()
    assert _line(10, ok, "two adjudications of one request are byte-identical")


def test_criterion_04_table2_protocol():
    # Heaviest criterion, kept last: 100 embeddings x 9 contested variants
    # x three forger budgets, alpha = p_r / 2, delta = 1e-4.
    started = time.time()
    out = lab.study_table2(embeddings=100, progress=True)
    elapsed = time.time() - started
    max_fr = out["max_false_reject_rate"]
    fa = sum(out["false_accepts"].values())
    ok = max_fr <= 0.02 and fa == 0 and elapsed < 1800
    assert _line(
        4, ok,
        f"max false-reject rate {max_fr:.3f} (limit 0.02); false accepts {fa} (need 0); "
        f"{elapsed:.0f}s (budget 1800s)",
    )
