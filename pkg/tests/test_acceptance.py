"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (also repeated in the terminal
summary) carrying the measured value and the tolerance it was held to.
"""

import json
import re
import time

import numpy as np
import yaml

from conftest import PRINTED_AFTER, PRINTED_BEFORE, UNIT_SQUARE, ham_spec, poly, printed_pair, record_criterion
from hamscope.bayes import HmcConfig, conjugate_posterior, gaussian_log_density, hmc_sample, leapfrog
from hamscope.cli import main
from hamscope.config import parse_config
from hamscope.dynamics import VelocityTrajectory, central_differences
from hamscope.embed import StateTrajectory
from hamscope.hamfit import Domain, build_design, eval_hamiltonian, loss_and_grad, monomials
from hamscope.pipeline import run_pipeline
from hamscope.structcmp import fixed_point_analysis, landscape_distance, norm_l2, sir
from hamscope.synth import (
    SynthScenario,
    harmonic,
    integrate,
    make_event_pair,
    perturb,
    quadratic,
    random_quadratic,
    standard_suite,
)

PINNED_SIR = 0.45693032084900814


def _scenario(h, **kw):
    out = {"hamiltonian": ham_spec(dict(h.coeffs)), "dt": 0.05, "steps": 300}
    out.update(kw)
    return out


def test_planted_model_recovery():
    rng = np.random.default_rng(11)
    suite = standard_suite()
    planted = [(name, suite[name].h_true, list(suite[name].z0)) for name in ("harmonic", "tilted")]
    planted += [(f"random{k}", random_quadratic(rng), rng.uniform(0.5, 1.5, 2).tolist()) for k in range(3)]
    start = time.perf_counter()
    worst = 0.0
    for _, h, z0 in planted:
        s = _scenario(h, dt=0.01, steps=700, z0=z0)
        cfg = parse_config(
            {
                "input": {"synth": {"before": s, "after": s}},
                "normalization": "none",
                "embedding": {"method": "identity"},
                "fit": {"lambda": 1e-6},
            }
        )
        for report in run_pipeline(cfg).fits:
            fitted = report.hamiltonian.coeffs
            # gauge alignment: the constant is conventional, compare the rest
            err = max(abs(fitted.get(k, 0.0) - v) for k, v in h.coeffs.items() if k != (0, 0))
            worst = max(worst, err)
    elapsed = time.perf_counter() - start
    record_criterion(
        "planted-model recovery",
        worst <= 1e-3 and elapsed < 10.0,
        f"max abs coefficient error {worst:.2e} (<= 1e-3) over {len(planted)} scenarios, {elapsed:.2f} s (< 10 s)",
    )


def test_null_damage_discrimination():
    start = time.perf_counter()
    correct, null_max, damage_min = 0, 0.0, np.inf
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        h = random_quadratic(rng)
        damaged = k >= 10
        h_after = perturb(h, rng) if damaged else h
        z0b, z0a = rng.uniform(0.5, 1.5, 2).tolist(), rng.uniform(0.5, 1.5, 2).tolist()
        common = {"lift_dim": 20, "obs_noise_sigma": 0.01}
        cfg = parse_config(
            {
                "input": {
                    "synth": {
                        "before": _scenario(h, z0=z0b, seed=k, **common),
                        "after": _scenario(h_after, z0=z0a, seed=k + 100, **common),
                    }
                },
                "normalization": "zscore_per_segment",
                "pca": {"d_pca": 2},
                "embedding": {"method": "pca_only"},
                "smoothing": {"window": 5},
                "comparison": {"threshold": 0.07},
            }
        )
        cmp = run_pipeline(cfg).comparison
        correct += (cmp.verdict == "irreversible") == damaged
        if damaged:
            damage_min = min(damage_min, cmp.sir)
        else:
            null_max = max(null_max, cmp.sir)
    elapsed = time.perf_counter() - start
    record_criterion(
        "null/damage discrimination",
        correct == 20 and elapsed < 120.0,
        f"{correct}/20 verdicts correct (null max SIR {null_max:.4f}, damage min SIR {damage_min:.2f}),"
        f" {elapsed:.1f} s (< 120 s)",
    )


def test_false_recovery_exemplar():
    # the same closed orbit traversed in the opposite direction: every observed
    # series keeps its level and spread, while H flips sign
    common = {"dt": 0.05, "steps": 400, "z0": [1.0, 0.0], "lift_dim": 20, "baseline": 100.0, "seed": 3}
    hb, ha = harmonic(), quadratic(-0.5, 0.0, -0.5)
    cfg = parse_config(
        {
            "input": {"synth": {"before": _scenario(hb, **common), "after": _scenario(ha, **common)}},
            "normalization": "global_zscore",
            "pca": {"d_pca": 2},
            "embedding": {"method": "pca_only"},
        }
    )
    result = run_pipeline(cfg)
    split = result.synth.split
    mean_b, mean_a = split.before.values.mean(axis=1), split.after.values.mean(axis=1)
    mean_gap = float(np.max(np.abs(mean_a - mean_b) / np.abs(mean_b)))
    value = result.comparison.sir
    record_criterion(
        "false-recovery exemplar",
        mean_gap <= 0.05 and value > 0.07,
        f"per-series surface means within {100 * mean_gap:.3f}% (<= 5%), SIR {value:.3f} (> 0.07)",
    )


def test_analytic_quadrature():
    worst = {}
    for n, tol in ((101, 1e-3), (201, 1e-4)):
        dom = UNIT_SQUARE.with_resolution(n)
        z1, two_z1 = poly({(1, 0): 1.0}, dom=dom), poly({(1, 0): 2.0}, dom=dom)
        shifted = poly({(1, 0): 1.0, (0, 0): 1.0}, dom=dom)
        errs = [
            abs(landscape_distance(z1, two_z1, dom) - 4 / 3),
            abs(norm_l2(z1, dom) - np.sqrt(4 / 3)),
            abs(landscape_distance(z1, shifted, dom)),
        ]
        worst[n] = (max(errs), tol)
    ok = all(err <= tol for err, tol in worst.values())
    record_criterion(
        "analytic quadrature",
        ok,
        ", ".join(f"{n}^2 grid max error {err:.1e} (<= {tol:.0e})" for n, (err, tol) in worst.items()),
    )


def test_printed_coefficient_regression():
    hb, ha = poly(PRINTED_BEFORE), poly(PRINTED_AFTER)
    # values worked out by hand from the printed coefficients
    expected_values = [
        (hb, (0.0, 0.0), 0.045),
        (hb, (1.0, 0.0), 0.057),
        (hb, (0.0, 1.0), 0.099),
        (hb, (1.0, 1.0), -0.125),
        (ha, (1.0, 0.0), -0.130),
        (ha, (0.0, 1.0), 0.196),
        (ha, (1.0, 1.0), -0.002),
    ]
    expected_grads = [
        (hb, (1.0, 1.0), (-0.166, -0.033)),
        (ha, (1.0, 1.0), (-0.206, 0.172)),
        (hb, (0.0, 0.0), (-0.046, -0.095)),
    ]
    errs = [abs(eval_hamiltonian(h, z) - v) for h, z, v in expected_values]
    errs += [abs(g - e) for h, z, ge in expected_grads for g, e in zip(h.gradient(*z), ge)]
    big = Domain((-20.0, 20.0), (-20.0, 20.0))
    (cp,) = fixed_point_analysis(poly(PRINTED_AFTER, dom=big), big)
    errs += [abs(cp.z[0] + 0.01706 / 0.001412), abs(cp.z[1] + 0.000928 / 0.001412)]
    det = 0.116 * 0.298 - 0.236**2
    (cpb,) = fixed_point_analysis(poly(PRINTED_BEFORE, dom=big), big)
    errs += [abs(cpb.z[0] - (0.046 * 0.298 + 0.236 * 0.095) / det), abs(cpb.z[1] - (0.116 * 0.095 + 0.236 * 0.046) / det)]
    value = sir(*printed_pair(), UNIT_SQUARE).sir
    sir_err = abs(value - PINNED_SIR) / PINNED_SIR
    ok = max(errs) <= 1e-12 and sir_err <= 1e-9 and cp.kind == cpb.kind == "saddle"
    record_criterion(
        "printed-coefficient regression",
        ok,
        f"max hand-derived error {max(errs):.1e} (<= 1e-12) over {len(errs)} values;"
        f" SIR on [-1,1]^2 = {value:.6f} matches pinned {PINNED_SIR:.6f} (not the published figure)",
    )


def test_loss_gradient_correctness():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        degree = int(rng.integers(2, 5))
        T = int(rng.integers(10, 60))
        vt = VelocityTrajectory(rng.uniform(-2, 2, (T, 2)), rng.normal(size=(T, 2)), 1.0)
        A, b = build_design(vt, degree)
        theta = rng.normal(size=A.shape[1])
        lam = float(10 ** rng.uniform(-6, 0))
        _, grad = loss_and_grad(theta, A, b, lam)
        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = 1e-5
            fd[i] = (loss_and_grad(theta + e, A, b, lam)[0] - loss_and_grad(theta - e, A, b, lam)[0]) / 2e-5
        worst = max(worst, float(np.linalg.norm(grad - fd) / np.linalg.norm(grad)))
    record_criterion(
        "loss gradient correctness",
        worst <= 1e-5,
        f"max relative error {worst:.1e} (<= 1e-5) over 100 random draws",
    )


def test_hmc_calibration():
    rng = np.random.default_rng(17)
    T = 60
    states = rng.uniform(-1, 1, size=(T, 2))
    vel = np.c_[states[:, 1], -states[:, 0]] + 0.3 * rng.normal(size=(T, 2))
    vt = VelocityTrajectory(states, vel, 1.0)
    A, b = build_design(vt, 2)
    mean, _ = conjugate_posterior(A, b, 1.0, 0.3)
    post = hmc_sample(vt, 1.0, 0.3, HmcConfig(samples=5000))
    z_scores = np.abs(post.mean - mean) / post.mcse()

    logp = gaussian_log_density(A, b, 1.0, 0.3)
    theta0, p0 = rng.normal(size=A.shape[1]), rng.normal(size=A.shape[1])
    theta1, p1, _ = leapfrog(theta0, p0, logp, 0.005, 30)
    theta2, p2, _ = leapfrog(theta1, -p1, logp, 0.005, 30)
    rev = float(max(np.max(np.abs(theta2 - theta0)), np.max(np.abs(p2 + p0))))

    rates = {}
    for name, scenario in standard_suite().items():
        rates[name] = hmc_sample(central_differences(integrate(scenario))).acceptance_rate
    ok = z_scores.max() <= 3 and rev <= 1e-8 and all(0.6 <= r <= 0.95 for r in rates.values())
    record_criterion(
        "HMC calibration",
        ok,
        f"posterior mean within {z_scores.max():.2f} MCSE (<= 3), reversibility {rev:.1e} (<= 1e-8),"
        f" acceptance " + ", ".join(f"{k} {v:.2f}" for k, v in rates.items()) + " (in [0.6, 0.95])",
    )


def test_numerical_orders():
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 2))
        dt = float(rng.uniform(0.01, 1.0))
        t = np.arange(30) * dt
        z = StateTrajectory(a + np.outer(t, b) + np.outer(t**2, c), dt)
        vt = central_differences(z)
        exact = b + 2 * np.outer(t[1:-1], c)
        worst = max(worst, float(np.max(np.abs(vt.velocities - exact))))

    h, errs = harmonic(), []
    for dt in (0.1, 0.05):
        steps = int(round(4.0 / dt)) + 1
        end = integrate(SynthScenario(h, dt=dt, steps=steps)).states[-1]
        T = (steps - 1) * dt
        errs.append(np.linalg.norm(end - [np.cos(T), -np.sin(T)]))
    ratio = errs[0] / errs[1]
    record_criterion(
        "numerical-analysis orders",
        worst <= 1e-10 and abs(ratio - 16) <= 0.3 * 16,
        f"central differences on quadratics max error {worst:.1e} (<= 1e-10), RK4 halving ratio {ratio:.2f} (16 +- 30%)",
    )


def test_determinism(tmp_path):
    common = {"lift_dim": 12, "obs_noise_sigma": 0.01, "steps": 150}
    cfg = {
        "input": {
            "synth": {
                "before": _scenario(harmonic(), seed=1, **common),
                "after": _scenario(quadratic(0.8, 0.1, 0.6, 0.1, 0.0), seed=2, z0=[0.7, 0.4], **common),
            }
        },
        "pca": {"d_pca": 4},
        "embedding": {"method": "pca_tsne", "perplexity": 20, "n_iter": 500},
        "hmc": {"enabled": True, "samples": 200, "warmup": 100},
        "seed": 8,
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["pipeline", "--config", str(path), "--out-dir", str(out)])
        raw = (out / "report.json").read_bytes()
        stamp = json.loads(raw)["manifest"]["timestamp"]
        blobs.append(re.sub(rb'"timestamp": "[^"]*"', b'"timestamp": ""', raw))
        assert stamp.encode() in raw
    same = blobs[0] == blobs[1]
    record_criterion(
        "determinism",
        same,
        f"report.json byte-identical across two runs excluding manifest.timestamp ({len(blobs[0])} bytes)",
    )
