"""Release gate: quick numeric checks of every module at fixed sizes and seeds."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..linops import (
    KnownMean,
    NoisyDataMean,
    SynthesisOperator,
    build_tv_1d,
    build_tv_2d,
    pseudoinverse,
)
from ..map_solvers import solve_analysis_tv, solve_synthesis_l1
from ..model import SynthesisModel
from ..noise_metrics import add_noise, snr
from ..phantoms import piecewise_constant, shepp_logan_2d, shepp_logan_slice
from ..sbl import SblHyperparams, marginal_log_likelihood, posterior_moments, sbl_em, sbl_fast

__all__ = ["Check", "run_selftest", "projector_diagonal_report", "main"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _corrupted(op):
    V = pseudoinverse(op).matrix.copy()
    V[0, 0] += 1e-3
    return SynthesisOperator(V, op)


def _projector_error(op, pinv):
    P = pinv(op).projector()
    N = op.cols
    return float(np.abs(P - (np.eye(N) - 1.0 / N)).max())


def _check_projector_1d(pinv):
    worst = max(_projector_error(build_tv_1d(n), pinv) for n in range(2, 33))
    return worst <= 1e-10, f"max |D+D - (I - J/N)| = {worst:.2e} for N = 2..32"


def _check_projector_2d(pinv):
    worst = max(_projector_error(build_tv_2d(n), pinv) for n in range(2, 9))
    return worst <= 1e-9, f"max |D+D - (I - J/N^2)| = {worst:.2e} for sides 2..8"


def _check_adjustment(pinv):
    rng = np.random.default_rng(0)
    worst = 0.0
    for op in [build_tv_1d(n) for n in (2, 7, 64)] + [build_tv_2d(n) for n in (2, 5, 8)]:
        V = pinv(op).matrix
        for _ in range(5):
            x = rng.standard_normal(op.cols)
            worst = max(worst, float(np.abs(x - (V @ op.matvec(x) + x.mean())).max()))
    return worst <= 1e-10, f"max |x - (D+Dx + mean)| = {worst:.2e}"


def _check_moments():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        J, M = rng.integers(2, 12), rng.integers(1, 8)
        Phi, b = rng.standard_normal((J, M)), rng.standard_normal(J)
        h = SblHyperparams(rng.uniform(0.1, 5, M), float(rng.uniform(0.1, 5)))
        m, S = posterior_moments(Phi, b, h)
        S_ref = np.linalg.inv(h.beta * Phi.T @ Phi + np.diag(h.a))
        C = np.eye(J) / h.beta + Phi @ np.diag(1 / h.a) @ Phi.T
        L_ref = -0.5 * (J * np.log(2 * np.pi) + np.linalg.slogdet(C)[1] + b @ np.linalg.solve(C, b))
        worst = max(worst, np.abs(S - S_ref).max(), np.abs(m - h.beta * S_ref @ Phi.T @ b).max(),
                    abs(marginal_log_likelihood(Phi, b, h) - L_ref))
    return worst <= 1e-9, f"max deviation from dense oracle = {worst:.2e}"


def _check_em_monotone():
    op = build_tv_1d(64)
    worst = 0.0
    for seed in range(3):
        x = piecewise_constant(64, 4, seed).samples
        obs = add_noise(x, 10.0, seed)
        post = sbl_em(SynthesisModel(op, NoisyDataMean(obs.data)), obs.data)
        worst = min(worst, float(np.diff(post.likelihood_trace).min(initial=0.0)))
    return worst >= -1e-8, f"largest likelihood decrease = {-worst:.2e}"


def _check_noiseless_support():
    op = build_tv_1d(32)
    ok = True
    for seed in range(3):
        p = piecewise_constant(32, 3, seed)
        model = SynthesisModel(op, KnownMean(p.samples.mean()), offset="project")
        for fn in (sbl_em, sbl_fast):
            post = fn(model, p.samples)
            ok &= np.array_equal(post.active, p.edge_set)
    return bool(ok), "sbl-em and sbl-fast recover the support of 3 noiseless k=3 signals"


def _check_map():
    x = shepp_logan_slice(128).samples
    obs = add_noise(x, 6.4, 0)
    op = build_tv_1d(128)
    a = solve_analysis_tv(obs.data, op, 0.5, opts=None)
    s = solve_synthesis_l1(SynthesisModel(op, NoisyDataMean(obs.data)), obs.data, 0.5)
    dist = np.linalg.norm(a.restoration - s.restoration) / np.linalg.norm(a.restoration)
    mono = min(np.diff(a.objective_trace).max(), np.diff(s.objective_trace).max()) <= 0
    return bool(dist <= 0.05 and mono), f"analysis vs synthesis distance {dist:.2e}, traces monotone"


def _check_phantom():
    p = shepp_logan_slice(128)
    img = shepp_logan_2d(128).pixels
    ok = p.edge_set.size == 8 and img.min() >= 0 and img.max() <= 1
    return bool(ok), f"slice has {p.edge_set.size} edges; image range [{img.min():g}, {img.max():g}]"


def _check_noise():
    x = shepp_logan_slice(128).samples
    obs = add_noise(x, 6.4, 3)
    again = add_noise(x, 6.4, 3)
    err = abs(snr(x, obs.noise) - 6.4)
    return bool(err < 1e-10 and np.array_equal(obs.data, again.data)), f"SNR error {err:.1e}, reproducible"


def projector_diagonal_report(sides=range(4, 9)) -> list[tuple[int, float, float]]:
    """Measured diagonal of ``D+ D`` for 2D operators: ``(side, min, max)``."""
    out = []
    for n in sides:
        d = np.diag(build_tv_2d(n).synthesis.projector())
        out.append((n, float(d.min()), float(d.max())))
    return out


def run_selftest(corrupt_pseudoinverse: bool = False) -> list[Check]:
    """Run every check. ``corrupt_pseudoinverse`` perturbs ``D+`` so the
    operator checks must fail (a negative-path hook for testing the gate)."""
    pinv: Callable = _corrupted if corrupt_pseudoinverse else pseudoinverse
    checks = [
        ("projector-1d", lambda: _check_projector_1d(pinv)),
        ("projector-2d", lambda: _check_projector_2d(pinv)),
        ("mean-adjustment", lambda: _check_adjustment(pinv)),
        ("posterior-oracle", _check_moments),
        ("em-monotone", _check_em_monotone),
        ("noiseless-support", _check_noiseless_support),
        ("map-agreement", _check_map),
        ("phantom", _check_phantom),
        ("noise-snr", _check_noise),
    ]
    results = []
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(Check(name, bool(passed), detail))
    return results


def main(corrupt_pseudoinverse: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    results = run_selftest(corrupt_pseudoinverse)
    width = max(len(c.name) for c in results)
    for c in results:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}  {c.detail}", file=stream)
    print("\n2D projector diagonal, side n (expected 1 - 1/n^2; the rule (n^2 - n)/n^2 for comparison):",
          file=stream)
    for n, lo, hi in projector_diagonal_report():
        print(f"  n = {n}: measured [{lo:.12f}, {hi:.12f}]  1 - 1/n^2 = {1 - 1 / n ** 2:.12f}"
              f"  (n^2 - n)/n^2 = {(n * n - n) / n ** 2:.12f}", file=stream)
    failed = [c.name for c in results if not c.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failing: {', '.join(failed)}" if failed else ""), file=stream)
    return 1 if failed else 0
