"""Empirical checks of the interpolation inequalities used in the convergence proofs.

Fields are random zero-mean trigonometric polynomials ``v = 2 Re sum_k c_k e^{2 pi i k.x}``
over the half-plane of modes with ``0 < |k| <= kmax``.  Integrals of squares
and fourth powers are exact: the quadrature grid resolves every product.  The
sup norm is located on a fine grid and polished by Newton steps on the exact
polynomial; it is still a lower bound if the grid misses the global peak.

Sample ``i`` under seed ``s`` always uses ``numpy.random.default_rng([s, i])``;
results therefore do not depend on batching, and extending the sample count
never lowers a reported maximum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi
EXACT_TOL = 1e-10
GAMMAS = (0.25, 0.5, 1.0)


def half_plane_modes(kmax: int = 8) -> np.ndarray:
    """Integer modes with ``0 < |k| <= kmax`` and ``k2 > 0`` or ``(k2 == 0, k1 > 0)``."""
    r = np.arange(-kmax, kmax + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    keep = (k1**2 + k2**2 <= kmax**2) & ((k2 > 0) | ((k2 == 0) & (k1 > 0)))
    return np.stack([k1[keep], k2[keep]], axis=1)


def _full_spectrum(modes: np.ndarray, coef: np.ndarray, n: int) -> np.ndarray:
    """Full-plane FFT array (batch, n, n) of ``2 Re sum c_k e_k``."""
    F = np.zeros(coef.shape[:-1] + (n, n), dtype=complex)
    k1, k2 = modes[:, 0], modes[:, 1]
    F[..., k1 % n, k2 % n] = coef
    F[..., (-k1) % n, (-k2) % n] = np.conj(coef)
    return F * n * n


def _synth(F: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(F).real


def _wavenumbers(n: int):
    k = np.fft.fftfreq(n, 1.0 / n)
    return TWO_PI * k[:, None], TWO_PI * k[None, :]


def quad_grid(kmax: int) -> int:
    """Smallest even grid size (at least 16) integrating degree-4 products of a kmax band exactly."""
    n = 4 * kmax + 2
    return max(16, n + n % 2)


def scalar_quantities(modes: np.ndarray, coef: np.ndarray, sup_grid: int = 128) -> dict:
    """Norms of the scalar polynomials with coefficients ``coef`` (batch, nmodes)."""
    kmax = int(np.max(np.abs(modes)))
    n = quad_grid(kmax)
    F = _full_spectrum(modes, coef, n)
    K1, K2 = _wavenumbers(n)
    v = _synth(F)
    vx = _synth(1j * K1 * F)
    vy = _synth(1j * K2 * F)
    lap = _synth(-(K1**2 + K2**2) * F)
    g2 = vx**2 + vy**2
    axes = (-2, -1)
    out = {
        "L2": np.sqrt(np.mean(v**2, axis=axes)),
        "H1": np.sqrt(np.mean(g2, axis=axes)),
        "H2": np.sqrt(np.mean(lap**2, axis=axes)),
        "L4sq": np.sqrt(np.mean(v**4, axis=axes)),
        "gradL4sq": np.sqrt(np.mean(g2**2, axis=axes)),
    }
    out["Linf"] = sup_norm(modes, coef, max(sup_grid, n))
    return out


def _evaluate(modes: np.ndarray, coef: np.ndarray, x: np.ndarray):
    """Value, gradient and Hessian of each polynomial at its point ``x`` (batch, 2)."""
    K = TWO_PI * modes
    e = coef * np.exp(1j * (x @ K.T))
    v = 2 * e.real.sum(-1)
    g = 2 * (1j * e @ K).real
    H = -2 * np.einsum("bn,ni,nj->bij", e, K, K).real
    return v, g, H


def sup_norm(modes: np.ndarray, coef: np.ndarray, n: int = 128, newton: int = 4) -> np.ndarray:
    """``max |v|`` from the grid maximum refined by Newton iterations on ``grad v = 0``."""
    v = _synth(_full_spectrum(modes, coef, n))
    flat = np.abs(v).reshape(len(v), -1)
    idx = flat.argmax(axis=1)
    best = flat[np.arange(len(v)), idx]
    x = np.stack(np.unravel_index(idx, (n, n)), axis=1) / n
    for _ in range(newton):
        _, g, H = _evaluate(modes, coef, x)
        # pseudo-inverse: ridges (e.g. a single mode) have a singular Hessian
        step = (np.linalg.pinv(H, rcond=1e-10) @ g[..., None])[..., 0]
        # stay within a grid cell of the sampled peak
        step = np.clip(step, -1.0 / n, 1.0 / n)
        x = x - step
    val = np.abs(_evaluate(modes, coef, x)[0])
    return np.maximum(best, val)


def vector_quantities(modes: np.ndarray, coef: np.ndarray) -> dict:
    """``||grad u||^2``, ``||div u||^2`` and ``||curl u||^2`` for (batch, 2, nmodes) coefficients."""
    kmax = int(np.max(np.abs(modes)))
    n = quad_grid(kmax)
    K1, K2 = _wavenumbers(n)
    F1 = _full_spectrum(modes, coef[:, 0], n)
    F2 = _full_spectrum(modes, coef[:, 1], n)
    d = [[_synth(1j * K * F) for K in (K1, K2)] for F in (F1, F2)]  # d[j][i] = d_i u_j
    axes = (-2, -1)
    grad = sum(np.mean(d[j][i] ** 2, axis=axes) for i in range(2) for j in range(2))
    div = np.mean((d[0][0] + d[1][1]) ** 2, axis=axes)
    curl = np.mean((d[1][0] - d[0][1]) ** 2, axis=axes)
    return {"grad": grad, "div": div, "curl": curl}


def _draw(seed: int, index: int, nmodes: int, weights: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    c = (rng.standard_normal((2, nmodes)) + 1j * rng.standard_normal((2, nmodes))) * weights
    return c / math.sqrt(2.0 * np.sum(np.abs(c[0]) ** 2))


@lru_cache(maxsize=16)
def _samples(seed: int, samples: int, kmax: int, power: float):
    modes = half_plane_modes(kmax)
    weights = np.hypot(modes[:, 0], modes[:, 1]) ** (-power)
    coef = np.array([_draw(seed, i, len(modes), weights) for i in range(samples)])
    return modes, coef


@lru_cache(maxsize=16)
def _scalar_stats(seed: int, samples: int, kmax: int, power: float, chunk: int = 250):
    modes, coef = _samples(seed, samples, kmax, power)
    parts = [scalar_quantities(modes, coef[i:i + chunk, 0]) for i in range(0, samples, chunk)]
    return modes, coef, {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _descriptor(seed: int, index: int, modes: np.ndarray, coef: np.ndarray) -> str:
    top = modes[int(np.argmax(np.abs(coef)))]
    return f"seed={seed} sample={index} dominant_mode=({top[0]},{top[1]})"


@dataclass(frozen=True)
class InequalityReport:
    inequality: str
    samples: int
    seed: int
    max_ratio: float
    argmax: str
    violations: int = 0
    bound: float | None = None
    gamma: float | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0 and math.isfinite(self.max_ratio)


def _report(name, ratios, seed, modes, coef, bound=None, gamma=None, tol=EXACT_TOL) -> InequalityReport:
    i = int(np.argmax(ratios))
    viol = int(np.sum(ratios > bound + tol)) if bound is not None else int(np.sum(~np.isfinite(ratios)))
    return InequalityReport(name, len(ratios), seed, float(ratios[i]), _descriptor(seed, i, modes, coef[i]),
                            viol, bound, gamma)


def check_ladyzhenskaya(samples: int = 10_000, seed: int = 0, kmax: int = 8, power: float = 0.0):
    """``||v||_L4^2 / (||v|| ||grad v||)``; the empirical max bounds the best constant from below."""
    if samples < 1:
        raise ValueError("samples must be positive")
    modes, coef, q = _scalar_stats(seed, samples, kmax, power)
    ratios = q["L4sq"] / (q["L2"] * q["H1"])
    return _report("ladyzhenskaya", ratios, seed, modes, coef[:, 0])


def check_interp_h1(samples: int = 10_000, seed: int = 0, kmax: int = 8, power: float = 0.0):
    """``||grad v|| / (||v||^(1/2) ||lap v||^(1/2))``, which never exceeds 1."""
    modes, coef, q = _scalar_stats(seed, samples, kmax, power)
    ratios = q["H1"] / np.sqrt(q["L2"] * q["H2"])
    return _report("interp_h1", ratios, seed, modes, coef[:, 0], bound=1.0)


def check_linf_interp(gamma: float, samples: int = 10_000, seed: int = 0, kmax: int = 8, power: float = 0.0):
    """``||v||_inf^2 / (||v||^g ||grad v||^(2-2g) ||lap v||^g + ||v||^2)``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    modes, coef, q = _scalar_stats(seed, samples, kmax, power)
    rhs = q["L2"] ** gamma * q["H1"] ** (2 - 2 * gamma) * q["H2"] ** gamma + q["L2"] ** 2
    return _report("linf_interp", q["Linf"] ** 2 / rhs, seed, modes, coef[:, 0], gamma=gamma)


def check_grad_l4(samples: int = 10_000, seed: int = 0, kmax: int = 8, power: float = 0.0):
    """``||grad v||_L4^2 / (||v||_inf ||lap v||)``."""
    modes, coef, q = _scalar_stats(seed, samples, kmax, power)
    return _report("grad_l4", q["gradL4sq"] / (q["Linf"] * q["H2"]), seed, modes, coef[:, 0])


def check_helmholtz(samples: int = 10_000, seed: int = 0, kmax: int = 8, power: float = 0.0, chunk: int = 250):
    """Relative defect of ``||grad u||^2 = ||div u||^2 + ||curl u||^2`` for random vector fields."""
    modes, coef = _samples(seed, samples, kmax, power)
    parts = [vector_quantities(modes, coef[i:i + chunk]) for i in range(0, samples, chunk)]
    q = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    defect = np.abs(q["grad"] - q["div"] - q["curl"]) / q["grad"]
    return _report("helmholtz", defect, seed, modes, coef[:, 0], bound=0.0)


def verify_all(samples: int = 10_000, seed: int = 0, gammas=GAMMAS) -> list[InequalityReport]:
    reports = [check_ladyzhenskaya(samples, seed), check_interp_h1(samples, seed)]
    reports += [check_linf_interp(g, samples, seed) for g in gammas]
    reports += [check_grad_l4(samples, seed), check_helmholtz(samples, seed)]
    return reports


def write_reports(path, reports: list[InequalityReport]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inequality", "gamma", "samples", "seed", "max_ratio", "violations", "argmax"])
        for r in reports:
            w.writerow([r.inequality, "" if r.gamma is None else r.gamma, r.samples, r.seed,
                        repr(r.max_ratio), r.violations, r.argmax])
    return path
