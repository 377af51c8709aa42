"""Simultaneous polynomial root finding (Aberth-Ehrlich) with Newton polishing.

Coefficients are ascending-degree complex arrays. The batched kernel solves
many same-degree polynomials at once; the backward-orbit builder relies on it
to factor whole tree levels in one call.
"""
from __future__ import annotations

import numpy as np

from .errors import NoConvergence

MAX_ITER = 500
MERGE_TOL = 1e-8
RESIDUAL_FACTOR = 1e-10


def trim_coeffs(coeffs) -> np.ndarray:
    """Drop zero high-degree coefficients; raise if everything vanishes."""
    c = np.asarray(coeffs, dtype=np.complex128)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coefficient list must be a non-empty 1-d sequence")
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        raise ValueError("all coefficients are zero")
    return c[: nz[-1] + 1]


def polyval(coeffs: np.ndarray, x):
    """Horner evaluation, ascending coefficients; broadcasts over x."""
    x = np.asarray(x)
    out = np.full(x.shape, coeffs[-1], dtype=np.complex128)
    for k in range(len(coeffs) - 2, -1, -1):
        out = out * x + coeffs[k]
    return out


def polyder(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.complex128)
    if len(c) <= 1:
        return np.zeros(1, dtype=np.complex128)
    return c[1:] * np.arange(1, len(c), dtype=np.float64)


def _polyval_batch(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    # coeffs (m, d+1), x (m, d) -> (m, d)
    out = np.broadcast_to(coeffs[:, -1:], x.shape).astype(np.complex128)
    for k in range(coeffs.shape[1] - 2, -1, -1):
        out = out * x + coeffs[:, k : k + 1]
    return out


def _initial_guesses(coeffs: np.ndarray) -> np.ndarray:
    """Points on a per-polynomial circle scaled by the Fujiwara root bound."""
    m, n1 = coeffs.shape
    d = n1 - 1
    lead = np.abs(coeffs[:, -1])
    ratios = np.abs(coeffs[:, :-1]) / lead[:, None]
    exps = 1.0 / np.arange(d, 0, -1, dtype=np.float64)  # k-th coeff -> 1/(d-k)
    with np.errstate(divide="ignore"):
        radius = 2.0 * np.max(ratios**exps, axis=1)
    radius = np.maximum(radius, 1e-12)
    # Fixed angular offset breaks symmetric stalls; deterministic by design.
    angles = 2.0 * np.pi * (np.arange(d) + 0.5) / d + 0.4
    return radius[:, None] * np.exp(1j * angles)[None, :]


def aberth_batch(coeffs: np.ndarray, max_iter: int = MAX_ITER) -> np.ndarray:
    """Roots of a batch of degree-d polynomials, shape (m, d+1) -> (m, d).

    Raises NoConvergence if any polynomial fails to settle within the cap.
    Leading coefficients must be nonzero.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    m, n1 = coeffs.shape
    d = n1 - 1
    if d < 1:
        return np.zeros((m, 0), dtype=np.complex128)
    if np.any(coeffs[:, -1] == 0):
        raise ValueError("leading coefficient is zero in batch")
    if d == 1:
        return (-coeffs[:, :1] / coeffs[:, 1:]).reshape(m, 1)

    dcoeffs = coeffs[:, 1:] * np.arange(1, n1, dtype=np.float64)
    w = _initial_guesses(coeffs)
    tol = 1e-14

    for _ in range(max_iter):
        p = _polyval_batch(coeffs, w)
        dp = _polyval_batch(dcoeffs, w)
        # Guard exact-zero derivatives (symmetric configurations) by nudging.
        bad = dp == 0
        if bad.any():
            dp = np.where(bad, 1e-30 + 0j, dp)
        newton = p / dp
        diff = w[:, :, None] - w[:, None, :]
        np.einsum("mii->mi", diff)[...] = np.inf  # exclude self terms
        s = (1.0 / diff).sum(axis=2)
        denom = 1.0 - newton * s
        denom = np.where(denom == 0, 1e-30 + 0j, denom)
        step = newton / denom
        w = w - step
        if np.max(np.abs(step) / (1.0 + np.abs(w))) <= tol:
            break
    else:
        raise NoConvergence(f"Aberth iteration exceeded {max_iter} iterations")
    return w


def newton_polish_batch(coeffs: np.ndarray, roots: np.ndarray, steps: int = 3) -> np.ndarray:
    """Guarded Newton steps: a step is kept only if it shrinks the residual."""
    dcoeffs = coeffs[:, 1:] * np.arange(1, coeffs.shape[1], dtype=np.float64)
    w = roots.copy()
    res = np.abs(_polyval_batch(coeffs, w))
    for _ in range(steps):
        dp = _polyval_batch(dcoeffs, w)
        dp = np.where(dp == 0, 1e-30 + 0j, dp)
        cand = w - _polyval_batch(coeffs, w) / dp
        cres = np.abs(_polyval_batch(coeffs, cand))
        better = cres < res
        w = np.where(better, cand, w)
        res = np.where(better, cres, res)
    return w


def _merge_close(roots: np.ndarray, tol: float) -> list[tuple[complex, int]]:
    """Cluster a 1-d root array; returns (centroid, multiplicity) pairs."""
    n = len(roots)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)
    out = []
    for members in clusters.values():
        centroid = complex(np.mean(roots[members]))
        out.append((centroid, len(members)))
    out.sort(key=lambda rm: (rm[0].real, rm[0].imag))
    return out


def _refine_multiple_roots(c: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """Collapse noise clusters around multiple roots onto their exact center.

    A multiplicity-m root smears into a cluster of radius ~eps^(1/m) when the
    polynomial is evaluated from expanded coefficients, but it is a simple
    root of the (m-1)-th derivative, where plain Newton recovers it to full
    precision. A refined center is accepted only if p evaluates to pure
    roundoff there, which keeps genuinely separate close roots apart.
    """
    d = len(c) - 1
    scale = float(np.max(np.abs(c)))
    suspicious = _merge_close(roots, 2e-5)
    if all(m == 1 for _, m in suspicious):
        return roots
    out = []
    for center, m in suspicious:
        if m == 1:
            out.append(center)
            continue
        dc = c
        for _ in range(m - 1):
            dc = polyder(dc)
        x = center
        for _ in range(40):
            dv = polyval(polyder(dc), x)
            if dv == 0:
                break
            step = polyval(dc, x) / dv
            x = x - step
            if abs(step) <= 1e-15 * (1.0 + abs(x)):
                break
        floor = 64.0 * d * np.finfo(float).eps * scale * max(1.0, abs(x)) ** d
        if abs(polyval(c, x)) <= floor and abs(x - center) <= 4e-5:
            out.extend([complex(x)] * m)
        else:
            out.extend([r for r in roots if abs(r - center) <= 2e-5])
    return np.asarray(out, dtype=np.complex128)


def solve_poly(coeffs, max_iter: int = MAX_ITER) -> list[tuple[complex, int]]:
    """All roots of one polynomial with multiplicities.

    Roots closer than MERGE_TOL are merged (multiplicities summed); output is
    sorted by (re, im). Residuals are polished below RESIDUAL_FACTOR * scale.
    """
    c = trim_coeffs(coeffs)
    d = len(c) - 1
    if d < 1:
        raise ValueError("degree must be >= 1 after trimming")
    batch = c[None, :]
    roots = aberth_batch(batch, max_iter=max_iter)
    roots = newton_polish_batch(batch, roots)[0]
    roots = _refine_multiple_roots(c, roots)

    scale = float(np.max(np.abs(c)))
    res = np.abs(polyval(c, roots))
    merged = _merge_close(roots, MERGE_TOL)
    # Multiple roots have residual ~ |x-x*|^mult, far below the simple-root
    # floor, so a single residual test covers both cases.
    if np.any(res > RESIDUAL_FACTOR * scale * max(1.0, float(np.max(np.abs(roots))) ** d)):
        worst = float(np.max(res))
        raise NoConvergence(f"root residual {worst:.3e} above tolerance (scale {scale:.3e})")
    return merged
