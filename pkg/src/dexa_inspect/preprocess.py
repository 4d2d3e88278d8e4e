"""Thickness-corrected, normalized quotient of a dual-energy projection pair.

Pipeline: foreground mask on the high-voltage channel, pixelwise quotient
``R = M1 / M2``, a quadratic fit of ``R`` against ``M2`` over all masked
pixels, subtraction of that trend, and standardisation of the residual in
bins of ``M2`` intensity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .physics import ProjectionPair

log = logging.getLogger(__name__)


class NoForegroundError(ValueError):
    pass


@dataclass
class PreprocessConfig:
    threshold: float = 0.2
    bin_width: float = 0.1
    min_bin_count: int = 8
    sigma_floor: float = 1e-12


@dataclass
class ThicknessFit:
    a: float
    b: float
    c: float
    rms: float
    n_pixels: int
    degenerate: bool = False

    def __call__(self, m2):
        m2 = np.asarray(m2, dtype=float)
        return self.a * m2**2 + self.b * m2 + self.c


@dataclass
class BinStats:
    """Per-bin statistics of the corrected quotient.

    Each entry of ``bins`` describes one group of pixels: its M2 interval
    ``[lo, hi)``, mean, population std, count and whether its std was zero.
    Sparse intervals are merged into a neighbour, so a group may span more
    than one ``width``.
    """

    origin: float
    width: float
    bins: list[dict] = field(default_factory=list)


@dataclass
class NormalizedQuotient:
    n: np.ndarray
    mask: np.ndarray
    fit: ThicknessFit
    bins: BinStats
    quotient: np.ndarray | None = None
    corrected: np.ndarray | None = None


def foreground_mask(m2, threshold: float = 0.2) -> np.ndarray:
    if not threshold > 0:
        raise ValueError("foreground threshold must be positive")
    return np.asarray(m2, dtype=float) >= threshold


def quotient(m1, m2, mask) -> np.ndarray:
    """``M1 / M2`` on the mask, zero elsewhere.

    Masked pixels with ``M2 == 0`` are reported and left at zero; use
    :func:`valid_quotient_mask` to drop them from the mask.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not (m1.shape == m2.shape == mask.shape):
        raise ValueError("shape mismatch between channels and mask")
    ok = mask & (m2 != 0)
    bad = int(np.count_nonzero(mask & ~ok))
    if bad:
        log.warning("%d masked pixels with M2 == 0 dropped from the quotient", bad)
    r = np.zeros_like(m1)
    r[ok] = m1[ok] / m2[ok]
    return r


def valid_quotient_mask(m2, mask) -> np.ndarray:
    return np.asarray(mask, dtype=bool) & (np.asarray(m2) != 0)


def fit_thickness_dependency(r, m2, mask) -> ThicknessFit:
    """Least-squares fit ``R ~ a M2^2 + b M2 + c`` over all masked pixels.

    The normal equations are solved in the standardised variable
    ``(M2 - mean) / std`` and the coefficients mapped back. If M2 takes a
    single value the fit degenerates to ``c = mean(R)``; with two values it
    degenerates to a line. Both cases set ``degenerate``.
    """
    mask = np.asarray(mask, dtype=bool)
    y = np.asarray(r, dtype=float)[mask]
    x = np.asarray(m2, dtype=float)[mask]
    n = y.size
    if n < 3:
        raise ValueError(f"thickness fit needs at least 3 masked pixels, got {n}")
    distinct = np.unique(x).size
    if distinct == 1:
        c = float(y.mean())
        return ThicknessFit(0.0, 0.0, c, float(np.sqrt(np.mean((y - c) ** 2))), n, True)

    shift, scale = x.mean(), x.std()
    t = (x - shift) / scale
    order = 2 if distinct >= 3 else 1
    design = np.vander(t, order + 1)  # columns t^order .. t^0
    gram = design.T @ design
    coef = np.linalg.solve(gram, design.T @ y)
    if order == 1:
        coef = np.concatenate([[0.0], coef])
    al, be, ga = coef
    a = al / scale**2
    b = be / scale - 2 * al * shift / scale**2
    c = al * shift**2 / scale**2 - be * shift / scale + ga
    resid = y - (a * x**2 + b * x + c)
    return ThicknessFit(float(a), float(b), float(c), float(np.sqrt(np.mean(resid**2))), n, order < 2)


def correct(r, m2, fit: ThicknessFit, mask) -> np.ndarray:
    coeffs = (fit.a, fit.b, fit.c)
    if not all(math.isfinite(v) for v in coeffs):
        raise ValueError("thickness fit has non-finite coefficients")
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros(np.shape(r))
    out[mask] = np.asarray(r, dtype=float)[mask] - fit(np.asarray(m2, dtype=float)[mask])
    return out


def _bin_groups(counts, min_count):
    """Map bin index -> group index; sparse bins join the nearest lower group."""
    group = np.full(counts.size, -1)
    n_groups = 0
    pending = []
    for i, cnt in enumerate(counts):
        if cnt == 0:
            continue
        if cnt >= min_count:
            group[i] = n_groups
            group[pending] = n_groups
            pending = []
            n_groups += 1
        elif n_groups:
            group[i] = n_groups - 1
        else:
            pending.append(i)
    if pending:
        group[pending] = 0
        n_groups = max(n_groups, 1)
    return group, n_groups


def normalize(r_corr, m2, mask, bin_width: float = 0.1, origin: float = 0.2,
              min_bin_count: int = 8, sigma_floor: float = 1e-12) -> NormalizedQuotient:
    """Standardise the corrected quotient within bins of M2 intensity.

    Bins are ``[origin + i*w, origin + (i+1)*w)``; the last one also holds
    the maximum. Statistics use the population std. Bins whose std does not
    exceed ``sigma_floor`` yield zeros.
    """
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    mask = np.asarray(mask, dtype=bool)
    r_corr = np.asarray(r_corr, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    n = np.zeros_like(r_corr)
    stats = BinStats(origin, bin_width)
    if not mask.any():
        return NormalizedQuotient(n, mask, None, stats)

    vals = r_corr[mask]
    x = m2[mask]
    nbins = max(1, math.ceil((x.max() - origin) / bin_width))
    edges = origin + bin_width * np.arange(1, nbins)
    idx = np.searchsorted(edges, x, side="right")
    counts = np.bincount(idx, minlength=nbins)
    group_of_bin, n_groups = _bin_groups(counts, min_bin_count)
    gid = group_of_bin[idx]

    out = np.zeros_like(vals)
    for g in range(n_groups):
        sel = gid == g
        members = np.flatnonzero(group_of_bin == g)
        v = vals[sel]
        mean = float(v.mean())
        std = float(v.std())
        degenerate = std <= sigma_floor
        if degenerate:
            log.debug("bin group %d has zero spread; N set to 0", g)
        else:
            out[sel] = (v - mean) / std
        stats.bins.append({
            "lo": origin + members.min() * bin_width,
            "hi": origin + (members.max() + 1) * bin_width,
            "mean": mean,
            "std": std,
            "count": int(v.size),
            "degenerate": bool(degenerate),
        })
    n[mask] = out
    return NormalizedQuotient(n, mask, None, stats)


def preprocess_pipeline(pair: ProjectionPair, config: PreprocessConfig | None = None) -> NormalizedQuotient:
    cfg = config or PreprocessConfig()
    mask = foreground_mask(pair.m2, cfg.threshold)
    mask = valid_quotient_mask(pair.m2, mask)
    if not mask.any():
        raise NoForegroundError("no foreground: no pixel reaches the mask threshold")
    r = quotient(pair.m1, pair.m2, mask)
    fit = fit_thickness_dependency(r, pair.m2, mask)
    r_corr = correct(r, pair.m2, fit, mask)
    nq = normalize(r_corr, pair.m2, mask, cfg.bin_width, cfg.threshold,
                   cfg.min_bin_count, cfg.sigma_floor)
    nq.fit = fit
    nq.quotient = r
    nq.corrected = r_corr
    return nq
