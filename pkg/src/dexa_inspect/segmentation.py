"""Two-phase Chan-Vese segmentation by level-set evolution.

The level set ``phi`` marks the defect phase where ``phi >= 0``. Each
iteration refreshes the phase means and performs one semi-implicit
Gauss-Seidel sweep over the pixels in raster order. Pixels outside the
optional domain mask are excluded: they do not enter the means and act as
zero-flux boundaries for the curvature term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass(frozen=True)
class ChanVeseParams:
    mu: float = 4.0
    nu: float = 2.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    dt: float = 1.0
    tol: float = 1e-4
    max_iter: int = 200
    epsilon: float = 1.0
    eta: float = 1e-8
    t_init: float = 5.0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("lambda1 and lambda2 must be positive")
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be non-negative")
        if not (self.dt > 0 and self.tol > 0 and self.epsilon > 0 and self.eta > 0):
            raise ValueError("dt, tol, epsilon and eta must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SegmentationResult:
    mask: np.ndarray
    c1: float
    c2: float
    iterations: int
    converged: bool
    energy: float
    phi: np.ndarray
    empty_phase: bool = False


def init_levelset(image, t_init: float = 5.0, domain=None) -> np.ndarray:
    """``+1`` where ``image >= t_init`` (inside the domain), ``-1`` elsewhere."""
    image = np.asarray(image, dtype=float)
    inside = image >= t_init
    if domain is not None:
        inside &= np.asarray(domain, dtype=bool)
    return np.where(inside, 1.0, -1.0)


def region_means(image, mask, domain=None):
    """Means of ``image`` over ``mask`` and its complement within ``domain``.

    An empty phase gets the mean of the whole domain. Returns
    ``(c1, c2, empty1, empty2)``.
    """
    image = np.asarray(image, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    dom = np.ones(image.shape, bool) if domain is None else np.asarray(domain, dtype=bool)
    inside = mask & dom
    outside = ~mask & dom
    fallback = float(image[dom].mean()) if dom.any() else 0.0
    empty1 = not inside.any()
    empty2 = not outside.any()
    c1 = fallback if empty1 else float(image[inside].mean())
    c2 = fallback if empty2 else float(image[outside].mean())
    return c1, c2, empty1, empty2


def discrete_perimeter(mask, domain=None) -> int:
    """Number of 4-neighbour pixel pairs (inside the domain) with differing labels."""
    mask = np.asarray(mask, dtype=bool)
    dom = np.ones(mask.shape, bool) if domain is None else np.asarray(domain, dtype=bool)
    vert = (mask[1:, :] != mask[:-1, :]) & dom[1:, :] & dom[:-1, :]
    horiz = (mask[:, 1:] != mask[:, :-1]) & dom[:, 1:] & dom[:, :-1]
    return int(vert.sum() + horiz.sum())


def energy(image, mask, params: ChanVeseParams, domain=None) -> float:
    """Discrete two-phase energy of a binary labelling.

    Fit terms use the exact phase means, the length term counts label
    changes between 4-neighbours and the area term counts defect pixels.
    """
    image = np.asarray(image, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    dom = np.ones(image.shape, bool) if domain is None else np.asarray(domain, dtype=bool)
    inside = mask & dom
    outside = ~mask & dom
    fit = 0.0
    if inside.any():
        v = image[inside]
        fit += params.lambda1 * float(((v - v.mean()) ** 2).sum())
    if outside.any():
        v = image[outside]
        fit += params.lambda2 * float(((v - v.mean()) ** 2).sum())
    return fit + params.mu * discrete_perimeter(inside, dom) + params.nu * int(inside.sum())


@numba.njit(cache=True)
def _means(phi, f, dom):
    s1 = s2 = 0.0
    n1 = n2 = 0
    for i in range(1, phi.shape[0] - 1):
        for j in range(1, phi.shape[1] - 1):
            if dom[i, j]:
                if phi[i, j] >= 0:
                    s1 += f[i, j]
                    n1 += 1
                else:
                    s2 += f[i, j]
                    n2 += 1
    return s1, n1, s2, n2


@numba.njit(cache=True)
def _sweep(phi, f, dom, c1, c2, lam1, lam2, mu, nu, dt, eps, eta):
    """One in-place Gauss-Seidel sweep over a padded grid.

    ``dom`` is False on the one-pixel pad, so image borders and domain
    borders are handled alike: missing neighbours take the centre value and
    the edge towards them carries no flux. Returns the summed absolute
    increment.
    """
    eta2 = eta * eta
    total = 0.0
    for i in range(1, phi.shape[0] - 1):
        for j in range(1, phi.shape[1] - 1):
            if not dom[i, j]:
                continue
            p0 = phi[i, j]
            hn = dom[i - 1, j]
            hs = dom[i + 1, j]
            hw = dom[i, j - 1]
            he = dom[i, j + 1]
            pn = phi[i - 1, j] if hn else p0
            ps = phi[i + 1, j] if hs else p0
            pw = phi[i, j - 1] if hw else p0
            pe = phi[i, j + 1] if he else p0
            pnw = phi[i - 1, j - 1] if dom[i - 1, j - 1] else pw
            pne = phi[i - 1, j + 1] if dom[i - 1, j + 1] else pe
            psw = phi[i + 1, j - 1] if dom[i + 1, j - 1] else pw
            # curvature coefficients on the four half-grid edges
            ce = 1.0 / np.sqrt(eta2 + (pe - p0) ** 2 + 0.25 * (ps - pn) ** 2) if he else 0.0
            cw = 1.0 / np.sqrt(eta2 + (p0 - pw) ** 2 + 0.25 * (psw - pnw) ** 2) if hw else 0.0
            cs = 1.0 / np.sqrt(eta2 + (ps - p0) ** 2 + 0.25 * (pe - pw) ** 2) if hs else 0.0
            cn = 1.0 / np.sqrt(eta2 + (p0 - pn) ** 2 + 0.25 * (pne - pnw) ** 2) if hn else 0.0
            delta = dt * eps / (np.pi * (eps * eps + p0 * p0))
            d1 = f[i, j] - c1
            d2 = f[i, j] - c2
            force = -nu - lam1 * d1 * d1 + lam2 * d2 * d2
            num = p0 + delta * (mu * (ce * pe + cw * pw + cs * ps + cn * pn) + force)
            den = 1.0 + delta * mu * (ce + cw + cs + cn)
            new = num / den
            total += abs(new - p0)
            phi[i, j] = new
    return total


@numba.njit(cache=True)
def _evolve_loop(phi, f, dom, n_dom, lam1, lam2, mu, nu, dt, eps, eta, tol, max_iter):
    """Returns ``(iterations, converged, emptied)``."""
    for it in range(max_iter):
        s1, n1, s2, n2 = _means(phi, f, dom)
        if n1 == 0:
            return it, True, True
        c1 = s1 / n1
        c2 = s2 / n2 if n2 > 0 else (s1 + s2) / (n1 + n2)
        change = _sweep(phi, f, dom, c1, c2, lam1, lam2, mu, nu, dt, eps, eta)
        if change / n_dom < tol:
            return it + 1, True, False
    return max_iter, False, False


def evolve(image, params: ChanVeseParams | None = None, domain=None, phi0=None) -> SegmentationResult:
    """Evolve a level set from threshold initialisation to a Chan-Vese minimiser.

    Stops when the mean absolute change of ``phi`` per domain pixel falls
    below ``params.tol``, after ``params.max_iter`` sweeps, or as soon as the
    defect phase becomes empty.
    """
    p = params or ChanVeseParams()
    f = np.asarray(image, dtype=float)
    if f.ndim != 2:
        raise ValueError("image must be 2-D")
    if not np.all(np.isfinite(f)):
        raise ValueError("image contains non-finite values")
    dom = np.ones(f.shape, bool) if domain is None else np.asarray(domain, dtype=bool)
    if dom.shape != f.shape:
        raise ValueError("domain mask shape differs from image")
    phi = init_levelset(f, p.t_init, dom) if phi0 is None else np.array(phi0, dtype=float)

    phi_p = np.pad(phi, 1)
    f_p = np.pad(f, 1)
    dom_p = np.pad(dom, 1)
    n_dom = max(int(dom.sum()), 1)
    iterations, converged, emptied = _evolve_loop(
        phi_p, f_p, dom_p, n_dom, p.lambda1, p.lambda2, p.mu, p.nu,
        p.dt, p.epsilon, p.eta, p.tol, int(p.max_iter))
    phi = phi_p[1:-1, 1:-1]

    mask = (phi >= 0) & dom
    c1, c2, empty1, _ = region_means(f, mask, dom)
    return SegmentationResult(
        mask=mask,
        c1=c1,
        c2=c2,
        iterations=int(iterations),
        converged=bool(converged),
        energy=energy(f, mask, p, dom),
        phi=phi,
        empty_phase=bool(emptied or empty1),
    )


def segment(nq, params: ChanVeseParams | None = None) -> SegmentationResult:
    """Segment a :class:`~dexa_inspect.preprocess.NormalizedQuotient` within its mask."""
    image = np.where(nq.mask, nq.n, 0.0)
    return evolve(image, params, domain=nq.mask)
