"""Polychromatic absorption model and synthetic dual-energy phantoms.

Spectra and attenuation curves are tabulated on an energy grid in keV.
Attenuation curves are interpolated log-log onto the spectrum grid and
integrals over energy use the trapezoidal rule on the spectrum samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).parent / "data"

# expected footprint (mean, std) in pixels per inclusion class
FOOTPRINT_STATS = {
    "fan": (370.0, 120.0),
    "large_rib": (290.0, 70.0),
    "small_rib": (160.0, 35.0),
}
# footprint aspect ratio range (major/minor) per class
_ASPECT = {
    "fan": (1.2, 2.0),
    "large_rib": (2.0, 3.5),
    "small_rib": (2.0, 3.5),
}
PHANTOM_KINDS = ("fan", "large_rib", "small_rib", "none")


class PhysicsDomainError(ValueError):
    """An attenuation curve does not cover the energy support of a spectrum."""


def _as_table(energies, values, name):
    energies = np.asarray(energies, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if energies.size == 0:
        raise ValueError(f"{name}: empty table")
    if energies.shape != values.shape:
        raise ValueError(f"{name}: energies and values differ in length")
    if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(values))):
        raise ValueError(f"{name}: non-finite entries")
    if np.any(np.diff(energies) <= 0):
        raise ValueError(f"{name}: energies must be strictly increasing")
    return energies, values


@dataclass(frozen=True)
class Spectrum:
    """Relative photon fluence of a tube sampled on an energy grid (keV)."""

    energies: np.ndarray
    fluence: np.ndarray
    label: str = ""

    def __post_init__(self):
        e, f = _as_table(self.energies, self.fluence, "spectrum")
        if np.any(f < 0):
            raise ValueError("spectrum: negative fluence")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "fluence", f)
        if self.weights().sum() <= 0:
            raise ValueError("spectrum: total fluence must be positive")

    @classmethod
    def monochromatic(cls, energy: float, label: str = "") -> "Spectrum":
        return cls(np.array([energy]), np.array([1.0]), label or f"{energy:g} keV")

    def weights(self) -> np.ndarray:
        """Quadrature weights I(E_k) w_k; a single line degenerates to weight 1."""
        if self.energies.size == 1:
            return self.fluence.copy()
        e = self.energies
        w = np.empty_like(e)
        w[0] = 0.5 * (e[1] - e[0])
        w[-1] = 0.5 * (e[-1] - e[-2])
        w[1:-1] = 0.5 * (e[2:] - e[:-2])
        return w * self.fluence


@dataclass(frozen=True)
class AttenuationCurve:
    """Linear attenuation coefficient (1/cm) of one material versus energy."""

    energies: np.ndarray
    mu: np.ndarray
    label: str = ""

    def __post_init__(self):
        e, m = _as_table(self.energies, self.mu, "attenuation curve")
        if np.any(m < 0):
            raise ValueError("attenuation curve: negative coefficient")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "mu", m)

    def __call__(self, energies) -> np.ndarray:
        """Interpolate in log(mu) versus log(E); linear where mu vanishes."""
        x = np.asarray(energies, dtype=float)
        e, m = self.energies, self.mu
        tol = 1e-9 * max(1.0, abs(e[-1]))
        if np.any(x < e[0] - tol) or np.any(x > e[-1] + tol):
            raise PhysicsDomainError(
                f"curve {self.label!r} covers [{e[0]:g}, {e[-1]:g}] keV, "
                f"requested [{x.min():g}, {x.max():g}]"
            )
        if e.size == 1:
            return np.full(x.shape, m[0])
        x = np.clip(x, e[0], e[-1])
        idx = np.clip(np.searchsorted(e, x, side="right") - 1, 0, e.size - 2)
        e0, e1 = e[idx], e[idx + 1]
        m0, m1 = m[idx], m[idx + 1]
        t_lin = (x - e0) / (e1 - e0)
        lin = m0 + t_lin * (m1 - m0)
        positive = (m0 > 0) & (m1 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_log = np.log(x / e0) / np.log(e1 / e0)
            loglog = np.exp(np.log(m0) + t_log * (np.log(m1) - np.log(m0)))
        out = np.where(positive, loglog, lin)
        # exact values on the nodes
        on_node = x == e0
        out = np.where(on_node, m0, out)
        return np.where(x == e1, m1, out)

    def scaled(self, factor: float, label: str | None = None) -> "AttenuationCurve":
        return AttenuationCurve(self.energies, self.mu * factor, label or self.label)


@dataclass
class PhantomSpec:
    """Geometry and exposure of one synthetic sample.

    Thickness caps are tuples ``(row, col, semi_axis_row, semi_axis_col, peak_cm)``.
    """

    shape: tuple[int, int]
    base_caps: list[tuple[float, float, float, float, float]]
    inclusion_caps: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    photons: float = 1.0e5
    seed: int = 0
    kind: str = "none"
    base_material: str = "muscle"
    inclusion_material: str = "bone"

    def __post_init__(self):
        if len(self.shape) != 2 or min(self.shape) <= 0:
            raise ValueError(f"invalid phantom shape {self.shape}")
        if not self.photons > 0:
            raise ValueError("photon budget must be positive")

    @property
    def has_inclusion(self) -> bool:
        return len(self.inclusion_caps) > 0

    def base_thickness(self) -> np.ndarray:
        return caps_thickness(self.shape, self.base_caps)

    def inclusion_thickness(self) -> np.ndarray:
        return caps_thickness(self.shape, self.inclusion_caps)


@dataclass
class ProjectionPair:
    """Registered low (m1) and high (m2) voltage absorption-rate images."""

    m1: np.ndarray
    m2: np.ndarray
    gt: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.m1 = np.asarray(self.m1, dtype=float)
        self.m2 = np.asarray(self.m2, dtype=float)
        self.gt = np.asarray(self.gt, dtype=bool)
        if not (self.m1.shape == self.m2.shape == self.gt.shape) or self.m1.ndim != 2:
            raise ValueError("m1, m2 and gt must be 2-D arrays of identical shape")
        if not (np.all(np.isfinite(self.m1)) and np.all(np.isfinite(self.m2))):
            raise ValueError("absorption rates must be finite")

    @property
    def shape(self):
        return self.m1.shape


def read_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column whitespace table; '#' starts a comment line."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1]


def load_spectrum(path, label: str | None = None) -> Spectrum:
    e, f = read_table(path)
    return Spectrum(e, f, label if label is not None else Path(path).stem)


def load_curve(path, label: str | None = None) -> AttenuationCurve:
    e, m = read_table(path)
    return AttenuationCurve(e, m, label if label is not None else Path(path).stem)


def bundled_spectrum(kv: int) -> Spectrum:
    """The bundled tungsten-like spectra; ``kv`` is 40 or 90."""
    return load_spectrum(DATA_DIR / f"spectrum_{kv}kv.txt", label=f"{kv} kV")


def bundled_curve(material: str) -> AttenuationCurve:
    """The bundled materials: ``"muscle"`` or ``"bone"``."""
    return load_curve(DATA_DIR / f"{material}.txt", label=material)


def _layer_exponent(spectrum, layers):
    """Sum_i kappa_i(E) L_i as an array of shape (..., n_energies)."""
    total = None
    for curve, thickness in layers:
        kappa = curve(spectrum.energies)
        term = np.multiply.outer(np.asarray(thickness, dtype=float), kappa)
        total = term if total is None else total + term
    return total


def transmission(spectrum: Spectrum, layers) -> np.ndarray:
    """Fraction of flatfield intensity transmitted through stacked layers.

    ``layers`` is a sequence of ``(curve, thickness)`` where thickness is a
    scalar or an array (all arrays broadcast together).
    """
    w = spectrum.weights()
    expo = _layer_exponent(spectrum, layers)
    return np.exp(-expo) @ w / w.sum()


def attenuation_rate(spectrum: Spectrum, curve: AttenuationCurve, thickness) -> np.ndarray | float:
    """Absorption rate ``-ln(P/F)`` of a homogeneous path of given thickness (cm)."""
    L = np.asarray(thickness, dtype=float)
    if np.any(L < 0) or not np.all(np.isfinite(L)):
        raise ValueError("thickness must be finite and non-negative")
    w = spectrum.weights()
    kappa = curve(spectrum.energies)
    if spectrum.energies.size == 1:
        out = kappa[0] * L
    else:
        # shift by the smallest exponent so deep paths do not underflow to log(0)
        expo = np.multiply.outer(L, kappa)
        kmin = expo.min(axis=-1)
        t = np.exp(-(expo - kmin[..., None])) @ w / w.sum()
        out = kmin - np.log(t)
        # thin paths: log1p/expm1 keeps M >= 0 and monotone near L = 0
        with np.errstate(invalid="ignore", divide="ignore"):
            thin = -np.log1p(np.expm1(-expo) @ w / w.sum())
        out = np.where(expo.max(axis=-1) < 1.0, thin, out)
    out = np.where(L == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def effective_attenuation(spectrum: Spectrum, curve: AttenuationCurve) -> float:
    """Fluence-weighted mean attenuation coefficient, the thin-path slope of M(L)."""
    w = spectrum.weights()
    return float(curve(spectrum.energies) @ w / w.sum())


def ratio_thickness_curve(spec1: Spectrum, spec2: Spectrum, curve: AttenuationCurve, thicknesses):
    """Return ``(thicknesses, M1/M2)`` for a homogeneous material."""
    L = np.asarray(thicknesses, dtype=float).ravel()
    if L.size == 0 or np.any(L <= 0):
        raise ValueError("thicknesses must be strictly positive")
    return L, attenuation_rate(spec1, curve, L) / attenuation_rate(spec2, curve, L)


def caps_thickness(shape, caps) -> np.ndarray:
    """Sum of half-ellipsoid caps ``peak * sqrt(1 - r^2)`` sampled at pixel centres."""
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    out = np.zeros(shape)
    for r0, c0, ar, ac, peak in caps:
        q = 1.0 - ((rows - r0) / ar) ** 2 - ((cols - c0) / ac) ** 2
        out += peak * np.sqrt(np.clip(q, 0.0, None))
    return out


def _count_clamped(counts):
    return np.maximum(counts, 1)


def render_projection_pair(
    phantom: PhantomSpec,
    spec1: Spectrum,
    spec2: Spectrum,
    base: AttenuationCurve,
    inclusion: AttenuationCurve,
    noise: bool = True,
) -> ProjectionPair:
    """Render noisy low/high voltage absorption-rate images of a phantom.

    Transmitted and flatfield counts are Poisson draws around
    ``photons * transmission`` and ``photons``; draws of zero are clamped to
    one count. With ``noise=False`` the exact expected absorption rate is
    returned.
    """
    L_base = phantom.base_thickness()
    L_inc = phantom.inclusion_thickness()
    layers = [(base, L_base), (inclusion, L_inc)]
    rng = np.random.default_rng(phantom.seed)
    images = []
    for spec in (spec1, spec2):
        if noise:
            t = transmission(spec, layers)
            counts = _count_clamped(rng.poisson(phantom.photons * t))
            flat = _count_clamped(rng.poisson(phantom.photons, size=t.shape))
            m = -np.log(counts / flat)
        else:
            w = spec.weights()
            expo = _layer_exponent(spec, layers)
            kmin = expo.min(axis=-1)
            t = np.exp(-(expo - kmin[..., None])) @ w / w.sum()
            m = kmin - np.log(t)
            m[(L_base == 0) & (L_inc == 0)] = 0.0
        images.append(m)
    meta = {
        "width": int(phantom.shape[1]),
        "height": int(phantom.shape[0]),
        "spectrum_low": spec1.label,
        "spectrum_high": spec2.label,
        "seed": int(phantom.seed),
        "kind": phantom.kind,
        "photons": float(phantom.photons),
        "noise": bool(noise),
    }
    return ProjectionPair(images[0], images[1], L_inc > 0, meta)


def _truncated_normal(rng, mean, std, lo, hi):
    while True:
        x = rng.normal(mean, std)
        if lo <= x <= hi:
            return x


def _fit_footprint(shape, r0, c0, ar, ac, target):
    """Rescale semi-axes so the discrete cap footprint is as close to ``target`` px as possible."""
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)

    def count(s):
        return int(np.count_nonzero(((rows - r0) / (s * ar)) ** 2 + ((cols - c0) / (s * ac)) ** 2 < 1.0))

    lo, hi = 0.05, 4.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if count(mid) < target:
            lo = mid
        else:
            hi = mid
    s = hi if abs(count(hi) - target) <= abs(count(lo) - target) else lo
    return ar * s, ac * s


def make_phantom(
    kind: str,
    shape=(192, 192),
    seed: int = 0,
    photons: float = 1.0e5,
    area_scale: float = 1.0,
    bone_peak=(0.12, 0.24),
) -> PhantomSpec:
    """Draw a random filet-like phantom, optionally with a bone inclusion.

    The base object is one large cap plus two smaller lobes. For defect
    kinds the inclusion footprint (pixels) follows a normal distribution
    per class truncated to ``mean +- 3 std`` and at least one pixel;
    ``area_scale`` converts the reference footprints to this resolution.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    H, W = int(shape[0]), int(shape[1])
    if H <= 0 or W <= 0:
        raise ValueError("phantom dimensions must be positive")
    rng = np.random.default_rng(seed)

    r0 = H / 2 + rng.uniform(-0.06, 0.06) * H
    c0 = W / 2 + rng.uniform(-0.06, 0.06) * W
    ar = rng.uniform(0.32, 0.42) * H
    ac = rng.uniform(0.32, 0.42) * W
    peak = rng.uniform(3.0, 5.0)
    caps = [(r0, c0, ar, ac, peak)]
    for _ in range(2):
        ang = rng.uniform(0, 2 * np.pi)
        d = rng.uniform(0.2, 0.45)
        caps.append((
            r0 + d * ar * np.sin(ang),
            c0 + d * ac * np.cos(ang),
            rng.uniform(0.3, 0.5) * ar,
            rng.uniform(0.3, 0.5) * ac,
            rng.uniform(0.5, 1.5),
        ))

    spec = PhantomSpec((H, W), caps, photons=photons, seed=int(rng.integers(2**31)), kind=kind)
    if kind == "none":
        return spec

    mean, std = FOOTPRINT_STATS[kind]
    mean, std = mean * area_scale, std * area_scale
    base_L = spec.base_thickness()
    top = base_L.max()
    target = _truncated_normal(rng, mean, std, max(1.0, mean - 3 * std), mean + 3 * std)
    target = max(1, int(round(target)))
    for _ in range(1000):
        aspect = rng.uniform(*_ASPECT[kind])
        theta_major = rng.integers(2)
        semi_major = np.sqrt(target * aspect / np.pi)
        semi_minor = semi_major / aspect
        axes = (semi_major, semi_minor) if theta_major else (semi_minor, semi_major)
        # mid-thickness placement: the bone raises M2, and on the thickest part
        # of the filet it would fall into intensity bins it dominates
        ir = r0 + rng.uniform(-0.6, 0.6) * ar
        ic = c0 + rng.uniform(-0.6, 0.6) * ac
        ia, ib = _fit_footprint((H, W), ir, ic, axes[0], axes[1], target)
        footprint = caps_thickness((H, W), [(ir, ic, ia, ib, 1.0)]) > 0
        inside = base_L[footprint]
        if footprint.any() and inside.min() >= 0.3 * top and inside.max() <= 0.8 * top:
            spec.inclusion_caps = [(ir, ic, ia, ib, rng.uniform(*bone_peak))]
            spec.inclusion_material = "bone"
            return spec
    raise RuntimeError("could not place inclusion inside base object")
