"""Regenerate the bundled spectrum and attenuation tables in src/dexa_inspect/data.

Spectra: Kramers bremsstrahlung shape N(E) ~ (kVp - E) / E hardened by
2 mm of aluminium, sampled at 1 keV. Attenuation: mass attenuation
coefficients (cm^2/g) for ICRU-44 skeletal muscle and cortical bone and for
aluminium, rounded values transcribed from the NIST XCOM / Hubbell-Seltzer
tables, times the nominal density.

    python scripts/make_data_tables.py
"""
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "dexa_inspect" / "data"

ENERGY_KEV = np.array([10, 15, 20, 30, 40, 50, 60, 80, 100, 150], dtype=float)
MASS_ATT = {
    # material: (density g/cm^3, mu/rho cm^2/g)
    "muscle": (1.05, [5.356, 1.693, 0.8205, 0.3783, 0.2685, 0.2262, 0.2048, 0.1823, 0.1693, 0.1492]),
    "bone": (1.92, [28.51, 9.032, 4.001, 1.331, 0.6655, 0.4242, 0.3148, 0.2229, 0.1855, 0.1480]),
    "aluminium": (2.699, [26.23, 7.955, 3.441, 1.128, 0.5685, 0.3681, 0.2778, 0.2018, 0.1704, 0.1378]),
}
FILTER_CM = 0.2


def linear_mu(name, energies):
    rho, mass = MASS_ATT[name]
    loge, logm = np.log(ENERGY_KEV), np.log(np.asarray(mass) * rho)
    return np.exp(np.interp(np.log(energies), loge, logm))


def kramers(kvp):
    e = np.arange(10.0, kvp + 1.0)
    n = (kvp - e) / e * np.exp(-linear_mu("aluminium", e) * FILTER_CM)
    return e, n / n.max()


def write(path, header, e, v):
    lines = [f"# {h}" for h in header] + [f"{a:8.2f} {b:.6e}" for a, b in zip(e, v)]
    path.write_text("\n".join(lines) + "\n")


def main():
    for kvp in (40, 90):
        e, n = kramers(kvp)
        write(OUT / f"spectrum_{kvp}kv.txt",
              [f"{kvp} kV tungsten-like tube: Kramers (kVp-E)/E with {FILTER_CM * 10:g} mm Al filtration",
               "columns: energy_keV relative_fluence"], e, n)
    for name in ("muscle", "bone"):
        rho, mass = MASS_ATT[name]
        write(OUT / f"{name}.txt",
              [f"{name}: linear attenuation coefficient, density {rho} g/cm^3",
               "rounded NIST XCOM / Hubbell-Seltzer mass attenuation x density",
               "columns: energy_keV mu_per_cm"], ENERGY_KEV, np.asarray(mass) * rho)


if __name__ == "__main__":
    main()
