"""
Why the channel quotient depends on thickness
==============================================

With a monochromatic beam the two absorption rates are proportional, so
their quotient is a material constant. Real tubes emit a spectrum, the soft
part is absorbed first, and the quotient drifts with path length.
"""

import numpy as np

from dexa_inspect.physics import (Spectrum, attenuation_rate, bundled_curve, bundled_spectrum,
                                  effective_attenuation, ratio_thickness_curve)

low, high = bundled_spectrum(40), bundled_spectrum(90)
muscle = bundled_curve("muscle")

# thin-path slopes of the absorption rate
print(f"effective attenuation  40 kV: {effective_attenuation(low, muscle):.4f} /cm")
print(f"effective attenuation  90 kV: {effective_attenuation(high, muscle):.4f} /cm")

# quotient M1/M2 from 0.1 mm to 20 cm of muscle
thickness = np.geomspace(0.01, 20.0, 9)
_, ratio = ratio_thickness_curve(low, high, muscle, thickness)
print("\n thickness cm   M1/M2")
for L, q in zip(thickness, ratio):
    print(f"{L:11.3f}   {q:.4f}")

# the same thing with single lines stays flat
mono = ratio_thickness_curve(Spectrum.monochromatic(30.0), Spectrum.monochromatic(60.0), muscle, thickness)[1]
print(f"\nmonochromatic 30/60 keV quotient spread: {np.ptp(mono):.2e}")

# absorption per centimetre falls with depth
for L in (0.1, 1.0, 10.0):
    print(f"M/L at {L:5.1f} cm (90 kV): {attenuation_rate(high, muscle, L) / L:.4f} /cm")
