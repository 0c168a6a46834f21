"""Service radii for the mmWave and THz BS array sizes, next to reference values.

    python scripts/table3.py
"""

from dataclasses import replace

from thzmm import radio
from thzmm.scenario import default_scenario

REFERENCE_MMW = {8: 73.3, 16: 91.3, 32: 113.6}
REFERENCE_THZ = {64: (20.1, 92.1), 128: (25.7, 114.4), 256: (32.6, 142.2)}


def main():
    scn = default_scenario()
    print("bs_array,column,model_m,reference_m,relative_error")
    for v, pub in REFERENCE_MMW.items():
        r = radio.coverage_radii(replace(scn, antenna=replace(scn.antenna, M_B=(v, 4)))).r_M
        print(f"{v}x4,mmWave,{r:.2f},{pub},{(r - pub) / pub:+.3f}")
    for v, (p1, p2) in REFERENCE_THZ.items():
        r = radio.coverage_radii(replace(scn, antenna=replace(scn.antenna, T_B=(v, 4))))
        print(f"{v}x4,THz A1,{r.r_T_A1:.2f},{p1},{(r.r_T_A1 - p1) / p1:+.3f}")
        print(f"{v}x4,THz A2,{r.r_T_A2:.2f},{p2},{(r.r_T_A2 - p2) / p2:+.3f}")


if __name__ == "__main__":
    main()
