"""Multi-connectivity gain pi_O(S1) - pi_O(S4) over the blocker grid, and how
it moves with the MCS thresholds and UE array size.

    python scripts/gap_sensitivity.py
"""

from thzmm import sweeps


def main():
    gaps = sweeps.multiconnectivity_gap()
    print("association,lambda_B,gap,in_band_0.1_0.4")
    for a, row in gaps.items():
        for v, g in zip(sweeps.LAMBDA_B, row):
            print(f"{a},{v},{g:.4f},{0.1 <= g <= 0.4}")
    print()
    print("threshold_shift_db,ue_array,association,min_gap,max_gap")
    for db, arr, a, lo, hi in sweeps.gap_sensitivity():
        print(f"{db:+g},{arr[0]}x{arr[1]},{a},{lo:.4f},{hi:.4f}")


if __name__ == "__main__":
    main()
