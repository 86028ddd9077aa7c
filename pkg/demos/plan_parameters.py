"""How the planning numbers move with the horizon.

Prints, for a sweep of horizons: the context grid resolution n_T the engine
would pick, the predicted regret exponent, and the largest storage-unit
count d = 2^z that still respects the unit condition. Pure arithmetic, no
simulation.
"""

from treebandit import optimal_unit_exponent, theoretical_exponent
from treebandit.dsrht import check_unit_condition
from treebandit.partition import compute_slicing_number

ALPHA, D_X, D_C = 1.0, 2, 3


def main():
    gamma = theoretical_exponent(ALPHA, D_X, D_C)
    print(f"setting: alpha={ALPHA} d_x={D_X} d_c={D_C}")
    print(f"regret exponent gamma = {gamma} (cum regret ~ T^gamma)\n")
    print(f"{'T':>10} {'n_T':>4} {'cells':>6} {'z*':>3} {'d=2^z*':>7}")
    for exp in range(3, 9):
        T = 10 ** exp
        n_t = compute_slicing_number(T, ALPHA, D_X, D_C)
        z = optimal_unit_exponent(T, ALPHA, D_X, D_C)
        print(f"{T:>10} {n_t:>4} {n_t ** D_X:>6} {z:>3} {2 ** z:>7}")

    T = 10_000
    print(f"\nunit condition at T={T}: the forest may hold d units only while")
    print("d stays inside the budget; one level past z* breaks it:")
    for z in range(0, optimal_unit_exponent(T, ALPHA, D_X, D_C) + 2):
        ok = check_unit_condition(2 ** z, T, ALPHA, D_X, D_C)
        print(f"  z={z} d={2 ** z}: {'satisfied' if ok else 'violated'}")


if __name__ == "__main__":
    main()
