"""Central limit behaviour of cos 2 pi x along the doubling map.

Prints the exact variance against n/2, the characteristic function error
at a few horizons and a Monte Carlo Kolmogorov distance.
"""

import numpy as np

from seqclt import SequenceSpec, center_sequence, char_fn, monte_carlo, variance
from seqclt.maps import cosine, doubling


def main() -> None:
    cs = center_sequence(SequenceSpec([doubling()], [cosine()]), 1024, 256)
    print("n      sigma_n^2      n/2")
    for n in (1, 16, 64, 256, 1024):
        print(f"{n:<6d} {variance(cs, n).sigma2:<14.10f} {n / 2}")

    lam = np.linspace(-2, 2, 41)
    print("\nn      max |Upsilon_n - exp(-lam^2/2)|")
    for n in (64, 256, 1024):
        print(f"{n:<6d} {np.max(char_fn(cs, lam, n).abs_err):.5f}")

    mc = monte_carlo(cs, 100_000, seed=1, n=400)
    print(f"\nMonte Carlo at n = 400: KS = {mc.ks:.5f} (99% DKW band {mc.dkw:.5f})")


if __name__ == "__main__":
    main()
