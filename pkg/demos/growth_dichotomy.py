"""Linear growth against bounded variance for two-map random sequences.

A cosine observable along random products of 2x and 3x grows linearly,
while per-map coboundaries keep the variance bounded. The deterministic
growth criterion is then checked for the doubling map.
"""

from seqclt import growth_criterion, random_dichotomy
from seqclt.maps import CircleMap, Observable, cosine, doubling

COB2 = Observable(((1, 0.0, 1.0), (2, 0.0, -1.0)))
COB3 = Observable(((1, 0.0, 1.0), (3, 0.0, -1.0)))


def main() -> None:
    maps = [doubling(), CircleMap(3)]
    for label, obs in (("cos 2 pi x", cosine()), ("coboundaries", [COB2, COB3])):
        rep = random_dichotomy(maps, obs, trials=12, n=256, seed=1)
        print(f"{label:<14s} mean sigma^2/n = {rep.mean_sigma2_over_n:.4f} "
              f"(se {rep.se_sigma2_over_n:.1e}) -> {rep.classification}")

    rep = growth_criterion([doubling()], [cosine()], 64, a=0.9)
    key, best, _, x0, _, _ = rep.rows[0]
    print(f"\ngrowth criterion, doubling + cos, L = 64: {rep.verdict}")
    print(f"  best Birkhoff sum {best:.4f} at x = {x0:.4g}, threshold {rep.threshold:.4f}")


if __name__ == "__main__":
    main()
