"""Recompute the frozen reference constants used by the tests with mpmath.

    python3 scripts/freeze_oracles.py
"""
import mpmath as mp

mp.mp.dps = 40
half = mp.mpf(1) / 2


def c_kernel(H):
    H = mp.mpf(H)
    return mp.sqrt(H * (2 * H - 1) / mp.beta(2 - 2 * H, H - half))


def c_big(H):
    H = mp.mpf(H)
    return mp.sqrt(H / (2 * (2 * H - 1))) / (H + 1)


def kernel(ell, s, H):
    # u = s + w^k turns (u - s)^{H - 3/2} du into a bounded integrand
    H, ell, s = mp.mpf(H), mp.mpf(ell), mp.mpf(s)
    k = 1 / (H - half)
    f = lambda w: k * w ** (k * (H - mp.mpf(1.5)) + k - 1) * (s + w**k) ** (H - half)
    return c_kernel(H) * s ** (half - H) * mp.quad(f, [0, (ell - s) ** (1 / k)])


def main():
    rows = {
        "c(0.75)": c_big(0.75),
        "c(0.6)": c_big(0.6),
        "c_H(0.75)": c_kernel(0.75),
        "c_H(0.875)": c_kernel(0.875),
        "K(1, 0.5, 0.75)": kernel(1, 0.5, 0.75),
        "K(0.9, 0.2, 0.6)": kernel(0.9, 0.2, 0.6),
        "K(2, 1.5, 0.95)": kernel(2, 1.5, 0.95),
        "dK/du(1, 0.5, 0.875)": c_kernel(0.875) * mp.mpf(0.5) ** (half - mp.mpf(0.875))
                                * mp.mpf(0.5) ** (mp.mpf(0.875) - mp.mpf(1.5)),
        "M0 lemma (unit inputs)": 4 * (4 * mp.mpf("0.01") + 3 * (mp.mpf("0.01") + c_big(0.75) * mp.mpf("0.01"))),
        "M0 thm (unit inputs)": 4 * (mp.mpf("0.01") + 3 * (mp.mpf("0.01") + c_big(0.75) * mp.mpf("0.01"))),
        "sum_{i<=50} i^-2": mp.fsum(1 / mp.mpf(i) ** 2 for i in range(1, 51)),
        "E Z(1)^2 continuum, H=0.75": mp.mpf(0.75) ** 2 / (4 * (2 * mp.mpf(0.75) - 1) ** 2),
    }
    for name, v in rows.items():
        print(f"{name:32s} {mp.nstr(v, 20)}")


if __name__ == "__main__":
    main()
