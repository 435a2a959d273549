"""Reference values frozen into the test-suite.

Run by hand (``python3 tests/oracles/generate.py``); needs mpmath. Integrals
are taken directly in p against the arcsine density at 30 digits, with no
code shared with the package.
"""

from itertools import product

from mpmath import binomial, log, mp, mpf, pi, quad, sqrt

mp.dps = 30


def drifts(c):
    c = mpf(c)
    w = lambda p: 1 / (pi * sqrt(p * (1 - p)))
    a = lambda p: 1 + (1 - p) / (c * p)
    b = lambda p: 1 + p / (c * (1 - p))
    m = 1 - 1 / c
    f0 = lambda p: w(p) * (p**2 * log(a(p)) + 2 * p * (1 - p) * log(m) + (1 - p) ** 2 * log(b(p)))
    f1 = lambda p: w(p) * (p**2 * a(p) * log(a(p)) + 2 * p * (1 - p) * m * log(m) + (1 - p) ** 2 * b(p) * log(b(p)))
    i = quad(lambda p: sqrt(p * (1 - p)) * log(1 + c / ((c - 1) ** 2 * p * (1 - p))), [0, 0.5, 1])
    return quad(f0, [0, 0.5, 1]), quad(f1, [0, 0.5, 1]), i


def all_one_colluder_drift(c, p):
    """Mean per-segment score of a colluder, all-1 attack, corrected all-1 table."""
    c, p = mpf(c), mpf(p)
    q = 1 - p
    s11, s01, s00 = log(2), log(2 - 2 ** (1 / c)), log(2) / c
    return p * s11 + q * (1 - q ** (c - 1)) * s01 + q**c * s00


def coin_g00(c, p):
    """Brute-force g(0,0) for the coin attack: ln P(y=0|x1=0) / P(y=0)."""
    theta = [mpf(0)] + [mpf(1) / 2] * (c - 1) + [mpf(1)]
    p = mpf(p)
    num = sum(binomial(c - 1, z) * p**z * (1 - p) ** (c - 1 - z) * (1 - theta[z]) for z in range(c))
    den = sum(binomial(c, z) * p**z * (1 - p) ** (c - z) * (1 - theta[z]) for z in range(c + 1))
    return log(num / den)


def binom_tail(k, n, q):
    """P(Bin(n, q) >= k)."""
    q = mpf(q)
    return sum(binomial(n, j) * q**j * (1 - q) ** (n - j) for j in range(k, n + 1))


if __name__ == "__main__":
    for c in (5, 10, 20, 50, 100):
        m0, m1, i = drifts(c)
        print(f"c={c}: mu0={mp.nstr(m0, 17)} mu1={mp.nstr(m1, 17)} I={mp.nstr(i, 17)}")
    print("all-one mu1 c=10:", mp.nstr(all_one_colluder_drift(10, log(2) / 10), 17))
    print("coin g00 c=2 p=.5:", mp.nstr(coin_g00(2, 0.5), 17))
    # any-innocent FP per trial is at most n * eps1' = 1e-3; 200 trials
    print("P(>=4 FP trials of 200 | q=1e-3):", mp.nstr(binom_tail(4, 200, mpf("1e-3")), 6))
    print("P(>=5 FP trials of 200 | q=1e-3):", mp.nstr(binom_tail(5, 200, mpf("1e-3")), 6))
    print("kl(0.1||0.9):", mp.nstr(mpf("0.1") * log(mpf(1) / 9) + mpf("0.9") * log(9), 17))
    p = log(2) / 10
    print("all-one marginal:", mp.nstr(1 - (1 - p) ** 10, 17))
    print("group-testing simple c=10 n=1000:", mp.nstr(10 * log(1000) / log(2) ** 2, 17))
