"""Compare I(A;A) with S(A) at order 2 for a few Gram patterns.

With the Hadamard joint, I(A;A) = 2 S(A) - S(A o A / tr(A o A)). The two
agree only when A o A is proportional to A (block/cluster patterns, I/n,
rank one). Generic feature Grams show a gap of a sizeable fraction of a bit.
"""

import numpy as np

from renyikd.entropy import entropy, mutual_information
from renyikd.gram import linear_gram, normalize_def1
from renyikd.prng import make_rng


def row(name, a):
    s, i = entropy(a, 2), mutual_information(a, a, 2)
    print(f"{name:<22}{s:>10.4f}{i:>10.4f}{i - s:>10.4f}")


def main():
    rng = make_rng(0, 0)
    print(f"{'pattern':<22}{'S(A)':>10}{'I(A;A)':>10}{'gap':>10}")
    row("identity / 8", np.eye(8) / 8)
    row("clusters 3+3+2", normalize_def1(linear_gram(np.eye(3)[[0, 0, 0, 1, 1, 1, 2, 2]])).entries)
    for dim in (2, 4, 16, 64):
        row(f"gaussian 8x{dim}", normalize_def1(linear_gram(rng.standard_normal((8, dim)))).entries)


if __name__ == "__main__":
    main()
