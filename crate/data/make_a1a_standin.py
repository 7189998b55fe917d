"""Generate a stand-in for the LibSVM `a1a` file.

Same shape as the real file: 1605 rows, 123 binary features arranged as 14
one-hot groups, about 14 non-zeros per row, roughly a quarter positive
labels. Labels come from a noisy logistic model over the active features so
the resulting regularized logistic regression is well posed but not
separable.

    python3 data/make_a1a_standin.py > data/a1a_standin.libsvm
"""
import numpy as np

GROUPS = [5, 8, 5, 16, 5, 7, 14, 6, 5, 2, 2, 2, 3, 43]
ROWS = 1605


def main():
    rng = np.random.default_rng(20210614)
    assert sum(GROUPS) == 123
    offsets = np.cumsum([0] + GROUPS[:-1])
    # Zipf-like category frequencies per group.
    probs = []
    for g in GROUPS:
        w = 1.0 / np.arange(1, g + 1) ** 1.1
        w = w[rng.permutation(g)]
        probs.append(w / w.sum())
    weights = rng.normal(0.0, 1.0, size=123)
    out = []
    for _ in range(ROWS):
        idx = []
        for off, g, p in zip(offsets, GROUPS, probs):
            # occasional missing value, like the real data
            if rng.random() < 0.01:
                continue
            idx.append(off + rng.choice(g, p=p))
        margin = weights[idx].sum() - 1.6
        p_pos = 1.0 / (1.0 + np.exp(-margin))
        label = "+1" if rng.random() < p_pos else "-1"
        feats = " ".join(f"{i + 1}:1" for i in sorted(idx))
        out.append(f"{label} {feats}")
    print("\n".join(out))


if __name__ == "__main__":
    main()
