"""Regenerate src/torograph/data/menk_like.csv (synthetic, fixed seed)."""

import os

import numpy as np

from torograph.cli import chain_covariance
from torograph.io import matrix_csv
from torograph.wrapped_normal import WnParams, wn_sample

COLUMNS = ("psi1", "phi2", "psi2", "phi3", "psi3", "phi4", "psi4", "phi5")
VARIANCES = np.array([0.001, 0.004, 0.012, 0.036, 0.003, 0.12, 0.6, 1.856])
MEANS = np.array([2.6, -1.4, 2.9, 1.3, 0.2, -1.6, 2.7, -1.2])


def main():
    corr = chain_covariance(len(COLUMNS), partial=0.4, variance=1.0)
    sd = np.sqrt(VARIANCES)
    params = WnParams(MEANS, corr * np.outer(sd, sd))
    data, _ = wn_sample(params, 80, seed=20240501)
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "src", "torograph", "data", "menk_like.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(matrix_csv(COLUMNS, data.values))


if __name__ == "__main__":
    main()
