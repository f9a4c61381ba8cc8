#!/usr/bin/env python3
"""tau*sigma*||K||^2 for the fixed 1/sqrt(8) steps and the automatic steps, over weight fields."""
import numpy as np

from pdflow.operators import Model, operator_norm_estimate
from pdflow.solver import DEFAULT_STEP, operator_norm_bound


def main(n=32):
    rng = np.random.default_rng(0)
    weights = {
        "phi=0": np.zeros((n, n)),
        "phi=U[0,1]": rng.random((n, n)),
        "phi=1": np.ones((n, n)),
    }
    print(f"{'model':<6}{'weight':<12}{'||K||':>8}{'fixed':>9}{'auto':>9}")
    for model in (Model.M1, Model.M2):
        for name, phi in weights.items():
            k = operator_norm_estimate(model, phi, 300)
            auto = 1.0 / operator_norm_bound(model, phi)
            print(f"{model.value:<6}{name:<12}{k:8.4f}{(DEFAULT_STEP * k) ** 2:9.4f}{(auto * k) ** 2:9.4f}")


if __name__ == "__main__":
    main()
