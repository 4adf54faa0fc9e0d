"""Instance builders shared by the test modules."""
import numpy as np

from collabkrr.ensemble import (
    SyntheticTarget,
    generate_data,
    make_public_private,
    make_random_overlapping,
)
from collabkrr.kernels import Kernel

GAUSS = Kernel.gaussian(1.0)


def overlapping_instance(seed, n=40, m=5, d=3, size=12):
    """Random overlapping ensemble, gaussian kernel of bandwidth 1, lambda_i = 0.2."""
    training = generate_data(SyntheticTarget("sinusoid", freq=1.5, noise_sd=0.1), n, d, seed)
    ensemble = make_random_overlapping(m, size, training, seed=10_000 + seed)
    return training, ensemble, GAUSS, [0.2] * m


def public_private_instance(seed, d=3, m=10, private=5):
    rng = np.random.default_rng(seed)
    target = SyntheticTarget("linear", w=rng.normal(size=d).tolist(), b=0.0, noise_sd=0.1)
    training = generate_data(target, d + m * private, d, seed)
    ensemble = make_public_private(m, list(range(d)), [private] * m, training)
    return training, ensemble, Kernel.linear(), [0.1] * m
