import numpy as np

from basis.bank import BasisBank


def perturbed_bank(d, k, seed=0, alpha=0.9, pairwise=False):
    """A bank whose output layers are no longer zero, so every column differs."""
    rng = np.random.default_rng(seed)
    bank = BasisBank.initialize(d, k, rng, alpha=alpha, pairwise=pairwise)
    for subnet in bank.subnets:
        weight, bias = subnet.mlp.layers[-1]
        weight.value = rng.normal(size=weight.value.shape)
        bias.value = rng.normal(size=bias.value.shape)
    return bank


def set_alpha(bank, value):
    for subnet in bank.subnets:
        subnet.alpha.value = np.array(value, dtype=np.float64)
