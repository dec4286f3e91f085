"""Small softplus MLPs used as constitutive and inclusion energies.

The weights are never trained here; they are drawn from a fixed seed so
that the coupling machinery can be exercised reproducibly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp


@dataclass(frozen=True)
class MlpWeights:
    weights: tuple  # matrices (n_in, n_out)
    biases: tuple

    def __post_init__(self):
        for W, W2 in zip(self.weights[:-1], self.weights[1:]):
            if W.shape[1] != W2.shape[0]:
                raise ValueError("layer shapes do not chain")
        for W, b in zip(self.weights, self.biases):
            if b.shape != (W.shape[1],):
                raise ValueError("bias shape mismatch")

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def scaled(self, factor):
        """Same network with the output layer scaled by ``factor``."""
        Ws = list(self.weights)
        bs = list(self.biases)
        Ws[-1] = Ws[-1] * factor
        bs[-1] = bs[-1] * factor
        return MlpWeights(tuple(Ws), tuple(bs))


def init_mlp(sizes, seed=0, output_scale=1.0) -> MlpWeights:
    """Gaussian weights with 1/sqrt(fan_in) scaling, small biases."""
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        Ws.append(rng.standard_normal((a, b)) / np.sqrt(a))
        bs.append(0.1 * rng.standard_normal(b))
    Ws[-1] = Ws[-1] * output_scale
    bs[-1] = bs[-1] * output_scale
    return MlpWeights(tuple(Ws), tuple(bs))


def zero_mlp(sizes) -> MlpWeights:
    return MlpWeights(
        tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])),
        tuple(np.zeros(b) for b in sizes[1:]),
    )


def mlp(x, w: MlpWeights):
    """Softplus hidden layers, linear scalar output; x: (..., n_in) -> (...)."""
    h = x
    n = len(w.weights)
    for k, (W, b) in enumerate(zip(w.weights, w.biases)):
        h = anp.einsum("...i,ij->...j", h, W) + b
        if k < n - 1:
            h = anp.softplus(h)
    return anp.sum(h, axis=-1)


def invariant_base_density(I1, J, mu, lmbda):
    """Neo-Hookean density written in (I₁, J), 3D."""
    lnJ = anp.log(J)
    return 0.5 * mu * (I1 - 3.0 - 2.0 * lnJ) + 0.5 * lmbda * lnJ * lnJ


def mlp_energy_density(I1, J, w: MlpWeights, base):
    """[NN(I₁ − 3, J − 1) − NN(0, 0)] + ψ_base(I₁, J)."""
    x = anp.stack([I1 - 3.0, J - 1.0], -1)
    nn0 = mlp(np.zeros(2), w)
    return mlp(x, w) - nn0 + base(I1, J)


def neural_inclusion_energy(u_interface, w: MlpWeights):
    """NN(u_interface) − NN(0)."""
    n = anp.shape(u_interface)[-1]
    return mlp(u_interface, w) - mlp(np.zeros(n), w)
