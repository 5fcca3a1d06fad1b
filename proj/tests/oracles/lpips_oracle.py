# Copyright (C) 2026 The matfuse Authors
# SPDX-License-Identifier: Apache-2.0
"""Reference LPIPS values for test_eval.cpp.

Runs the `lpips` package (AlexNet, v0.1) with deterministic splitmix64
weights in place of the pretrained ones, on analytic test images. The C++
test regenerates the same weights and images and compares the distances.

    python3 tests/oracles/lpips_oracle.py
"""

import math
import warnings

import lpips
import numpy as np
import torch

MASK64 = (1 << 64) - 1
LAYERS = [  # (out, in, kernel)
    (64, 3, 11),
    (192, 64, 5),
    (384, 192, 3),
    (256, 384, 3),
    (256, 256, 3),
]
SLICE_KEYS = ["0", "3", "6", "8", "10"]


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, n):
        return np.array([(self.next() >> 11) * 2.0**-53 for _ in range(n)])


def synthetic_weights(seed=2026):
    rng = SplitMix64(seed)
    convs = []
    for out, cin, k in LAYERS:
        bound = math.sqrt(3.0 / (cin * k * k))
        w = (2.0 * rng.uniform(out * cin * k * k) - 1.0) * bound
        b = (2.0 * rng.uniform(out) - 1.0) * 0.05
        convs.append((w.reshape(out, cin, k, k), b))
    lins = [rng.uniform(out) for out, _, _ in LAYERS]
    return convs, lins


def test_image(h, w, phase):
    y, x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    img = np.empty((3, h, w))
    for c in range(3):
        img[c] = 0.5 + 0.5 * np.sin(0.11 * (c + 1) * y + 0.07 * x + phase * (c + 2)) * np.cos(0.05 * x - phase * y / h)
    return img


def main():
    warnings.filterwarnings("ignore", category=UserWarning)
    model = lpips.LPIPS(net="alex", pretrained=True, pnet_rand=True, verbose=False).eval()
    convs, lins = synthetic_weights()
    slices = [model.net.slice1, model.net.slice2, model.net.slice3, model.net.slice4, model.net.slice5]
    with torch.no_grad():
        for sl, key, (w, b) in zip(slices, SLICE_KEYS, convs):
            sl._modules[key].weight.copy_(torch.from_numpy(w).float())
            sl._modules[key].bias.copy_(torch.from_numpy(b).float())
        for lin, v in zip(model.lins, lins):
            lin.model[1].weight.copy_(torch.from_numpy(v).float().view(1, -1, 1, 1))

    cases = [(64, 64, 0.0, 0.7), (96, 80, 0.3, 1.9), (64, 64, 0.5, 0.55)]
    for h, w, pa, pb in cases:
        a = torch.from_numpy(test_image(h, w, pa)).float()[None]
        b = torch.from_numpy(test_image(h, w, pb)).float()[None]
        with torch.no_grad():
            d = model(a, b, normalize=True).item()
        print(f"{{{h}, {w}, {pa}, {pb}, {d:.9g}}},")


if __name__ == "__main__":
    main()
