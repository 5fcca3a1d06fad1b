# Copyright (C) 2026 The matfuse Authors
# SPDX-License-Identifier: Apache-2.0
"""Export AlexNet + LPIPS v0.1 linear heads to lpips_alex.safetensors.

Needs torchvision's ImageNet AlexNet checkpoint (downloaded on first use, or
pass --alexnet PATH to a local alexnet-owt-7be5be79.pth) and the `lpips`
package, which ships the linear heads.

    python3 tools/export_lpips_weights.py --out $MATFUSE_WEIGHTS_DIR/lpips_alex.safetensors
"""

import argparse
import os

import lpips
import torch
from safetensors.torch import save_file
from torchvision import models


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--alexnet", help="local torchvision AlexNet state dict")
    args = parser.parse_args()

    if args.alexnet:
        alex = models.alexnet(weights=None)
        alex.load_state_dict(torch.load(args.alexnet, map_location="cpu"))
    else:
        alex = models.alexnet(weights=models.AlexNet_Weights.IMAGENET1K_V1)

    tensors = {}
    for idx in (0, 3, 6, 8, 10):
        conv = alex.features[idx]
        tensors[f"features.{idx}.weight"] = conv.weight.detach().float().contiguous()
        tensors[f"features.{idx}.bias"] = conv.bias.detach().float().contiguous()

    heads_path = os.path.join(os.path.dirname(lpips.__file__), "weights", "v0.1", "alex.pth")
    heads = torch.load(heads_path, map_location="cpu")
    for layer in range(5):
        tensors[f"lin{layer}.weight"] = heads[f"lin{layer}.model.1.weight"].float().contiguous()

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_file(tensors, args.out, metadata={"source": "torchvision alexnet + lpips v0.1"})
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()
