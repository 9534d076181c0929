#!/usr/bin/env python3
"""Export torchvision VGG-16 weights (through conv4_1) to the FEX1 binary
format consumed by the HF feature loss.

Usage:
    python scripts/export_vgg16.py --out vgg16_conv4_1.fex

Then point the trainer at the file:
    UNBLOCK_VGG_WEIGHTS=vgg16_conv4_1.fex unblock train ...

Format (little-endian):
    magic b"FEX1"
    3 * f32 channel means, 3 * f32 channel stds (ImageNet convention)
    u32 layer count
    per layer: u8 tag; tag 0 = conv+ReLU: 4 * u32 dims (OC, IC, KH, KW),
    then OC*IC*KH*KW f32 weights, then OC f32 biases; tag 1 = 2x2 max pool.
"""

import argparse
import struct

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# torchvision vgg16.features indices for conv1_1 .. conv4_1, with pool
# positions between blocks. None marks a 2x2 max pool.
LAYOUT = [0, 2, None, 5, 7, None, 10, 12, 14, None, 17]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output .fex path")
    args = parser.parse_args()

    import torch
    from torchvision.models import VGG16_Weights, vgg16

    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features.eval()

    blob = bytearray()
    blob += b"FEX1"
    for v in IMAGENET_MEAN + IMAGENET_STD:
        blob += struct.pack("<f", v)
    blob += struct.pack("<I", len(LAYOUT))
    for idx in LAYOUT:
        if idx is None:
            blob += struct.pack("<B", 1)
            continue
        conv = model[idx]
        assert isinstance(conv, torch.nn.Conv2d), f"features[{idx}] is not a conv"
        w = conv.weight.detach().to(torch.float32).contiguous()
        b = conv.bias.detach().to(torch.float32).contiguous()
        blob += struct.pack("<B", 0)
        blob += struct.pack("<4I", *w.shape)
        blob += w.numpy().tobytes()
        blob += b.numpy().tobytes()

    with open(args.out, "wb") as f:
        f.write(blob)
    print(f"wrote {len(blob)} bytes to {args.out}")


if __name__ == "__main__":
    main()
