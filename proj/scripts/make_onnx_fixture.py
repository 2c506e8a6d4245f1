#!/usr/bin/env python3
"""Regenerates the ONNX backend test fixture.

Builds a small residual CNN with seeded weights, exports it to ONNX, runs it
on seeded inputs in its native toolchain, and freezes inputs + logits as the
oracle. Output goes to tests/data/.
"""

import json
import pathlib

import numpy as np
import torch
import torch.nn as nn


class TinyResNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = nn.Conv2d(3, 8, 3, stride=2, padding=1)
        self.bn0 = nn.BatchNorm2d(8)
        self.conv1 = nn.Conv2d(8, 8, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(8)
        self.conv2 = nn.Conv2d(8, 8, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(8)
        self.pool = nn.MaxPool2d(2)
        self.head = nn.Linear(8, 3)

    def forward(self, x):
        x = torch.relu(self.bn0(self.stem(x)))
        skip = x
        x = torch.relu(self.bn1(self.conv1(x)))
        x = self.bn2(self.conv2(x))
        x = torch.relu(x + skip)
        x = self.pool(x)
        x = torch.nn.functional.adaptive_avg_pool2d(x, 1)
        x = torch.flatten(x, 1)
        return self.head(x)


def main():
    out_dir = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(20240517)
    model = TinyResNet()
    # Give the batch-norm layers non-trivial running stats.
    model.train()
    with torch.no_grad():
        for _ in range(8):
            model(torch.rand(4, 3, 24, 24))
    model.eval()

    torch.onnx.export(
        model,
        torch.zeros(1, 3, 24, 24),
        str(out_dir / "tiny_cnn.onnx"),
        input_names=["input"],
        output_names=["logits"],
        opset_version=13,
        do_constant_folding=False,
    )

    mean = [0.45, 0.5, 0.55]
    std = [0.25, 0.3, 0.35]
    with open(out_dir / "tiny_cnn.preproc.json", "w") as f:
        json.dump({"schema": "camsticker/preproc@1", "mean": mean, "std": std}, f, indent=2)
        f.write("\n")

    rng = np.random.default_rng(987654321)
    cases = []
    with torch.no_grad():
        for _ in range(3):
            img = rng.random((24, 24, 3))  # HWC in [0,1], caller space
            norm = (img - np.array(mean)) / np.array(std)
            x = torch.from_numpy(norm.transpose(2, 0, 1)[None].astype(np.float32))
            z = model(x).numpy()[0]
            cases.append(
                {
                    "image_hwc": [round(float(v), 9) for v in img.reshape(-1)],
                    "logits": [float(v) for v in z],
                    "top1": int(z.argmax()),
                }
            )
    with open(out_dir / "tiny_cnn_oracle.json", "w") as f:
        json.dump({"height": 24, "width": 24, "cases": cases}, f)
        f.write("\n")
    print("wrote", out_dir / "tiny_cnn.onnx")


if __name__ == "__main__":
    main()
