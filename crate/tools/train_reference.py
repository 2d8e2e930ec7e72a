#!/usr/bin/env python3
"""Train, quantize and export the reference 784-128-10 fully connected MNIST model.

The digits come from the `mnist` npm package (10,000 MNIST samples stored as
normalized JSON arrays). Fetch it with `npm pack mnist && tar xzf mnist-*.tgz`
and point --digits at `package/src/digits`.

Outputs (in --out):
  fc_784_128_10.json                  quantized model in the model file format
  t10k-subset-images-idx3-ubyte.gz    held-out images (IDX, gzip)
  t10k-subset-labels-idx1-ubyte.gz    held-out labels (IDX, gzip)
"""
import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np
import torch


def load_digits(root):
    xs, ys = [], []
    for d in range(10):
        raw = np.array(json.load(open(Path(root) / f"{d}.json"))["data"])
        px = np.round(raw * 255).astype(np.uint8).reshape(-1, 784)
        xs.append(px)
        ys += [d] * len(px)
    return np.concatenate(xs), np.array(ys, dtype=np.uint8)


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--weight-decay", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    x, y = load_digits(args.digits)
    perm = np.random.default_rng(args.seed).permutation(len(x))
    x, y = x[perm], y[perm]
    xtr, ytr, xte, yte = x[: args.train], y[: args.train], x[args.train :], y[args.train :]

    torch.manual_seed(args.seed)
    net = torch.nn.Sequential(torch.nn.Linear(784, 128), torch.nn.Linear(128, 10))
    opt = torch.optim.Adam(net.parameters(), 1e-3, weight_decay=args.weight_decay)
    xt = torch.tensor(xtr / 255.0, dtype=torch.float32)
    yt = torch.tensor(ytr, dtype=torch.long)
    for _ in range(args.epochs):
        order = torch.randperm(len(xt))
        for i in range(0, len(xt), 64):
            idx = order[i : i + 64]
            loss = torch.nn.functional.cross_entropy(net(xt[idx]), yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()

    w1 = net[0].weight.detach().double().numpy()
    b1 = net[0].bias.detach().double().numpy()
    w2 = net[1].weight.detach().double().numpy()
    b2 = net[1].bias.detach().double().numpy()

    # symmetric per-tensor int8 weights; inputs are raw bytes at scale 1/255
    in_scale = 1.0 / 255.0
    ws1 = np.abs(w1).max() / 127.0
    q1 = np.round(w1 / ws1).astype(np.int64)
    qb1 = np.round(b1 / (ws1 * in_scale)).astype(np.int64)
    hidden = (xtr.astype(np.int64) @ q1.T + qb1) * ws1 * in_scale
    hid_scale = np.abs(hidden).max() / 127.0
    ws2 = np.abs(w2).max() / 127.0
    q2 = np.round(w2 / ws2).astype(np.int64)
    qb2 = np.round(b2 / (ws2 * hid_scale)).astype(np.int64)

    def quant_forward(xs):
        acc = xs.astype(np.int64) @ q1.T + qb1
        h = np.clip(np.round(acc * ws1 * in_scale / hid_scale), -128, 127)
        return (h @ q2.T + qb2) * ws2 * hid_scale

    acc = float((quant_forward(xte).argmax(1) == yte).mean())
    model = {
        "input_size": 784,
        "metadata": {
            "description": "784-128-10 linear FC classifier, MNIST digits",
            "train_samples": str(len(xtr)),
            "test_samples": str(len(xte)),
            "quantized_test_accuracy": f"{acc:.4f}",
            "weight_decay": str(args.weight_decay),
            "epochs": str(args.epochs),
            "seed": str(args.seed),
        },
        "layers": [
            {
                "activation": "linear",
                "weight_scale": ws1,
                "activation_scale": in_scale,
                "biases": qb1.tolist(),
                "weights": q1.tolist(),
            },
            {
                "activation": "linear",
                "weight_scale": ws2,
                "activation_scale": hid_scale,
                "biases": qb2.tolist(),
                "weights": q2.tolist(),
            },
        ],
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fc_784_128_10.json", "w") as f:
        json.dump(model, f, separators=(",", ":"))
    write_idx_images(out / "t10k-subset-images-idx3-ubyte.gz", xte)
    write_idx_labels(out / "t10k-subset-labels-idx1-ubyte.gz", yte)
    print(f"quantized accuracy on {len(xte)} held-out digits: {acc:.4f}")


if __name__ == "__main__":
    main()
