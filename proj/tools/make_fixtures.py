#!/usr/bin/env python3
"""Regenerates the checked-in test fixtures.

The toy model has random weights; validation labels are the model's own
top-1 prediction, with a fixed share of labels replaced by another class so
that top-k accuracies are informative. Reference outputs are computed here in
float64 with a plain numpy forward pass, independently of the C++ code.
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np

KIND = {"conv": 0, "pool": 1, "relu": 2, "linear": 3, "flatten": 4, "softmax": 5}

TOY_INPUT = (3, 32, 32)
TOY_LAYERS = [
    ("conv1", "conv", dict(n=8, k=3, stride=1, pad=1)),
    ("relu1", "relu", {}),
    ("pool1", "pool", dict(k=2, stride=2)),
    ("conv2", "conv", dict(n=16, k=3, stride=1, pad=1)),
    ("relu2", "relu", {}),
    ("pool2", "pool", dict(k=2, stride=2)),
    ("conv3", "conv", dict(n=24, k=3, stride=1, pad=1)),
    ("relu3", "relu", {}),
    ("conv4", "conv", dict(n=24, k=3, stride=1, pad=1)),
    ("relu4", "relu", {}),
    ("conv5", "conv", dict(n=16, k=3, stride=1, pad=1)),
    ("relu5", "relu", {}),
    ("pool5", "pool", dict(k=2, stride=2)),
    ("flatten", "flatten", {}),
    ("fc6", "linear", dict(n=64)),
    ("relu6", "relu", {}),
    ("fc7", "linear", dict(n=64)),
    ("relu7", "relu", {}),
    ("fc8", "linear", dict(n=10)),
    ("softmax", "softmax", {}),
]

ALEXNET_INPUT = (3, 224, 224)
ALEXNET_LAYERS = [
    ("conv1", "conv", dict(n=64, k=11, stride=4, pad=2)),
    ("relu1", "relu", {}),
    ("pool1", "pool", dict(k=3, stride=2)),
    ("conv2", "conv", dict(n=192, k=5, stride=1, pad=2)),
    ("relu2", "relu", {}),
    ("pool2", "pool", dict(k=3, stride=2)),
    ("conv3", "conv", dict(n=384, k=3, stride=1, pad=1)),
    ("relu3", "relu", {}),
    ("conv4", "conv", dict(n=256, k=3, stride=1, pad=1)),
    ("relu4", "relu", {}),
    ("conv5", "conv", dict(n=256, k=3, stride=1, pad=1)),
    ("relu5", "relu", {}),
    ("pool5", "pool", dict(k=3, stride=2)),
    ("flatten", "flatten", {}),
    ("fc6", "linear", dict(n=4096)),
    ("relu6", "relu", {}),
    ("fc7", "linear", dict(n=4096)),
    ("relu7", "relu", {}),
    ("fc8", "linear", dict(n=38)),
    ("softmax", "softmax", {}),
]

TABLE2 = [99.91, 166.98, 65.89, 85.03, 31.91, 20.07, 60.88, 40.98, 55.93, 37.96,
          57.79, 36.11, 27.96, 26.34, 39.15, 34.57, 31.75, 36.04, 36.67, 36.59]


def init_weights(layers, input_shape, rng):
    out = []
    shape = input_shape
    for name, kind, p in layers:
        entry = dict(name=name, kind=kind, **p)
        if kind == "conv":
            c = shape[0]
            fan_in = c * p["k"] * p["k"]
            entry["c"] = c
            entry["w"] = (rng.standard_normal((p["n"], c, p["k"], p["k"])) * np.sqrt(2.0 / fan_in)).astype(np.float32)
            entry["b"] = (rng.standard_normal(p["n"]) * 0.05).astype(np.float32)
            oh = (shape[1] + 2 * p["pad"] - p["k"]) // p["stride"] + 1
            ow = (shape[2] + 2 * p["pad"] - p["k"]) // p["stride"] + 1
            shape = (p["n"], oh, ow)
        elif kind == "pool":
            shape = (shape[0], (shape[1] - p["k"]) // p["stride"] + 1, (shape[2] - p["k"]) // p["stride"] + 1)
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind == "linear":
            c = shape[0]
            entry["c"] = c
            scale = np.sqrt(2.0 / c)
            entry["w"] = (rng.standard_normal((p["n"], c)) * scale).astype(np.float32)
            entry["b"] = (rng.standard_normal(p["n"]) * 0.05).astype(np.float32)
            shape = (p["n"],)
        out.append(entry)
    return out


def write_swmf(layers, path):
    buf = bytearray(b"SWMF")
    buf += struct.pack("<HH", 1, len(layers))
    for e in layers:
        name = e["name"].encode()
        buf += struct.pack("<H", len(name)) + name
        buf += struct.pack("<B", KIND[e["kind"]])
        if e["kind"] == "conv":
            buf += struct.pack("<6I", e["n"], e["c"], e["k"], e["k"], e["stride"], e["pad"])
        elif e["kind"] == "pool":
            buf += struct.pack("<3I", e["k"], e["k"], e["stride"])
        elif e["kind"] == "linear":
            buf += struct.pack("<2I", e["n"], e["c"])
        if "w" in e:
            buf += e["w"].astype("<f4").tobytes() + e["b"].astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def write_swds(images, labels, class_count, path):
    c, h, w = images.shape[1:]
    buf = bytearray(b"SWDS")
    buf += struct.pack("<HIHHHH", 1, len(images), c, h, w, class_count)
    for x, y in zip(images, labels):
        buf += struct.pack("<H", int(y)) + x.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def forward(layers, x):
    x = x.astype(np.float64)
    for e in layers:
        kind = e["kind"]
        if kind == "conv":
            k, s, p = e["k"], e["stride"], e["pad"]
            xp = np.pad(x, ((0, 0), (p, p), (p, p)))
            oh = (xp.shape[1] - k) // s + 1
            ow = (xp.shape[2] - k) // s + 1
            w = e["w"].astype(np.float64)
            y = np.empty((e["n"], oh, ow))
            for i in range(oh):
                for j in range(ow):
                    patch = xp[:, i * s:i * s + k, j * s:j * s + k]
                    y[:, i, j] = np.tensordot(w, patch, axes=([1, 2, 3], [0, 1, 2]))
            x = y + e["b"].astype(np.float64)[:, None, None]
        elif kind == "pool":
            k, s = e["k"], e["stride"]
            oh = (x.shape[1] - k) // s + 1
            ow = (x.shape[2] - k) // s + 1
            y = np.empty((x.shape[0], oh, ow))
            for i in range(oh):
                for j in range(ow):
                    y[:, i, j] = x[:, i * s:i * s + k, j * s:j * s + k].max(axis=(1, 2))
            x = y
        elif kind == "relu":
            x = np.maximum(x, 0.0)
        elif kind == "flatten":
            x = x.reshape(-1)
        elif kind == "linear":
            x = e["w"].astype(np.float64) @ x + e["b"].astype(np.float64)
        elif kind == "softmax":
            z = np.exp(x - x.max())
            x = z / z.sum()
    return x


def calibrate_head(layers, rng, count=256, spread=2.0):
    # A random network sends almost every input to one class. Centre and
    # rescale the last linear layer on a calibration batch so the argmax
    # spreads over all classes.
    head = layers[-2]
    hidden = np.stack([forward(layers[:-2], smooth_image(rng)) for _ in range(count)])
    z = hidden @ head["w"].astype(np.float64).T
    std = z.std(axis=0)
    head["w"] = (head["w"] * (spread / std)[:, None]).astype(np.float32)
    head["b"] = (-(z.mean(axis=0) * spread / std)).astype(np.float32)


def smooth_image(rng):
    coarse = rng.standard_normal((TOY_INPUT[0], 8, 8))
    img = np.kron(coarse, np.ones((1, 4, 4))) + 0.3 * rng.standard_normal(TOY_INPUT)
    return img.astype(np.float32)


def rank_of(probs, label):
    # Ties rank the lower class index first.
    better = probs > probs[label]
    tie_before = (probs == probs[label]) & (np.arange(len(probs)) < label)
    return int(better.sum() + tie_before.sum())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--samples", type=int, default=128)
    ap.add_argument("--noise", type=float, default=0.1)
    args = ap.parse_args()

    out = Path(args.out)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    layers = init_weights(TOY_LAYERS, TOY_INPUT, rng)
    calibrate_head(layers, rng)
    write_swmf(layers, out / "toy_alexnet.swmf")

    # Keep only samples whose class probabilities are well separated, so
    # float32 inference ranks them exactly as this float64 reference does.
    images, probs = [], []
    while len(images) < args.samples:
        x = smooth_image(rng)
        pr = forward(layers, x)
        gaps = np.diff(np.sort(np.log(pr)))
        if gaps.min() > 1e-3:
            images.append(x)
            probs.append(pr)
    images = np.stack(images)
    probs = np.stack(probs)
    labels = probs.argmax(axis=1)
    flip = rng.random(len(labels)) < args.noise
    for i in np.nonzero(flip)[0]:
        labels[i] = (labels[i] + rng.integers(1, 10)) % 10
    write_swds(images, labels, 10, out / "toy_val.swds")

    ranks = np.array([rank_of(p, y) for p, y in zip(probs, labels)])
    accuracy = {str(k): float((ranks < k).mean()) for k in (1, 3, 5)}

    samples = []
    for i in range(4):
        name = f"inputs/sample_{i}.bin"
        images[i].astype("<f4").tofile(out / name)
        samples.append(dict(file=name, label=int(labels[i]), predicted=int(probs[i].argmax()),
                            output=[float(v) for v in probs[i]]))

    manifest = dict(
        model="toy_alexnet.swmf",
        valset="toy_val.swds",
        input_shape=list(TOY_INPUT),
        class_count=10,
        seed=args.seed,
        sample_count=int(len(labels)),
        label_noise=args.noise,
        accuracy=accuracy,
        samples=samples,
    )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    table2 = dict(format="split-totals", unit="ms",
                  split_totals=[dict(split_point=i + 1, total_ms=v) for i, v in enumerate(TABLE2)])
    (out / "table2.json").write_text(json.dumps(table2, indent=2) + "\n")

    desc = dict(input=list(ALEXNET_INPUT), layers=[])
    for name, kind, p in ALEXNET_LAYERS:
        desc["layers"].append(dict(name=name, kind=kind, **p))
    (out / "alexnet_ref.json").write_text(json.dumps(desc, indent=2) + "\n")


if __name__ == "__main__":
    main()
