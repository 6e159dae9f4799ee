#!/usr/bin/env python3
"""Generate forward-parity fixtures for the Rust engine.

The reference forward pass is torchvision's MobileNetV3-Small / ResNet34 with
an appended Linear(1000, 2) head, evaluated in float32 on CPU. Parameters are
the deterministic synthetic store described in
crates/core/src/zoo/synthetic.rs, regenerated here bit-for-bit with numpy, so
no pretrained checkpoint has to be downloaded or committed.

Outputs (under crates/core/tests/fixtures/):
  inputs/input_<i>.tkrt            normalized 3x224x224 inputs
  <arch>.expected.tkws             "features" (N x 1000) and "logits" (N x 2)
  manifest.json                    seed, SHA-256 of each synthetic .tkws, versions

Usage: python3 tools/gen_fixtures.py [--count 5] [--seed 2023]
"""

import argparse
import hashlib
import io
import json
import math
import struct
from pathlib import Path

import numpy as np
import torch
import torchvision

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def splitmix64_mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


# Batch-norm scale (center, half width) per architecture, chosen so that
# backbone outputs stay O(1) and still vary across inputs.
BN_SCALE = {"mobilenet_v3_small": (0.95, 0.05), "resnet34": (0.6, 0.1)}


def role(name, shape, bn_scale):
    if name.endswith(".running_var"):
        return 1.0, 0.5
    if name.endswith(".running_mean") or name.endswith(".bias"):
        return 0.0, 0.1
    if len(shape) >= 2:
        fan_in = int(np.prod(shape[1:]))
        return 0.0, math.sqrt(6.0 / fan_in)
    return bn_scale


def synthetic_tensor(seed, name, shape, bn_scale):
    center, half_width = role(name, shape, bn_scale)
    base = np.uint64(seed ^ fnv1a64(name.encode()))
    n = int(np.prod(shape)) if shape else 1
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = splitmix64_mix(base + idx * GOLDEN)
    t = (z >> np.uint64(41)).astype(np.float32) / np.float32(1 << 23) * np.float32(2) - np.float32(1)
    v = t * np.float32(half_width) + np.float32(center)
    return v.astype(np.float32).reshape(shape)


def record(name, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    name_b = name.encode()
    out = struct.pack("<H", len(name_b)) + name_b + struct.pack("<BB", 0, array.ndim)
    out += b"".join(struct.pack("<Q", d) for d in array.shape)
    return out + array.tobytes()


def tkws(entries):
    out = b"TKWS" + struct.pack("<BI", 1, len(entries))
    return out + b"".join(record(n, a) for n, a in entries)


def tkrt(name, array):
    return b"TKRT" + record(name, array)


def build(arch, seed):
    model = getattr(torchvision.models, arch)(weights=None)
    entries = []
    state = {}
    for name, tensor in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue
        arr = synthetic_tensor(seed, name, list(tensor.shape), BN_SCALE[arch])
        entries.append((name, arr))
        state[name] = torch.from_numpy(arr.copy())
    model.load_state_dict(state, strict=False)
    head = torch.nn.Linear(1000, 2)
    for name, shape in [("head.weight", [2, 1000]), ("head.bias", [2])]:
        arr = synthetic_tensor(seed, name, shape, BN_SCALE[arch])
        entries.append((name, arr))
        getattr(head, name.split(".")[1]).data = torch.from_numpy(arr.copy())
    model.eval()
    head.eval()
    return model, head, entries


def make_inputs(count):
    rng = np.random.default_rng(20230730)
    inputs = []
    yy, xx = np.mgrid[0:224, 0:224].astype(np.float32) / 223.0
    for i in range(count):
        # Smooth color field plus texture, quantized like an 8-bit photo.
        phase = rng.uniform(0, 2 * np.pi, size=3)
        freq = rng.uniform(1.0, 6.0, size=3)
        img = np.stack(
            [0.5 + 0.4 * np.sin(freq[c] * (xx + (c + 1) * yy) * np.pi + phase[c]) for c in range(3)]
        )
        img += rng.normal(0, 0.08, size=img.shape)
        img = np.clip(np.round(img * 255), 0, 255).astype(np.float32) / 255.0
        inputs.append(((img - MEAN[:, None, None]) / STD[:, None, None]).astype(np.float32))
    return inputs


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--count", type=int, default=5)
    parser.add_argument("--seed", type=int, default=2023)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures"))
    args = parser.parse_args()
    out = Path(args.out)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)

    inputs = make_inputs(args.count)
    for i, x in enumerate(inputs):
        (out / "inputs" / f"input_{i}.tkrt").write_bytes(tkrt("input", x))

    manifest = {
        "seed": args.seed,
        "count": args.count,
        "torch": torch.__version__,
        "torchvision": torchvision.__version__,
        "architectures": {},
    }
    for arch in ["mobilenet_v3_small", "resnet34"]:
        model, head, entries = build(arch, args.seed)
        blob = tkws(entries)
        feats, logits = [], []
        with torch.no_grad():
            for x in inputs:
                f = model(torch.from_numpy(x)[None])
                feats.append(f[0].numpy())
                logits.append(head(f)[0].numpy())
        feats = np.stack(feats).astype(np.float32)
        logits = np.stack(logits).astype(np.float32)
        (out / f"{arch}.expected.tkws").write_bytes(tkws([("features", feats), ("logits", logits)]))
        manifest["architectures"][arch] = {
            "weights_sha256": hashlib.sha256(blob).hexdigest(),
            "tensor_count": len(entries),
            "weights_bytes": len(blob),
            "logits": logits.tolist(),
        }
        print(arch, "feature range", float(feats.min()), float(feats.max()), "logits", logits.tolist())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
