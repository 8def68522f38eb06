#!/usr/bin/env python3
"""Exports a small fusion generator and its layer activations as OXW files.

Builds the residual encoder-decoder in PyTorch with spectral normalization on
every convolution, runs a few power iterations, folds the normalized weights,
and records every layer output for one fixed input. The committed outputs let
the C++ engine check parity without a Python build.

    python3 make_generator_fixture.py --out-dir .
"""
import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn.utils import parametrizations, parametrize

MAGIC = b"OXW1"


def manifest(in_channels, channels, slope):
    layers = []

    def conv(name, src, cin, cout, act, lvl):
        d = dict(name=name, op="conv3x3", inputs=[src], in_channels=cin, out_channels=cout,
                 activation=act, level=lvl)
        if act == "leaky_relu":
            d["slope"] = slope
        layers.append(d)

    def add(name, a, b, ch, lvl):
        layers.append(dict(name=name, op="add", inputs=[a, b], in_channels=ch, out_channels=ch,
                           activation="none", level=lvl))

    def block(p, src, cin, ch, act, lvl):
        conv(f"{p}.conv1", src, cin, ch, act, lvl)
        conv(f"{p}.conv2", f"{p}.conv1", ch, ch, act, lvl)
        conv(f"{p}.conv3", f"{p}.conv2", ch, ch, act, lvl)
        conv(f"{p}.conv4", f"{p}.conv3", ch, ch, act, lvl)
        add(f"{p}.res", f"{p}.conv1", f"{p}.conv4", ch, lvl)
        conv(f"{p}.conv5", f"{p}.res", ch, ch, act, lvl)
        return f"{p}.conv5"

    x, cin, skips = "input", in_channels, []
    for i, ch in enumerate(channels):
        lvl = i + 1
        x = block(f"enc{lvl}", x, cin, ch, "relu", lvl)
        skips.append(x)
        layers.append(dict(name=f"enc{lvl}.pool", op="maxpool2x2", inputs=[x], in_channels=ch,
                           out_channels=ch, activation="none", level=lvl))
        x, cin = f"enc{lvl}.pool", ch
    x = block("bridge", x, cin, channels[-1], "relu", len(channels) + 1)
    cin = channels[-1]
    for i in reversed(range(len(channels))):
        lvl, ch = i + 1, channels[i]
        layers.append(dict(name=f"dec{lvl}.up", op="upconv3x3", inputs=[x], in_channels=cin,
                           out_channels=ch, activation="leaky_relu", slope=slope, level=lvl,
                           stride=2, padding=1, output_padding=1))
        add(f"dec{lvl}.skip", f"dec{lvl}.up", skips[i], ch, lvl)
        x = block(f"dec{lvl}", f"dec{lvl}.skip", ch, ch, "leaky_relu", lvl)
        cin = ch
    layers.append(dict(name="final", op="final_conv3x3", inputs=[x], in_channels=cin, out_channels=1,
                       activation="tanh", level=0))
    return layers


class Graph(nn.Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = layers
        self.mods = nn.ModuleDict()
        for l in layers:
            key = l["name"].replace(".", "_")
            if l["op"] in ("conv3x3", "final_conv3x3"):
                self.mods[key] = nn.Conv2d(l["in_channels"], l["out_channels"], 3, padding=1)
            elif l["op"] == "upconv3x3":
                self.mods[key] = nn.ConvTranspose2d(l["in_channels"], l["out_channels"], 3, stride=2,
                                                    padding=1, output_padding=1)

    def forward(self, x):
        values = {"input": x}
        for l in self.layers:
            src = [values[s] for s in l["inputs"]]
            op = l["op"]
            if op == "maxpool2x2":
                y = nn.functional.max_pool2d(src[0], 2)
            elif op == "add":
                y = src[0] + src[1]
            else:
                y = self.mods[l["name"].replace(".", "_")](src[0])
            act = l["activation"]
            if act == "relu":
                y = torch.relu(y)
            elif act == "leaky_relu":
                y = nn.functional.leaky_relu(y, l["slope"])
            elif act == "tanh":
                y = torch.tanh(y)
            values[l["name"]] = y
        return values


def write_oxw(path, role, architecture, layers, tensors):
    blob = bytearray()
    table = []
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        table.append(dict(name=name, shape=list(arr.shape), dtype="float32", offset=len(blob)))
        blob += arr.tobytes()
    header = json.dumps(dict(format="oxw", version=1, role=role, architecture=architecture,
                             layers=layers, tensors=table), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", 1, len(header)))
        f.write(header)
        f.write(bytes(blob))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=str(Path(__file__).resolve().parent))
    ap.add_argument("--channels", default="4,8,16,32")
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    channels = [int(c) for c in args.channels.split(",")]
    layers = manifest(3, channels, 0.2)
    g = Graph(layers)
    for m in g.mods.values():
        nn.init.normal_(m.weight, 0.0, 0.02)
        nn.init.normal_(m.bias, 0.0, 0.02)
        parametrizations.spectral_norm(m)

    rng = np.random.default_rng(args.seed)
    x = np.empty((1, 3, args.size, args.size))
    x[0, 0] = rng.uniform(0.6, 1.4, (args.size, args.size))
    x[0, 1] = rng.uniform(0.6, 1.4, (args.size, args.size))
    x[0, 2] = rng.uniform(0.3, 0.6, (args.size, args.size))
    xt = torch.tensor(x, dtype=torch.float32)

    g.train()
    with torch.no_grad():
        for _ in range(5):
            g(xt)
    g.eval()
    for m in g.mods.values():
        parametrize.remove_parametrizations(m, "weight", leave_parametrized=True)

    # Round weights to their float32 export so the oracle sees exactly what is shipped.
    g = g.double()
    with torch.no_grad():
        for m in g.mods.values():
            m.weight.copy_(m.weight.float().double())
            m.bias.copy_(m.bias.float().double())
        values = g(torch.tensor(x.astype(np.float32).astype(np.float64)))

    architecture = dict(name="fusion-generator", in_channels=3, channels=channels, depth=len(channels),
                        output_layer="final", output_mapping="sto2 = (y + 1) / 2",
                        spectral_norm="folded", seed=args.seed)
    weights = []
    for l in layers:
        if l["op"] in ("conv3x3", "final_conv3x3", "upconv3x3"):
            m = g.mods[l["name"].replace(".", "_")]
            weights.append((l["name"] + ".weight", m.weight.detach().numpy()))
            weights.append((l["name"] + ".bias", m.bias.detach().numpy()))
    out = Path(args.out_dir)
    write_oxw(out / "generator_small.oxw", "generator", architecture, layers, weights)
    acts = [("input", x[0])] + [(l["name"], values[l["name"]][0].detach().numpy()) for l in layers]
    write_oxw(out / "generator_small_oracle.oxw", "oracle", architecture, layers, acts)
    final = values["final"][0, 0].detach().numpy()
    print(json.dumps(dict(layers=len(layers), final_min=float(final.min()), final_max=float(final.max()),
                          final_std=float(final.std()))))


if __name__ == "__main__":
    main()
