#!/usr/bin/env python3
# Copyright 2026 The iptdet Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert a Hugging Face MERT-style checkpoint into an iptdet encoder directory.

Usage: convert_hf_checkpoint.py <hf_model_dir> <output_dir>

The input directory holds config.json plus pytorch_model.bin or
model.safetensors. The output holds config.json and encoder.bin.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch

KEEP_PREFIXES = ("feature_extractor.", "feature_projection.", "encoder.")
CONFIG_KEYS = (
    "conv_dim", "conv_kernel", "conv_stride", "conv_bias", "feat_extract_norm",
    "hidden_size", "num_hidden_layers", "num_attention_heads", "intermediate_size",
    "num_conv_pos_embeddings", "num_conv_pos_embedding_groups", "layer_norm_eps",
    "feat_proj_layer_norm",
)


def load_state(src: Path) -> dict:
    st = src / "model.safetensors"
    if st.exists():
        from safetensors.torch import load_file
        return load_file(str(st))
    return torch.load(src / "pytorch_model.bin", map_location="cpu")


def fold_weight_norm(state: dict) -> dict:
    """Replaces weight_g/weight_v pairs (dim=2) by the plain weight."""
    pairs = {
        "encoder.pos_conv_embed.conv.weight_g": "encoder.pos_conv_embed.conv.weight_v",
        "encoder.pos_conv_embed.conv.parametrizations.weight.original0":
            "encoder.pos_conv_embed.conv.parametrizations.weight.original1",
    }
    for g_key, v_key in pairs.items():
        if g_key in state:
            g, v = state.pop(g_key), state.pop(v_key)
            norm = v.norm(dim=(0, 1), keepdim=True)
            state["encoder.pos_conv_embed.conv.weight"] = g * v / norm
    return state


def to_matrix(name: str, t: torch.Tensor) -> np.ndarray:
    a = t.detach().to(torch.float32).cpu().numpy()
    if a.ndim == 1:
        return a.reshape(1, -1)
    # Conv kernels (out, in, k) flatten to (out, in * k), channel-major.
    return a.reshape(a.shape[0], -1)


def write_tensor_file(path: Path, tensors: dict) -> None:
    with open(path, "wb") as f:
        f.write(b"IPTT")
        f.write(struct.pack("<IQ", 1, len(tensors)))
        for name in sorted(tensors):
            m = np.ascontiguousarray(tensors[name], dtype="<f4")
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
            f.write(m.tobytes())


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args()

    hf_config = json.loads((args.src / "config.json").read_text())
    config = {k: hf_config[k] for k in CONFIG_KEYS if k in hf_config}
    config["backend"] = "pretrained"

    state = fold_weight_norm(dict(load_state(args.src)))
    tensors = {}
    for name, t in state.items():
        name = name.removeprefix("model.")
        if name.startswith(KEEP_PREFIXES) and "masked_spec_embed" not in name:
            tensors[name] = to_matrix(name, t)
    if not tensors:
        print("no encoder tensors found in " + str(args.src), file=sys.stderr)
        return 1

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    write_tensor_file(args.out / "encoder.bin", tensors)
    print(f"wrote {len(tensors)} tensors to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
