#!/usr/bin/env python3
# SPDX-License-Identifier: MIT OR Apache-2.0
"""Write tiny llama-layout GGUF files and reference logits computed with numpy.

Outputs (next to this script):
  tiny_f32.gguf, tiny_f16.gguf   loadable models
  tiny_q4_0.gguf                 same model with one Q4_0 tensor
  reference.json                 token ids and float64 logits for each loadable file
"""
import json
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
ALIGN = 32

N_LAYERS, D, N_HEADS, N_KV, D_FF, CTX = 2, 16, 4, 2, 24, 32
EPS, THETA = 1e-5, 10000.0
WORDS = ["▁the", "▁patient", "▁is", "▁male", "▁female", "▁a"]
TOKENS = ["<unk>", "<s>", "</s>"] + [f"<0x{b:02X}>" for b in range(256)] + WORDS
TYPES = [2, 3, 3] + [6] * 256 + [1] * len(WORDS)
VOCAB = len(TOKENS)
PROMPT = [1, TOKENS.index("▁the"), TOKENS.index("▁patient"), TOKENS.index("▁is"),
          TOKENS.index("▁female"), TOKENS.index("▁a"), 3 + ord("x")]


def weights(rng):
    w = {"token_embd.weight": rng.normal(0, 0.5, (VOCAB, D))}
    kv = N_KV * (D // N_HEADS)
    for l in range(N_LAYERS):
        p = f"blk.{l}."
        w[p + "attn_norm.weight"] = 1 + 0.2 * rng.standard_normal(D)
        w[p + "attn_q.weight"] = rng.normal(0, 0.4, (D, D))
        w[p + "attn_k.weight"] = rng.normal(0, 0.4, (kv, D))
        w[p + "attn_v.weight"] = rng.normal(0, 0.4, (kv, D))
        w[p + "attn_output.weight"] = rng.normal(0, 0.4, (D, D))
        w[p + "ffn_norm.weight"] = 1 + 0.2 * rng.standard_normal(D)
        w[p + "ffn_gate.weight"] = rng.normal(0, 0.4, (D_FF, D))
        w[p + "ffn_up.weight"] = rng.normal(0, 0.4, (D_FF, D))
        w[p + "ffn_down.weight"] = rng.normal(0, 0.4, (D, D_FF))
    w["output_norm.weight"] = 1 + 0.2 * rng.standard_normal(D)
    w["output.weight"] = rng.normal(0, 0.5, (VOCAB, D))
    return {k: v.astype(np.float32) for k, v in w.items()}


# ---------------------------------------------------------------------------
# numpy reference
# ---------------------------------------------------------------------------

def rms(x, g):
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + EPS) * g


def rope(x, pos):
    dh = x.shape[-1]
    i = np.arange(dh // 2)
    ang = pos[:, None] * THETA ** (-2.0 * i / dh)
    c, s = np.cos(ang), np.sin(ang)
    a, b = x[..., 0::2].copy(), x[..., 1::2].copy()
    out = np.empty_like(x)
    out[..., 0::2] = a * c[:, None, :] - b * s[:, None, :]
    out[..., 1::2] = a * s[:, None, :] + b * c[:, None, :]
    return out


def reference(w, ids):
    w = {k: v.astype(np.float64) for k, v in w.items()}
    n, dh = len(ids), D // N_HEADS
    pos = np.arange(n, dtype=np.float64)
    x = w["token_embd.weight"][ids]
    mask = np.triu(np.full((n, n), -np.inf), 1)
    for l in range(N_LAYERS):
        p = f"blk.{l}."
        h = rms(x, w[p + "attn_norm.weight"])
        q = rope((h @ w[p + "attn_q.weight"].T).reshape(n, N_HEADS, dh), pos)
        k = rope((h @ w[p + "attn_k.weight"].T).reshape(n, N_KV, dh), pos)
        v = (h @ w[p + "attn_v.weight"].T).reshape(n, N_KV, dh)
        rep = N_HEADS // N_KV
        k, v = np.repeat(k, rep, axis=1), np.repeat(v, rep, axis=1)
        scores = np.einsum("qhd,khd->hqk", q, k) / np.sqrt(dh) + mask
        scores = np.exp(scores - scores.max(-1, keepdims=True))
        scores /= scores.sum(-1, keepdims=True)
        att = np.einsum("hqk,khd->qhd", scores, v).reshape(n, D)
        x = x + att @ w[p + "attn_output.weight"].T
        h = rms(x, w[p + "ffn_norm.weight"])
        g = h @ w[p + "ffn_gate.weight"].T
        u = h @ w[p + "ffn_up.weight"].T
        x = x + (g / (1 + np.exp(-g)) * u) @ w[p + "ffn_down.weight"].T
    return rms(x, w["output_norm.weight"]) @ w["output.weight"].T


# ---------------------------------------------------------------------------
# GGUF writer
# ---------------------------------------------------------------------------

def gguf_string(s):
    b = s.encode("utf-8")
    return struct.pack("<Q", len(b)) + b


def kv(key, ty, value):
    out = gguf_string(key) + struct.pack("<I", ty)
    if ty == 4:
        out += struct.pack("<I", value)
    elif ty == 6:
        out += struct.pack("<f", value)
    elif ty == 8:
        out += gguf_string(value)
    elif ty == 9:
        elem, items = value
        out += struct.pack("<IQ", elem, len(items))
        for it in items:
            out += gguf_string(it) if elem == 8 else struct.pack("<i", it)
    return out


def q4_0(a):
    flat = a.reshape(-1, 32)
    out = bytearray()
    for block in flat:
        amax = block[np.argmax(np.abs(block))]
        d = amax / -8 if amax != 0 else 0.0
        inv = 1 / d if d else 0.0
        q = np.clip(np.floor(block * inv + 8.5), 0, 15).astype(np.uint8)
        out += np.float16(d).tobytes()
        out += bytes((q[:16] | (q[16:] << 4)).tolist())
    return bytes(out)


def write(path, w, dtype_of):
    meta = [
        kv("general.architecture", 8, "llama"),
        kv("general.name", 8, "tiny"),
        kv("llama.block_count", 4, N_LAYERS),
        kv("llama.context_length", 4, CTX),
        kv("llama.embedding_length", 4, D),
        kv("llama.feed_forward_length", 4, D_FF),
        kv("llama.attention.head_count", 4, N_HEADS),
        kv("llama.attention.head_count_kv", 4, N_KV),
        kv("llama.attention.layer_norm_rms_epsilon", 6, EPS),
        kv("llama.rope.freq_base", 6, THETA),
        kv("general.alignment", 4, ALIGN),
        kv("tokenizer.ggml.model", 8, "llama"),
        kv("tokenizer.ggml.tokens", 9, (8, TOKENS)),
        kv("tokenizer.ggml.token_type", 9, (5, TYPES)),
        kv("tokenizer.ggml.bos_token_id", 4, 1),
        kv("tokenizer.ggml.eos_token_id", 4, 2),
    ]
    infos, blobs, offset = b"", [], 0
    for name, a in w.items():
        ty = dtype_of(name)
        if ty == 0:
            blob = a.astype("<f4").tobytes()
        elif ty == 1:
            blob = a.astype("<f2").tobytes()
        else:
            blob = q4_0(a)
        dims = list(reversed(a.shape))
        infos += gguf_string(name) + struct.pack("<I", len(dims)) + b"".join(struct.pack("<Q", d) for d in dims)
        infos += struct.pack("<IQ", ty, offset)
        pad = (-len(blob)) % ALIGN
        blobs.append(blob + b"\0" * pad)
        offset += len(blob) + pad
    head = b"GGUF" + struct.pack("<IQQ", 3, len(w), len(meta)) + b"".join(meta) + infos
    head += b"\0" * ((-len(head)) % ALIGN)
    path.write_bytes(head + b"".join(blobs))


def main():
    w = weights(np.random.default_rng(20240607))
    write(HERE / "tiny_f32.gguf", w, lambda n: 0)
    f16_names = {n for n in w if n.endswith(("attn_q.weight", "ffn_up.weight", "output.weight"))}
    write(HERE / "tiny_f16.gguf", w, lambda n: 1 if n in f16_names else 0)
    write(HERE / "tiny_q4_0.gguf", w, lambda n: 2 if n == "blk.1.ffn_down.weight" else 0)
    w16 = {n: (a.astype(np.float16).astype(np.float32) if n in f16_names else a) for n, a in w.items()}
    ref = {
        "tokens": PROMPT,
        "vocab_size": VOCAB,
        "f32": reference(w, PROMPT).tolist(),
        "f16": reference(w16, PROMPT).tolist(),
        "q4_0_tensor": "blk.1.ffn_down.weight",
    }
    (HERE / "reference.json").write_text(json.dumps(ref) + "\n")


if __name__ == "__main__":
    main()
