#!/usr/bin/env python3
"""Regenerates the tokenizer and GPT-2 parity fixtures under tests/fixtures.

Token ids come from the transformers GPT-2 tokenizer loaded from the bundled
vocab.json / merges.txt. Hidden states come from transformers' GPT2Model with
either converted weights (--tsar) or the same deterministic synthetic weights
the C++ loader builds for "synthetic:<seed>".
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
from transformers import GPT2Config, GPT2Model, GPT2Tokenizer

ROOT = Path(__file__).resolve().parent.parent
MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

TOKENIZER_STRINGS = [
    "Hello world",
    "1.5, 2.0",
    "1.5, -0.25, 3.0",
    "0.000, 1.000, -1.000",
    "12.345, 67.890, -0.001, 1000.500",
    "-273.150, 100.000, 36.600",
    "3.14159",
    "The quick brown fox jumps over the lazy dog.",
    "  leading spaces",
    "trailing spaces   ",
    "tabs\tand\nnewlines\r\n",
    "multiple\n\n\nblank lines",
    "I'm can't won't they're we've he'd you'll",
    "IT'S ALL CAPS'S",
    "don''t double apostrophes",
    "numbers 1234567890 and 000123",
    "mixed123abc456def",
    "punctuation!?.,;:()[]{}<>",
    "email@example.com and https://example.org/path?q=1&r=2",
    "snake_case_identifier and camelCaseIdentifier",
    "C++ and C# and F#",
    "a",
    " ",
    "",
    "ab cd ef gh ij kl mn op qr st uv wx yz",
    "Ünïcödé characters: café naïve résumé",
    "日本語のテキスト",
    "emoji 🙂🚀✨",
    "Ελληνικά και кириллица",
    "مرحبا بالعالم",
    "math: x² + y² = z², ∑ ∫ √",
    "tokens    with     irregular      spacing",
    "semi;colon;separated;values",
    "comma,separated,values,without,spaces",
    "-1.000, -2.000, -3.000, -4.000, -5.000",
    "0.001, 0.010, 0.100, 1.000, 10.000, 100.000",
    "99999.999, -99999.999",
    "1e-05, 2E+10, 3.5e3",
    "temperature 21.5 humidity 45.2 pressure 1013.25",
    "sensor_id=42; value=0.875; unit=kWh",
    "\"quoted\" and 'single quoted'",
    "back\\slash and forward/slash",
    "!!!???...",
    "---===+++",
    "    ",
    "\n",
    "x" * 64,
    "abc " * 20,
    "The year 2024 had 366 days.",
    "GPT-2 byte-level BPE handles any byte sequence.",
    "0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12",
    "0.5,0.25,0.125",
    "Mr. O'Neil's dog's bone",
    "ｆｕｌｌｗｉｄｔｈ ＡＳＣＩＩ",
    "zero​width space",
    "combining é accent",
]

HIDDEN_STRINGS = [
    "1.5, 2.0",
    "0.125, -0.500, 1.750, 2.000",
    "Hello world, the sensor reads 21.5 degrees.",
]


def mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def mix_np(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for c in s.encode("utf-8"):
        h = ((h ^ c) * 0x100000001B3) & MASK
    return h


def synthetic_kind(name):
    is_ln = "ln_" in name
    if is_ln and (name.endswith(".w") or name.endswith(".g")):
        return 1.0, 0.1
    if is_ln:
        return 0.0, 0.02
    if name == "wte":
        return 0.0, 0.035
    if name == "wpe":
        return 0.0, 0.02
    if name.endswith(".b"):
        return 0.0, 0.02
    return 0.0, 0.035


def synthetic_tensor(seed, name, shape):
    center, scale = synthetic_kind(name)
    key = fnv1a64(name) ^ mix(seed)
    n = int(np.prod(shape))
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64)
        x = mix_np(np.uint64(key) + idx * np.uint64(GOLDEN))
    u = (x >> np.uint64(40)).astype(np.float64) * 2.0**-24
    v = (scale * (2.0 * u - 1.0)).astype(np.float32) + np.float32(center)
    return v.reshape(shape)


LEAVES = [
    ("ln_1.w", "ln_1.weight"), ("ln_1.b", "ln_1.bias"),
    ("attn.qkv.w", "attn.c_attn.weight"), ("attn.qkv.b", "attn.c_attn.bias"),
    ("attn.proj.w", "attn.c_proj.weight"), ("attn.proj.b", "attn.c_proj.bias"),
    ("ln_2.w", "ln_2.weight"), ("ln_2.b", "ln_2.bias"),
    ("mlp.fc.w", "mlp.c_fc.weight"), ("mlp.fc.b", "mlp.c_fc.bias"),
    ("mlp.proj.w", "mlp.c_proj.weight"), ("mlp.proj.b", "mlp.c_proj.bias"),
]


def synthetic_archive(seed, cfg):
    d = cfg.n_embd
    shapes = {
        "ln_1.w": (d,), "ln_1.b": (d,), "attn.qkv.w": (d, 3 * d), "attn.qkv.b": (3 * d,),
        "attn.proj.w": (d, d), "attn.proj.b": (d,), "ln_2.w": (d,), "ln_2.b": (d,),
        "mlp.fc.w": (d, 4 * d), "mlp.fc.b": (4 * d,), "mlp.proj.w": (4 * d, d), "mlp.proj.b": (d,),
    }
    ar = {"wte": synthetic_tensor(seed, "wte", (cfg.vocab_size, d)),
          "wpe": synthetic_tensor(seed, "wpe", (cfg.n_positions, d))}
    for i in range(cfg.n_layer):
        for leaf, _ in LEAVES:
            name = f"h{i}.{leaf}"
            ar[name] = synthetic_tensor(seed, name, shapes[leaf])
    ar["ln_f.g"] = synthetic_tensor(seed, "ln_f.g", (d,))
    ar["ln_f.b"] = synthetic_tensor(seed, "ln_f.b", (d,))
    return ar


def read_tsar(path):
    data = Path(path).read_bytes()
    if data[:4] != b"TSAR":
        raise ValueError(f"{path}: bad magic")
    version, count = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        dtype, rank = struct.unpack_from("<BI", data, off)
        off += 5
        if dtype != 1:
            raise ValueError(f"{path}: {name} has dtype {dtype}")
        dims = struct.unpack_from(f"<{rank}Q", data, off)
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
    return out


def write_tsar(path, tensors):
    with open(path, "wb") as f:
        f.write(b"TSAR")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name, t in tensors.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BI", 1, t.ndim))
            f.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_into_hf(model, ar):
    sd = {"wte.weight": ar["wte"], "wpe.weight": ar["wpe"],
          "ln_f.weight": ar["ln_f.g"], "ln_f.bias": ar["ln_f.b"]}
    for i in range(model.config.n_layer):
        for ours, theirs in LEAVES:
            sd[f"h.{i}.{theirs}"] = ar[f"h{i}.{ours}"]
    state = {k: torch.from_numpy(v) for k, v in sd.items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if not k.endswith("attn.bias") and not k.endswith("masked_bias")]
    if missing or unexpected:
        raise ValueError(f"state dict mismatch: missing={missing} unexpected={unexpected}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vocab", default=str(ROOT / "assets" / "gpt2"))
    ap.add_argument("--out", default=str(ROOT / "tests" / "fixtures"))
    ap.add_argument("--tsar", help="converted GPT-2 archive; default uses synthetic weights")
    ap.add_argument("--seed", type=int, default=0, help="synthetic weight seed")
    args = ap.parse_args()

    vocab = Path(args.vocab)
    out = Path(args.out)
    tok = GPT2Tokenizer.from_pretrained(str(vocab))
    if tok.encode("Hello world") != [15496, 995]:
        raise RuntimeError("reference tokenizer failed to load the vocabulary")

    tok_dir = out / "tokenizer"
    tok_dir.mkdir(parents=True, exist_ok=True)
    cases = [{"text": s, "ids": tok.encode(s)} for s in TOKENIZER_STRINGS]
    (tok_dir / "cases.json").write_text(json.dumps(cases, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    cfg = GPT2Config(vocab_size=50257, n_positions=1024, n_embd=768, n_layer=12, n_head=12,
                     activation_function="gelu_new", layer_norm_epsilon=1e-5,
                     resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0)
    weights = read_tsar(args.tsar) if args.tsar else synthetic_archive(args.seed, cfg)
    model = GPT2Model(cfg).eval()
    load_into_hf(model, weights)

    gpt_dir = out / "gpt2"
    gpt_dir.mkdir(parents=True, exist_ok=True)
    meta = {"weights": args.tsar if args.tsar else f"synthetic:{args.seed}", "cases": []}
    blobs = {}
    for k, text in enumerate(HIDDEN_STRINGS):
        ids = tok.encode(text)
        if len(ids) > 32:
            raise ValueError(f"hidden-state input too long: {len(ids)} tokens")
        with torch.no_grad():
            hidden = model(torch.tensor([ids])).last_hidden_state[0].numpy().astype(np.float32)
        name = f"case{k}"
        blobs[name] = hidden
        meta["cases"].append({"name": name, "text": text, "ids": ids})
    write_tsar(gpt_dir / "hidden.tsar", blobs)
    (gpt_dir / "cases.json").write_text(json.dumps(meta, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(cases)} tokenizer cases and {len(blobs)} hidden-state cases to {out}")


if __name__ == "__main__":
    main()
