"""Freeze reference outputs for the gold prompts using HF transformers' GPT-2.

Usage: python3 tools/make_gold_reference.py MODEL_DIR

MODEL_DIR holds model.safetensors, config.json, vocab.json and merges.txt
(the layout read by compmech). The reference is computed by the transformers
implementation, which shares no code with compmech. Token ids come from the
HF tokenizers library. Output: tests/fixtures/gold_reference.json
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch
from safetensors.numpy import load_file
from tokenizers import Tokenizer
from tokenizers.models import BPE
from tokenizers.pre_tokenizers import ByteLevel
from transformers import GPT2Config, GPT2LMHeadModel

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "tests" / "fixtures"
N_TOP = 100
N_PROBE = 100


LENS_PROMPT = "Redefine: iPhone was developed by Google. iPhone was developed by"
LENS_TARGETS = (" Apple", " Google")
LENS_LAYER = 6


def lens_reference(model, tok, text, targets, layer):
    """Residual after ``layer`` blocks, read through ln_f with the final residual's own statistics."""
    layer = min(layer, model.config.n_layer - 1)
    captured = {}
    handle = model.transformer.ln_f.register_forward_hook(lambda mod, inp, out: captured.setdefault("x", inp[0]))
    ids = tok.encode(text).ids
    with torch.no_grad():
        out = model(torch.tensor([ids]), output_hidden_states=True)
    handle.remove()
    final = captured["x"][0, -1].double()
    mu, sd = final.mean(), torch.sqrt(final.var(unbiased=False) + model.config.layer_norm_epsilon)
    h = out.hidden_states[layer][0, -1].double()
    ln = model.transformer.ln_f
    normed = (h - mu) / sd * ln.weight.double() + ln.bias.double()
    W_U = model.lm_head.weight.double()
    target_ids = [tok.encode(t).ids[0] for t in targets]
    return {
        "text": text,
        "layer": layer,
        "target_ids": target_ids,
        "logits": (W_U[target_ids] @ normed).tolist(),
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("model_dir")
    ap.add_argument("--out", default=str(FIX / "gold_reference.json"))
    args = ap.parse_args()
    mdir = Path(args.model_dir)

    cfg = GPT2Config(**json.loads((mdir / "config.json").read_text()))
    model = GPT2LMHeadModel(cfg).eval()
    sd = {k.removeprefix("transformer."): torch.from_numpy(v) for k, v in load_file(mdir / "model.safetensors").items()}
    missing, _ = model.transformer.load_state_dict(sd, strict=False)
    missing = [m for m in missing if not m.endswith(("attn.bias", "attn.masked_bias"))]
    if missing:
        raise SystemExit(f"checkpoint lacks {missing}")
    if "lm_head.weight" in sd:
        model.lm_head.weight.data.copy_(sd["lm_head.weight"])
    else:
        model.tie_weights()
    tok = Tokenizer(BPE.from_file(str(mdir / "vocab.json"), str(mdir / "merges.txt")))
    tok.pre_tokenizer = ByteLevel(add_prefix_space=False)

    prompts = json.loads((FIX / "gold_prompts.json").read_text())["prompts"]
    probe = np.random.default_rng(0).choice(cfg.vocab_size, N_PROBE, replace=False)
    entries = []
    with torch.no_grad():
        for text in prompts:
            ids = tok.encode(text).ids
            logits = model(torch.tensor([ids])).logits[0, -1].numpy().astype(np.float64)
            top = np.argsort(-logits, kind="stable")[:N_TOP]
            check = np.unique(np.concatenate([top, probe]))
            entries.append({
                "text": text,
                "tokens": ids,
                "top1": int(np.argmax(logits)),
                "logit_ids": check.tolist(),
                "logits": logits[check].tolist(),
            })
    lens = lens_reference(model, tok, LENS_PROMPT, LENS_TARGETS, LENS_LAYER)
    Path(args.out).write_text(json.dumps({
        "lens": lens,
        "oracle": f"transformers {__import__('transformers').__version__} GPT2LMHeadModel, float32 CPU",
        "entries": entries,
    }, indent=0))
    print(f"wrote {len(entries)} entries to {args.out}")


if __name__ == "__main__":
    main()
