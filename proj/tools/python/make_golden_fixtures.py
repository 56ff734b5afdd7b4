"""Golden reference outputs for the C++ tests.

Runs the reference implementations (torchvision VGG, the `lpips` package,
open_clip's CLIP model and tokenizer) on the hash-derived weights that
`itstyler-synth backbones` writes, and stores inputs plus expected outputs
as .nta / .json files under tests/fixtures.

    python3 tools/python/make_golden_fixtures.py --synth build/tools/itstyler-synth --out tests/fixtures
"""

import argparse
import gzip
import json
import os
import subprocess
import sys
import tempfile

import numpy as np
import torch

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import ntarchive  # noqa: E402

VGG19_INDEX = {
    "conv1_1": 0, "conv1_2": 2, "conv2_1": 5, "conv2_2": 7, "conv3_1": 10, "conv3_2": 12,
    "conv3_3": 14, "conv3_4": 16, "conv4_1": 19,
}
VGG19_TAPS = {"relu1_1": 1, "relu2_1": 6, "relu3_1": 11, "relu4_1": 20}
VGG16_INDEX = {
    "conv1_1": 0, "conv1_2": 2, "conv2_1": 5, "conv2_2": 7, "conv3_1": 10, "conv3_2": 12, "conv3_3": 14,
    "conv4_1": 17, "conv4_2": 19, "conv4_3": 21, "conv5_1": 24, "conv5_2": 26, "conv5_3": 28,
}

PROMPTS = [
    "oil painting of flowers",
    "fire",
    "flame",
    "ice water",
    "Starry Night!!",
    "it's a dog's life, isn't it",
    "  multiple   spaces\tand\ttabs  ",
    "ukiyo-e woodblock print 1830",
    "watercolor, pastel & ink",
    "cafe au lait",
    "the orange blue and green are all very light in color",
]


def probes(tensors, names):
    return {f"probe.{n}": tensors[n].reshape(-1)[:8] for n in names}


def vgg_fixture(weights, out_path):
    import torchvision

    tensors, _ = weights
    model = torchvision.models.vgg19().features.eval()
    state = {}
    for name, idx in VGG19_INDEX.items():
        state[f"{idx}.weight"] = torch.from_numpy(tensors[f"{name}.weight"])
        state[f"{idx}.bias"] = torch.from_numpy(tensors[f"{name}.bias"])
    model.load_state_dict(state, strict=False)

    rng = np.random.default_rng(1234)
    images = rng.random((2, 3, 16, 24), dtype=np.float64).astype(np.float32)
    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
    x = (torch.from_numpy(images) - mean) / std
    out = {"input": images}
    with torch.no_grad():
        for i, layer in enumerate(model[:21]):
            x = layer(x)
            for tap, idx in VGG19_TAPS.items():
                if idx == i:
                    out[tap] = x.numpy().copy()
    out.update(probes(tensors, ["conv1_1.weight", "conv4_1.weight", "conv4_1.bias"]))
    ntarchive.write(out_path, out, {"reference": f"torchvision {torchvision.__version__} vgg19.features",
                                    "weights": "itstyler-synth backbones --seed 0"})


def lpips_fixture(weights, out_path):
    import lpips

    tensors, _ = weights
    model = lpips.LPIPS(net="vgg", pretrained=True, pnet_rand=True, verbose=False).eval()
    convs = [m for m in model.net.modules() if isinstance(m, torch.nn.Conv2d)]
    for conv, (name, _) in zip(convs, sorted(VGG16_INDEX.items(), key=lambda kv: kv[1])):
        conv.weight.data = torch.from_numpy(tensors[f"{name}.weight"]).clone()
        conv.bias.data = torch.from_numpy(tensors[f"{name}.bias"]).clone()
    for k, lin in enumerate(model.lins):
        lin.model[-1].weight.data = torch.from_numpy(tensors[f"lin{k}.weight"]).clone()

    rng = np.random.default_rng(99)
    n, h, w = 5, 48, 48
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    smooth = np.stack([yy, xx, 0.5 * (yy + xx)]).astype(np.float32)
    noise = rng.random((3, h, w)).astype(np.float32)
    a = np.stack([
        noise,
        smooth,
        smooth,
        0.5 * smooth + 0.5 * noise,
        noise,
    ])
    b = np.stack([
        rng.random((3, h, w)).astype(np.float32),
        np.clip(smooth + 0.05 * rng.standard_normal((3, h, w)), 0, 1).astype(np.float32),
        np.roll(smooth, 3, axis=2),
        np.clip(1.2 * (0.5 * smooth + 0.5 * noise), 0, 1).astype(np.float32),
        np.clip(noise * 0.8 + 0.1, 0, 1).astype(np.float32),
    ])
    with torch.no_grad():
        d = model(torch.from_numpy(a), torch.from_numpy(b), normalize=True).reshape(-1).numpy()
    out = {"a": a, "b": b, "distance": d.astype(np.float32)}
    out.update(probes(tensors, ["conv5_3.weight", "lin2.weight"]))
    ntarchive.write(out_path, out, {"reference": f"lpips {lpips.__version__ if hasattr(lpips, '__version__') else ''} net=vgg version=0.1",
                                    "distance_f64": [float(v) for v in d]})


def clip_fixture(weights, out_dir):
    import open_clip
    from open_clip.model import CLIP, CLIPTextCfg, CLIPVisionCfg
    from open_clip.tokenizer import SimpleTokenizer

    tensors, meta = weights
    merges = meta["tokenizer"]["merges"]
    with tempfile.TemporaryDirectory() as tmp:
        bpe = os.path.join(tmp, "bpe.txt.gz")
        with gzip.open(bpe, "wt", encoding="utf-8") as f:
            f.write("#version: itstyler-synthetic\n" + "\n".join(merges))
        tok = SimpleTokenizer(bpe_path=bpe)

    vocab = tensors["token_embedding.weight"].shape[0]
    width = tensors["ln_final.weight"].shape[0]
    vwidth = tensors["visual.class_embedding"].shape[0]
    layers = len({k.split(".")[2] for k in tensors if k.startswith("transformer.resblocks.")})
    vlayers = len({k.split(".")[3] for k in tensors if k.startswith("visual.transformer.resblocks.")})
    model = CLIP(
        embed_dim=512,
        vision_cfg=CLIPVisionCfg(layers=vlayers, width=vwidth, patch_size=32, image_size=224,
                                 head_width=vwidth // meta["vision_heads"]),
        text_cfg=CLIPTextCfg(context_length=77, vocab_size=vocab, width=width, heads=meta["text_heads"],
                             layers=layers),
        quick_gelu=True,
    ).eval()
    missing, unexpected = model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()}, strict=False)
    assert not unexpected, unexpected
    assert set(missing) <= {"logit_scale", "attn_mask"}, missing

    ids = [tok.encode(p) for p in PROMPTS]
    batch = tok(PROMPTS)
    rng = np.random.default_rng(7)
    seed_pixels = rng.standard_normal((2, 3, 28, 28)).astype(np.float32)
    pixels = torch.from_numpy(seed_pixels).repeat_interleave(8, -1).repeat_interleave(8, -2)
    with torch.no_grad():
        text = model.encode_text(batch, normalize=True).numpy()
        image = model.encode_image(pixels, normalize=True).numpy()

    out = {"text_embedding": text, "seed_pixels": seed_pixels, "image_embedding": image}
    out.update(probes(tensors, ["token_embedding.weight", "visual.proj", "transformer.resblocks.1.mlp.c_proj.weight"]))
    ntarchive.write(os.path.join(out_dir, "clip_reference.nta"), out,
                    {"reference": f"open_clip {open_clip.__version__} CLIP(quick_gelu=True)",
                     "prompts": PROMPTS, "geometry": "tiny", "pixels": "seed_pixels upsampled x8 (nearest)"})
    with open(os.path.join(out_dir, "tokenizer_reference.json"), "w") as f:
        json.dump({"reference": f"open_clip {open_clip.__version__} SimpleTokenizer",
                   "merges": len(merges), "vocab_size": len(tok.encoder),
                   "cases": [{"prompt": p, "ids": i} for p, i in zip(PROMPTS, ids)]}, f, indent=1)
        f.write("\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--synth", required=True, help="path to the itstyler-synth executable")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    torch.set_num_threads(1)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([args.synth, "backbones", "--out", tmp, "--seed", "0", "--clip-geometry", "tiny"],
                       check=True, stdout=subprocess.DEVNULL)
        vgg_fixture(ntarchive.read(os.path.join(tmp, "vgg19.nta")), os.path.join(args.out, "vgg19_reference.nta"))
        lpips_fixture(ntarchive.read(os.path.join(tmp, "lpips.nta")), os.path.join(args.out, "lpips_reference.nta"))
        clip_fixture(ntarchive.read(os.path.join(tmp, "clip.nta")), args.out)


if __name__ == "__main__":
    main()
