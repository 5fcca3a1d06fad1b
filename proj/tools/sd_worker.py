# Copyright (C) 2026 The matfuse Authors
# SPDX-License-Identifier: Apache-2.0
"""Stable Diffusion 1.5 + IP-Adapter denoiser worker for matfuse.

Speaks the matfuse worker protocol: one JSON object per line on stdin, one
reply per line on stdout. Logging goes to stderr.

    python3 tools/sd_worker.py --weights $MATFUSE_WEIGHTS_DIR [--size 512] [--device cuda]
    python3 tools/sd_worker.py --tiny-random      # small random models, for protocol tests
    python3 tools/sd_worker.py --clip-only --weights $MATFUSE_WEIGHTS_DIR   # image embeddings only
"""

import argparse
import base64
import json
import logging
import os
import sys

import numpy as np
import torch
import torch.nn.functional as F

log = logging.getLogger("sd_worker")

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


# ---------------------------------------------------------------- wire format


def to_array(doc):
    raw = base64.b64decode(doc["b64"])
    dtype = {"f64": np.float64, "f32": np.float32, "u8": np.uint8}[doc["dtype"]]
    return np.frombuffer(raw, dtype=dtype).reshape(doc["shape"])


def from_array(arr, dtype="f32"):
    np_dtype = {"f64": "<f8", "f32": "<f4", "u8": "u1"}[dtype]
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np_dtype))
    return {"shape": list(arr.shape), "dtype": dtype, "b64": base64.b64encode(arr.tobytes()).decode("ascii")}


def from_tensor(t):
    return from_array(t.detach().to(torch.float32).cpu().numpy())


class WorkerError(Exception):
    def __init__(self, kind, component, message):
        super().__init__(message)
        self.kind = kind
        self.component = component


# ------------------------------------------------------- attention processors


class State:
    """Per-call conditioning and recording state shared by the processors."""

    def __init__(self):
        self.lam = 0.0
        self.ip_tokens = None
        self.masks = {}  # query count -> [N, 1] gate
        self.record = False
        self.recorded = {}
        self.query_counts = {}


class SelfAttention:
    def __init__(self, name, state, recorded):
        self.name = name
        self.state = state
        self.recorded = recorded

    def __call__(self, attn, hidden_states, encoder_hidden_states=None, attention_mask=None, temb=None, **kwargs):
        self.state.query_counts[self.name] = hidden_states.shape[1]
        if not (self.state.record and self.name in self.recorded):
            q = attn.head_to_batch_dim(attn.to_q(hidden_states))
            k = attn.head_to_batch_dim(attn.to_k(hidden_states))
            v = attn.head_to_batch_dim(attn.to_v(hidden_states))
            out = F.scaled_dot_product_attention(q[None], k[None], v[None], scale=attn.scale)[0]
        else:
            q = attn.head_to_batch_dim(attn.to_q(hidden_states))
            k = attn.head_to_batch_dim(attn.to_k(hidden_states))
            v = attn.head_to_batch_dim(attn.to_v(hidden_states))
            probs = attn.get_attention_scores(q, k, None)
            # Head-averaged map of the single batch element.
            self.state.recorded[self.name] = probs.float().mean(dim=0)
            out = torch.bmm(probs, v)
        out = attn.batch_to_head_dim(out)
        return attn.to_out[1](attn.to_out[0](out))


class MaterialCrossAttention:
    """Text cross-attention plus lambda-weighted, mask-gated image-token attention."""

    def __init__(self, name, state, to_k_ip, to_v_ip):
        self.name = name
        self.state = state
        self.to_k_ip = to_k_ip
        self.to_v_ip = to_v_ip

    def _attend(self, attn, q, context, to_k, to_v):
        k = attn.head_to_batch_dim(to_k(context))
        v = attn.head_to_batch_dim(to_v(context))
        out = F.scaled_dot_product_attention(q[None], k[None], v[None], scale=attn.scale)[0]
        return attn.batch_to_head_dim(out)

    def __call__(self, attn, hidden_states, encoder_hidden_states=None, attention_mask=None, temb=None, **kwargs):
        if isinstance(encoder_hidden_states, tuple):
            encoder_hidden_states = encoder_hidden_states[0]
        n = hidden_states.shape[1]
        self.state.query_counts[self.name] = n
        q = attn.head_to_batch_dim(attn.to_q(hidden_states))
        out = self._attend(attn, q, encoder_hidden_states, attn.to_k, attn.to_v)
        st = self.state
        if st.ip_tokens is not None and st.lam > 0.0:
            gate = st.masks.get(n)
            if gate is None:
                raise WorkerError("shape", "conditioning", f"no mask level for {n} queries")
            img = self._attend(attn, q, st.ip_tokens.to(out.dtype), self.to_k_ip, self.to_v_ip)
            out = out + st.lam * gate.to(out.dtype) * img
        return attn.to_out[1](attn.to_out[0](out))


# ------------------------------------------------------------------- model


def clip_preprocess(x, side, dtype):
    x = F.interpolate(x.float(), size=(side, side), mode="bicubic", align_corners=False).clamp(0, 1)
    mean = torch.tensor(CLIP_MEAN, device=x.device).view(1, 3, 1, 1)
    std = torch.tensor(CLIP_STD, device=x.device).view(1, 3, 1, 1)
    return ((x - mean) / std).to(dtype)


class ClipModel:
    """Projected CLIP image embeddings for crop similarity."""

    def __init__(self, encoder, name, device, dtype):
        self.encoder = encoder.to(device=device, dtype=dtype).eval().requires_grad_(False)
        self.name = name
        self.device = device
        self.dtype = dtype

    def handlers(self):
        return {"clip_info": self.info, "clip_embed": self.embed}

    def info(self, req):
        return {"name": self.name, "dim": self.encoder.config.projection_dim}

    def embed(self, req):
        img = to_array(req["image"]).astype(np.float32)
        x = torch.from_numpy(img).permute(2, 0, 1)[None].to(self.device)
        x = clip_preprocess(x, self.encoder.config.image_size, self.dtype)
        with torch.no_grad():
            e = self.encoder(x).image_embeds[0].float()
        return {"embedding": from_tensor(e)}


class Model:
    def __init__(self, pipe, image_projection, ip_layers, size, device, dtype, name, details):
        self.pipe = pipe
        self.unet = pipe.unet
        self.vae = pipe.vae
        self.text_encoder = pipe.text_encoder
        self.tokenizer = pipe.tokenizer
        self.image_encoder = pipe.image_encoder
        self.image_projection = image_projection
        self.size = size
        self.device = device
        self.dtype = dtype
        self.state = State()
        self.prompt_cache = {}
        self.pending = None
        self.name = name
        self.details = details
        for module in (self.unet, self.vae, self.text_encoder, self.image_encoder, image_projection):
            module.to(device=device, dtype=dtype).eval().requires_grad_(False)

        self.latent_channels = self.unet.config.in_channels
        self.latent_hw = size // 8

        cross_names = [n for n in self.unet.attn_processors if n.endswith("attn2.processor")]
        self_names = [n for n in self.unet.attn_processors if n.endswith("attn1.processor")]
        # Self-attention maps recorded from the first up block that has attention layers.
        first_up = min(
            int(n.split(".")[1]) for n in self_names if n.startswith("up_blocks.")
        )
        self.recorded = [n for n in self_names if n.startswith(f"up_blocks.{first_up}.")]
        procs = {}
        for n in self_names:
            procs[n] = SelfAttention(n, self.state, set(self.recorded))
        for n in cross_names:
            k_ip, v_ip = ip_layers[n]
            procs[n] = MaterialCrossAttention(n, self.state, k_ip.to(device, dtype), v_ip.to(device, dtype))
        self.unet.set_attn_processor(procs)

        self.features = None
        self.unet.up_blocks[-1].register_forward_hook(self._feature_hook)
        self._probe()

    def _feature_hook(self, module, inputs, output):
        self.features = output[0] if isinstance(output, tuple) else output

    def _probe(self):
        z = torch.zeros(1, self.latent_channels, self.latent_hw, self.latent_hw, device=self.device, dtype=self.dtype)
        self.state.record = True
        with torch.no_grad():
            self.unet(z, 1, encoder_hidden_states=self._prompt(""))
        self.state.record = False
        self.feature_shape = list(self.features.shape[1:])
        self.map_shapes = {n: list(self.state.recorded[n].shape) for n in self.recorded}
        counts = sorted({self.state.query_counts[n] for n in self.state.query_counts if n.endswith("attn2.processor")},
                        reverse=True)
        self.grids = []
        for c in counts:
            side = int(round(c ** 0.5))
            if side * side != c:
                raise WorkerError("backend", "unet", f"non-square attention grid with {c} queries")
            self.grids.append([side, side])
        self.state.recorded = {}

    def manifest(self):
        tokens = self.image_projection.num_image_text_embeds
        return {
            "name": self.name,
            "image_shape": [self.size, self.size],
            "latent_shape": [self.latent_channels, self.latent_hw, self.latent_hw],
            "self_attention_layers": [
                {"name": n.removesuffix(".processor"), "shape": self.map_shapes[n]} for n in self.recorded
            ],
            "feature_shape": self.feature_shape,
            "cross_attention_grids": self.grids,
            "embedding_tokens": tokens,
            "embedding_dim": self.unet.config.cross_attention_dim,
            "details": self.details,
        }

    # -- conditioning

    def _prompt(self, text):
        if text not in self.prompt_cache:
            ids = self.tokenizer(
                text, padding="max_length", max_length=self.tokenizer.model_max_length, truncation=True,
                return_tensors="pt"
            ).input_ids.to(self.device)
            with torch.no_grad():
                self.prompt_cache[text] = self.text_encoder(ids)[0]
        return self.prompt_cache[text]

    def _apply_conditioning(self, cond):
        st = self.state
        st.lam = 0.0
        st.ip_tokens = None
        st.masks = {}
        mode = cond["mode"]
        prompt = "" if mode == "null" else cond.get("prompt", "")
        if mode == "text_image":
            st.lam = float(cond["lambda"])
            if st.lam < 0:
                raise WorkerError("validation", "lam", "must be >= 0")
            tokens = torch.from_numpy(to_array(cond["image_tokens"]).astype(np.float32))
            st.ip_tokens = tokens[None].to(self.device, self.dtype)
            masks = [to_array(m) for m in cond["mask_pyramid"]]
            if len(masks) != len(self.grids):
                raise WorkerError("shape", "conditioning",
                                  f"mask pyramid has {len(masks)} levels, expected {len(self.grids)}")
            for m in masks:
                gate = torch.from_numpy(m.astype(np.float32)).reshape(1, -1, 1)
                st.masks[gate.shape[1]] = gate.to(self.device)
        return self._prompt(prompt)

    def _latent(self, doc, grad=False):
        z = torch.from_numpy(to_array(doc).astype(np.float32)).to(self.device, self.dtype)[None]
        expected = (1, self.latent_channels, self.latent_hw, self.latent_hw)
        if tuple(z.shape) != expected:
            raise WorkerError("shape", "latent", f"latent shape {list(z.shape[1:])}, expected {list(expected[1:])}")
        return z.requires_grad_(grad)

    def _internals(self):
        maps = [self.state.recorded[n] for n in self.recorded]
        return maps, self.features[0]

    # -- ops

    def predict(self, req):
        z = self._latent(req["latent"])
        text = self._apply_conditioning(req["cond"])
        record = bool(req.get("record", False))
        self.state.record = record
        self.state.recorded = {}
        try:
            with torch.no_grad():
                noise = self.unet(z, int(req["timestep"]), encoder_hidden_states=text).sample
        finally:
            self.state.record = False
        reply = {"noise": from_tensor(noise[0])}
        if record:
            maps, feats = self._internals()
            reply["internals"] = {"self_attn_maps": [from_tensor(m) for m in maps], "features": from_tensor(feats)}
        return reply

    def pullback(self, req):
        z = self._latent(req["latent"], grad=True)
        text = self._apply_conditioning(req["cond"])
        self.state.record = True
        self.state.recorded = {}
        try:
            with torch.enable_grad():
                self.unet(z, int(req["timestep"]), encoder_hidden_states=text)
        finally:
            self.state.record = False
        maps, feats = self._internals()
        self.pending = (z, maps, feats)
        return {"internals": {"self_attn_maps": [from_tensor(m) for m in maps], "features": from_tensor(feats)}}

    def cotangent(self, req):
        if self.pending is None:
            raise WorkerError("backend", "worker", "no pullback in progress")
        z, maps, feats = self.pending
        self.pending = None
        cot = req["cotangent"]
        outputs = list(maps) + [feats]
        grads = [torch.from_numpy(to_array(c).astype(np.float32)) for c in cot["self_attn_maps"]]
        grads.append(torch.from_numpy(to_array(cot["features"]).astype(np.float32)))
        if len(grads) != len(outputs):
            raise WorkerError("shape", "cotangent", "cotangent does not match the recorded internals")
        grads = [g.to(o.device, o.dtype).reshape(o.shape) for g, o in zip(grads, outputs)]
        torch.autograd.backward(outputs, grads)
        return {"latent_grad": from_tensor(z.grad[0])}

    def abort(self, req):
        self.pending = None
        return {}

    def _image(self, doc):
        img = to_array(doc).astype(np.float32)
        return torch.from_numpy(img).permute(2, 0, 1)[None].to(self.device, self.dtype)

    def embed(self, req):
        x = clip_preprocess(self._image(req["image"]), self.image_encoder.config.image_size, self.dtype)
        with torch.no_grad():
            embeds = self.image_encoder(x).image_embeds
            tokens = self.image_projection(embeds)
        return {"tokens": from_tensor(tokens[0])}

    def encode(self, req):
        x = self._image(req["image"]) * 2.0 - 1.0
        with torch.no_grad():
            latent = self.vae.encode(x).latent_dist.mean * self.vae.config.scaling_factor
        return {"latent": from_tensor(latent[0])}

    def decode(self, req):
        z = self._latent(req["latent"])
        with torch.no_grad():
            x = self.vae.decode(z / self.vae.config.scaling_factor).sample
        img = ((x[0].float() + 1.0) / 2.0).clamp(0, 1).permute(1, 2, 0).cpu().numpy()
        return {"image": from_array(img, "f64")}


# ------------------------------------------------------------------ loading


def harvest_ip_layers(unet):
    layers = {}
    for name, proc in unet.attn_processors.items():
        if name.endswith("attn2.processor"):
            layers[name] = (proc.to_k_ip[0], proc.to_v_ip[0])
    return layers


def load_pretrained(weights, size, device, dtype):
    from diffusers import AutoencoderKL, DDIMScheduler, StableDiffusionPipeline, UNet2DConditionModel
    from transformers import CLIPTextModel, CLIPTokenizer, CLIPVisionModelWithProjection

    sd = os.path.join(weights, "stable-diffusion-v1-5")
    ip = os.path.join(weights, "ip-adapter")
    weight_name = "ip-adapter_sd15.safetensors"
    if not os.path.exists(os.path.join(ip, weight_name)):
        weight_name = "ip-adapter_sd15.bin"
    pipe = StableDiffusionPipeline(
        vae=AutoencoderKL.from_pretrained(sd, subfolder="vae"),
        text_encoder=CLIPTextModel.from_pretrained(sd, subfolder="text_encoder"),
        tokenizer=CLIPTokenizer.from_pretrained(sd, subfolder="tokenizer"),
        unet=UNet2DConditionModel.from_pretrained(sd, subfolder="unet"),
        scheduler=DDIMScheduler(),
        safety_checker=None,
        feature_extractor=None,
        image_encoder=CLIPVisionModelWithProjection.from_pretrained(os.path.join(ip, "image_encoder")),
        requires_safety_checker=False,
    )
    pipe.load_ip_adapter(ip, subfolder="", weight_name=weight_name, image_encoder_folder=None)
    projection = pipe.unet.encoder_hid_proj.image_projection_layers[0]
    ip_layers = harvest_ip_layers(pipe.unet)
    pipe.unet.encoder_hid_proj = None
    pipe.unet.config.encoder_hid_dim_type = None
    details = {"weights": os.path.abspath(weights), "ip_adapter": weight_name, "device": device,
               "dtype": str(dtype).removeprefix("torch.")}
    return Model(pipe, projection, ip_layers, size, device, dtype, "sd15-ip-adapter", details)


class HashTokenizer:
    """Deterministic word-hash tokenizer for the random test models."""

    model_max_length = 8

    def __call__(self, text, max_length=8, **kwargs):
        ids = [1] + [2 + (sum(map(ord, w)) % 90) for w in text.split()][: max_length - 2] + [0]
        ids += [0] * (max_length - len(ids))

        class Out:
            input_ids = torch.tensor([ids])

        return Out()


def build_tiny_random(size, device, dtype):
    from diffusers import AutoencoderKL, DDIMScheduler, StableDiffusionPipeline, UNet2DConditionModel
    from diffusers.models.attention_processor import IPAdapterAttnProcessor2_0
    from diffusers.models.embeddings import ImageProjection
    from transformers import CLIPTextConfig, CLIPTextModel, CLIPVisionConfig, CLIPVisionModelWithProjection

    torch.manual_seed(0)
    cross = 32
    unet = UNet2DConditionModel(
        sample_size=size // 8, in_channels=4, out_channels=4, layers_per_block=1,
        block_out_channels=(32, 64), down_block_types=("CrossAttnDownBlock2D", "DownBlock2D"),
        up_block_types=("UpBlock2D", "CrossAttnUpBlock2D"), cross_attention_dim=cross,
        attention_head_dim=8, norm_num_groups=8,
    )
    vae = AutoencoderKL(
        in_channels=3, out_channels=3, latent_channels=4, block_out_channels=(8, 8, 8, 8),
        down_block_types=("DownEncoderBlock2D",) * 4, up_block_types=("UpDecoderBlock2D",) * 4,
        norm_num_groups=4, layers_per_block=1,
    )
    text = CLIPTextModel(CLIPTextConfig(vocab_size=100, hidden_size=cross, intermediate_size=64,
                                        num_hidden_layers=2, num_attention_heads=4, max_position_embeddings=8))
    vision = CLIPVisionModelWithProjection(CLIPVisionConfig(image_size=32, patch_size=8, hidden_size=32,
                                                            intermediate_size=64, num_hidden_layers=2,
                                                            num_attention_heads=4, projection_dim=16))
    pipe = StableDiffusionPipeline(vae=vae, text_encoder=text, tokenizer=HashTokenizer(), unet=unet,
                                   scheduler=DDIMScheduler(), safety_checker=None, feature_extractor=None,
                                   image_encoder=vision, requires_safety_checker=False)
    ip_layers = {}
    for name in unet.attn_processors:
        if name.endswith("attn2.processor"):
            block = unet.get_submodule(name.removesuffix(".processor"))
            proc = IPAdapterAttnProcessor2_0(block.inner_dim, cross, num_tokens=(4,))
            ip_layers[name] = (proc.to_k_ip[0], proc.to_v_ip[0])
    projection = ImageProjection(cross_attention_dim=cross, image_embed_dim=16, num_image_text_embeds=4)
    return Model(pipe, projection, ip_layers, size, device, dtype, "tiny-random", {"device": device})


# --------------------------------------------------------------------- loop


def denoiser_handlers(model):
    return {
        "manifest": lambda req: {"manifest": model.manifest()},
        "predict": model.predict,
        "pullback": model.pullback,
        "cotangent": model.cotangent,
        "pullback_abort": model.abort,
        "embed": model.embed,
        "encode": model.encode,
        "decode": model.decode,
    }


def serve(handlers, fin, fout):
    for line in fin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op", "")
            if op == "shutdown":
                fout.write(json.dumps({"ok": True}) + "\n")
                fout.flush()
                return
            if op not in handlers:
                raise WorkerError("backend", "worker", f"unknown op '{op}'")
            reply = {"ok": True, **handlers[op](req)}
        except WorkerError as e:
            reply = {"ok": False, "kind": e.kind, "component": e.component, "error": str(e)}
        except Exception as e:  # noqa: BLE001 - every failure becomes a reply
            log.exception("request failed")
            reply = {"ok": False, "kind": "backend", "component": "worker", "error": f"{type(e).__name__}: {e}"}
        fout.write(json.dumps(reply) + "\n")
        fout.flush()


def main():
    parser = argparse.ArgumentParser(description="matfuse diffusion worker")
    parser.add_argument("--weights", help="weights directory (see README)")
    parser.add_argument("--size", type=int, default=512)
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    parser.add_argument("--half", action="store_true", help="float16 weights on CUDA")
    parser.add_argument("--tiny-random", action="store_true", help="small random models for protocol tests")
    parser.add_argument("--clip-only", action="store_true", help="serve image embeddings only")
    args = parser.parse_args()
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(name)s: %(message)s")
    from diffusers.utils import logging as diffusers_logging
    from transformers.utils import logging as transformers_logging

    diffusers_logging.set_verbosity_error()
    transformers_logging.set_verbosity_error()

    # Keep the protocol stream clean of stray prints from libraries.
    protocol_out = os.fdopen(os.dup(sys.stdout.fileno()), "w")
    sys.stdout = sys.stderr
    dtype = torch.float16 if args.half and args.device.startswith("cuda") else torch.float32
    if not args.tiny_random and not args.weights:
        parser.error("--weights is required")
    if args.clip_only:
        from transformers import CLIPVisionModelWithProjection

        if args.tiny_random:
            encoder = build_tiny_random(32, args.device, dtype).image_encoder
        else:
            encoder = CLIPVisionModelWithProjection.from_pretrained(
                os.path.join(args.weights, "ip-adapter", "image_encoder"))
        c = encoder.config
        name = f"clip-vision-p{c.patch_size}-w{c.hidden_size}-l{c.num_hidden_layers}-proj{c.projection_dim}"
        handlers = ClipModel(encoder, name, args.device, dtype).handlers()
    elif args.tiny_random:
        handlers = denoiser_handlers(build_tiny_random(args.size, args.device, dtype))
    else:
        handlers = denoiser_handlers(load_pretrained(args.weights, args.size, args.device, dtype))
    serve(handlers, sys.stdin, protocol_out)


if __name__ == "__main__":
    main()
