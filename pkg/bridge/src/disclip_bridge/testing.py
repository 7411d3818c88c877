"""Test support: tiny randomly initialized checkpoints and an in-process server.

The tiny checkpoints exercise the full serving stack (real tokenizers,
real model graphs, the wire protocol) without downloading anything. Their
weights are random, so they prove interface conformance and determinism,
not semantics.
"""

from __future__ import annotations

import contextlib
import tempfile
from pathlib import Path

TINY_CLIP_DIM = 16
TINY_IMAGE_SIZE = 32

_cache: dict[str, str] = {}


def _byte_level_tokenizer(extra_special: list[str]):
    from tokenizers import Tokenizer, decoders, pre_tokenizers
    from tokenizers.models import BPE

    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {ch: i for i, ch in enumerate(alphabet)}
    for token in extra_special:
        vocab[token] = len(vocab)
    tok = Tokenizer(BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    return tok, vocab


def build_tiny_lm(directory: str | Path) -> str:
    """Byte-level tokenizer plus a 2-layer random causal LM."""
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    directory = str(directory)
    tok, vocab = _byte_level_tokenizer(["<|endoftext|>"])
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        eos_token="<|endoftext|>",
        bos_token="<|endoftext|>",
        unk_token="<|endoftext|>",
    )
    fast.save_pretrained(directory)
    torch.manual_seed(7)
    eot = vocab["<|endoftext|>"]
    model = GPT2LMHeadModel(
        GPT2Config(
            vocab_size=len(vocab),
            n_embd=32,
            n_layer=2,
            n_head=2,
            n_positions=256,
            bos_token_id=eot,
            eos_token_id=eot,
        )
    )
    model.save_pretrained(directory)
    return directory


def build_tiny_encoder(directory: str | Path) -> str:
    """Byte-level tokenizer plus a 2-layer random dual encoder."""
    import torch
    from tokenizers import processors
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        PreTrainedTokenizerFast,
    )

    directory = str(directory)
    tok, vocab = _byte_level_tokenizer(["<|startoftext|>", "<|endoftext|>"])
    bos, eos = vocab["<|startoftext|>"], vocab["<|endoftext|>"]
    tok.post_processor = processors.TemplateProcessing(
        single="<|startoftext|> $A <|endoftext|>",
        special_tokens=[("<|startoftext|>", bos), ("<|endoftext|>", eos)],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        eos_token="<|endoftext|>",
        bos_token="<|startoftext|>",
        unk_token="<|endoftext|>",
        pad_token="<|endoftext|>",
        model_max_length=77,
    )
    fast.save_pretrained(directory)
    torch.manual_seed(11)
    model = CLIPModel(
        CLIPConfig(
            text_config={
                "vocab_size": len(vocab),
                "hidden_size": 32,
                "intermediate_size": 64,
                "num_hidden_layers": 2,
                "num_attention_heads": 2,
                "max_position_embeddings": 77,
                "bos_token_id": bos,
                "eos_token_id": eos,
            },
            vision_config={
                "hidden_size": 32,
                "intermediate_size": 64,
                "num_hidden_layers": 2,
                "num_attention_heads": 2,
                "image_size": TINY_IMAGE_SIZE,
                "patch_size": 8,
            },
            projection_dim=TINY_CLIP_DIM,
        )
    )
    model.save_pretrained(directory)
    CLIPImageProcessor(
        size={"shortest_edge": TINY_IMAGE_SIZE},
        crop_size={"height": TINY_IMAGE_SIZE, "width": TINY_IMAGE_SIZE},
    ).save_pretrained(directory)
    return directory


def tiny_checkpoints() -> tuple[str, str]:
    """(encoder_dir, lm_dir), built once per process."""
    if not _cache:
        root = Path(tempfile.mkdtemp(prefix="disclip-bridge-tiny-"))
        _cache["encoder"] = build_tiny_encoder(root / "encoder")
        _cache["lm"] = build_tiny_lm(root / "lm")
    return _cache["encoder"], _cache["lm"]


@contextlib.contextmanager
def start_tiny_bridge():
    """In-process bridge on tiny checkpoints; yields its endpoint."""
    from disclip_bridge.models import CausalLMAdapter, EncoderAdapter
    from disclip_bridge.server import BridgeServer, RequestHandler

    encoder_dir, lm_dir = tiny_checkpoints()
    handler = RequestHandler(
        CausalLMAdapter(lm_dir), EncoderAdapter(encoder_dir)
    )
    with BridgeServer(handler) as server:
        yield server.endpoint
