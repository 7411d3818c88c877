"""Adapters wrapping pretrained checkpoints behind the protocol ops.

The encoder expects images already resized to its native square input by
the caller; only the checkpoint's channel normalization is applied here,
so there is no hidden second resize. Both adapters run in eval mode under
no_grad and are deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer, CLIPModel

# Channel statistics of the standard contrastive image-text checkpoints,
# used when the checkpoint ships no image-processor config.
DEFAULT_IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
DEFAULT_IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)


def _features(output) -> torch.Tensor:
    # transformers >= 5 returns an output object; older versions a tensor
    if isinstance(output, torch.Tensor):
        return output
    return output.pooler_output


class EncoderAdapter:
    """Text/image encoder into the shared embedding space."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.device = torch.device(device)
        self.model = CLIPModel.from_pretrained(checkpoint).to(self.device).eval()
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.dim = int(self.model.config.projection_dim)
        self.image_size = int(self.model.config.vision_config.image_size)
        mean, std = DEFAULT_IMAGE_MEAN, DEFAULT_IMAGE_STD
        try:
            from transformers import CLIPImageProcessor

            proc = CLIPImageProcessor.from_pretrained(checkpoint)
            mean, std = tuple(proc.image_mean), tuple(proc.image_std)
        except (OSError, ValueError):
            pass
        self._mean = torch.tensor(mean, dtype=torch.float32).view(3, 1, 1)
        self._std = torch.tensor(std, dtype=torch.float32).view(3, 1, 1)

    def encode_text(self, text: str) -> list[float]:
        inputs = self.tokenizer(
            text, return_tensors="pt", truncation=True,
            max_length=self.tokenizer.model_max_length,
        ).to(self.device)
        with torch.no_grad():
            features = _features(self.model.get_text_features(**inputs))
        return features[0].detach().cpu().double().tolist()

    def encode_image(self, width: int, height: int, rgb: bytes) -> list[float]:
        if width != self.image_size or height != self.image_size:
            raise ValueError(
                f"encoder expects a {self.image_size}x{self.image_size} image "
                f"(caller resizes), got {width}x{height}"
            )
        arr = np.frombuffer(rgb, dtype=np.uint8).reshape(height, width, 3)
        tensor = torch.from_numpy(arr.copy()).permute(2, 0, 1).float() / 255.0
        tensor = (tensor - self._mean) / self._std
        with torch.no_grad():
            features = _features(
                self.model.get_image_features(pixel_values=tensor.unsqueeze(0).to(self.device))
            )
        return features[0].detach().cpu().double().tolist()


class CausalLMAdapter:
    """Next-token distribution plus candidate-position hidden states."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.device = torch.device(device)
        self.model = AutoModelForCausalLM.from_pretrained(checkpoint).to(self.device).eval()
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        if self.tokenizer.eos_token_id is None:
            raise ValueError(f"checkpoint {checkpoint!r} has no end-of-text token")
        self.eot_token = int(self.tokenizer.eos_token_id)
        self.vocab_size = int(self.model.config.vocab_size)

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self.tokenizer.encode(text, add_special_tokens=False)]

    def detokenize(self, tokens: list[int]) -> str:
        return self.tokenizer.decode(tokens, skip_special_tokens=False)

    def top_k(self, context: list[int], k: int) -> list[dict]:
        """Top-k next tokens with post-softmax probabilities and hiddens.

        Candidates are sorted by probability descending, ties by token id
        ascending. Each candidate's hidden state is the last layer at the
        candidate's own position, from a forward pass over context + token.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        ids = list(context) if context else [self.eot_token]
        input_ids = torch.tensor([ids], dtype=torch.long, device=self.device)
        with torch.no_grad():
            logits = self.model(input_ids=input_ids).logits[0, -1, :]
            probs = torch.softmax(logits.double(), dim=-1).cpu().numpy()
        k = min(k, self.vocab_size)
        order = np.lexsort((np.arange(len(probs)), -probs))[:k]

        batch = torch.tensor(
            [ids + [int(token)] for token in order], dtype=torch.long, device=self.device
        )
        with torch.no_grad():
            hiddens = self.model(input_ids=batch, output_hidden_states=True).hidden_states[-1]
        out = []
        for row, token in enumerate(order):
            out.append(
                {
                    "token": int(token),
                    "p": float(probs[token]),
                    "hidden": hiddens[row, -1, :].detach().cpu().double().tolist(),
                }
            )
        return out
