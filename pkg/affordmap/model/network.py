"""The full affordance model and greedy generation with a forced mask token."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from affordmap.basic import MaskTokenError, ShapeMismatchError, ValidationError
from affordmap.data.tokenizer import BOS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID
from affordmap.densemap import DenseMap
from affordmap.model.config import ModelConfig
from affordmap.model.decoder import MaskDecoder
from affordmap.model.encoder import ImageEncoder
from affordmap.model.language import LanguageModel
from affordmap.model.layers import FeatureTokens, MaskQuery


__all__ = ["AffordanceModel", "GenerationStats", "Generation", "to_tensor"]


logger = logging.getLogger("affordmap.model.network")


def to_tensor(array: Any, dtype: torch.dtype) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(array), dtype=dtype)


@dataclass
class GenerationStats:
    calls: int = 0
    forced: int = 0

    @property
    def forced_rate(self) -> float:
        return self.forced / self.calls if self.calls else 0.0

    def merge(self, other: "GenerationStats") -> "GenerationStats":
        return GenerationStats(self.calls + other.calls, self.forced + other.forced)

    def to_dict(self) -> Dict[str, Any]:
        return {"calls": self.calls, "forced": self.forced, "forced_rate": self.forced_rate}


@dataclass
class Generation:
    token_ids: List[int]
    affordance: DenseMap
    forced: bool
    mask_position: int


class AffordanceModel(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        # Parameters depend only on cfg.seed, not on the caller's RNG state.
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.encoder = ImageEncoder(cfg)
            self.projector = nn.Linear(cfg.encoder_dim, cfg.projection_dim)
            self.language = LanguageModel(cfg)
            self.query_proj = nn.Sequential(
                nn.Linear(cfg.lm_dim, cfg.lm_dim),
                nn.GELU(),
                nn.Linear(cfg.lm_dim, cfg.decoder_dim),
            )
            self.decoder = MaskDecoder(cfg)
        self.to(self.dtype)

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.cfg.dtype == "float64" else torch.float32

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    def _check_size(self, x: torch.Tensor, what: str) -> None:
        size = self.cfg.image_size
        if tuple(x.shape[1:3]) != (size, size):
            raise ShapeMismatchError(
                f"{what} is {tuple(x.shape[1:3])}, model expects {size}×{size}; resize before calling."
            )

    def encode_image(self, images: torch.Tensor, modality: str = "image") -> FeatureTokens:
        """Encode a (batch, H, W, 3) batch in [0, 1]."""
        if images.dim() != 4 or images.shape[-1] != 3:
            raise ShapeMismatchError(f"Images must be (batch, H, W, 3), got {tuple(images.shape)}.")
        self._check_size(images, "Image")
        tokens = self.encoder(images.to(self.dtype).permute(0, 3, 1, 2))
        grid = self.cfg.patch_grid
        return FeatureTokens(tokens, modality, (grid, grid))

    def encode_depth(self, depth: torch.Tensor) -> FeatureTokens:
        """Encode a (batch, H, W) depth batch with the image encoder's weights."""
        if not self.cfg.use_depth:
            raise ValidationError("encode_depth called on a model configured without depth.")
        if depth.dim() != 3:
            raise ShapeMismatchError(f"Depth must be (batch, H, W), got {tuple(depth.shape)}.")
        return self.encode_image(depth.unsqueeze(-1).expand(-1, -1, -1, 3), modality="depth")

    def project_and_group(self, tokens: FeatureTokens) -> FeatureTokens:
        """Project every patch token and merge each square block of neighbours.

        With the default group factor of 4, the patches at (2i, 2j), (2i, 2j+1),
        (2i+1, 2j) and (2i+1, 2j+1) become grouped token (i, j), concatenated
        in that order. Grouped tokens are laid out row-major on the coarser grid.
        """
        s = self.cfg.group_side
        if tokens.spatial_shape is None:
            raise ValidationError(f"{tokens.modality} tokens carry no spatial layout to group.")
        rows, cols = tokens.spatial_shape
        if rows % s or cols % s:
            raise ValidationError(
                f"A {rows}×{cols} token grid cannot be grouped into {s}×{s} blocks."
            )
        projected = self.projector(tokens.tokens)
        b, _, d = projected.shape
        blocks = projected.reshape(b, rows // s, s, cols // s, s, d).permute(0, 1, 3, 2, 4, 5)
        grouped = blocks.reshape(b, (rows // s) * (cols // s), s * s * d)
        return FeatureTokens(grouped, tokens.modality, (rows // s, cols // s))

    def visual_tokens(
        self, images: torch.Tensor, depth: Optional[torch.Tensor]
    ) -> Tuple[FeatureTokens, Optional[FeatureTokens]]:
        f_img = self.project_and_group(self.encode_image(images))
        f_depth = None
        if self.cfg.use_depth:
            if depth is None:
                raise ValidationError("Model is configured with depth but no depth was given.")
            f_depth = self.project_and_group(self.encode_depth(depth))
        return f_img, f_depth

    def lm_forward(
        self,
        f_img: FeatureTokens,
        f_depth: Optional[FeatureTokens],
        text_ids: torch.Tensor,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.language(f_img, f_depth, self.language.embed_text(text_ids))

    def extract_mask_query(self, hidden: torch.Tensor, text_ids: torch.Tensor) -> MaskQuery:
        """Project the hidden state at the ``<mask_token>`` input position of each row."""
        hits = text_ids == MASK_ID
        counts = hits.sum(dim=1)
        if bool((counts != 1).any()):
            bad = [int(c) for c in counts.tolist() if c != 1]
            raise MaskTokenError(
                f"Every sequence needs exactly one <mask_token>; found counts {bad}."
            )
        offset = hidden.shape[1] - text_ids.shape[1]
        positions = hits.to(torch.int64).argmax(dim=1) + offset
        rows = torch.arange(hidden.shape[0], device=hidden.device)
        vector = self.query_proj(hidden[rows, positions])
        return MaskQuery(vector, positions)

    def decode_affordance(self, f_img: FeatureTokens, q: MaskQuery) -> torch.Tensor:
        return self.decoder(f_img, q)

    def forward(
        self, images: torch.Tensor, depth: Optional[torch.Tensor], text_ids: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced pass.

        ``text_ids`` holds ``<bos> prompt answer <eos>`` (right padded);
        the language model reads ``text_ids[:, :-1]`` and its logits predict
        ``text_ids[:, 1:]``. Returns (logits, probability maps).
        """
        f_img, f_depth = self.visual_tokens(images, depth)
        inputs = text_ids[:, :-1]
        logits, hidden = self.lm_forward(f_img, f_depth, inputs)
        query = self.extract_mask_query(hidden, inputs)
        return logits, self.decode_affordance(f_img, query)

    @torch.no_grad()
    def generate(
        self,
        image: np.ndarray,
        depth: Optional[np.ndarray],
        prompt_ids: Sequence[int],
        max_new_tokens: int = 16,
        stats: Optional[GenerationStats] = None,
        vocab_size: Optional[int] = None,
    ) -> Generation:
        """Greedy decoding for one sample.

        ``<mask_token>`` is appended when the model has not emitted it within
        ``max_new_tokens`` steps, so a map is always produced. Ids at or above
        ``vocab_size`` (the tokenizer's size, at most ``cfg.vocab_size``) are
        never emitted.
        """
        if max_new_tokens < 1:
            raise ValidationError("max_new_tokens must be at least 1.")
        limit = self.cfg.vocab_size if vocab_size is None else int(vocab_size)
        if not MASK_ID < limit <= self.cfg.vocab_size:
            raise ValidationError(
                f"vocab_size {limit} must lie in ({MASK_ID}, {self.cfg.vocab_size}]."
            )
        if MASK_ID in prompt_ids:
            raise MaskTokenError("The prompt must not contain <mask_token>.")
        images = to_tensor(image[None], self.dtype).to(self.device)
        depths = None if depth is None else to_tensor(depth[None], self.dtype).to(self.device)
        if not self.cfg.use_depth:
            depths = None
        f_img, f_depth = self.visual_tokens(images, depths)

        ids = list(int(i) for i in prompt_ids)
        generated: List[int] = []
        blocked = [PAD_ID, BOS_ID, UNK_ID]
        if len(ids) + f_img.count + 1 > self.cfg.max_positions:
            raise ValidationError("Prompt leaves no room for <mask_token> within max_positions.")
        for _ in range(max_new_tokens):
            # Room for this token and a possibly forced <mask_token>.
            if len(ids) + f_img.count + 2 > self.cfg.max_positions:
                break
            text = torch.tensor([ids], device=self.device)
            logits, _ = self.lm_forward(f_img, f_depth, text)
            step = logits[0, -1].clone()
            step[blocked] = float("-inf")
            step[limit:] = float("-inf")
            token = int(step.argmax())
            if token == EOS_ID:
                break
            generated.append(token)
            ids.append(token)
            if token == MASK_ID:
                blocked.append(MASK_ID)

        forced = MASK_ID not in generated
        if forced:
            generated.append(MASK_ID)
            ids.append(MASK_ID)
        if stats is not None:
            stats.calls += 1
            stats.forced += int(forced)

        text = torch.tensor([ids], device=self.device)
        _, hidden = self.lm_forward(f_img, f_depth, text)
        query = self.extract_mask_query(hidden, text)
        prob = self.decode_affordance(f_img, query)[0]
        mask_position = len(prompt_ids) + generated.index(MASK_ID)
        logger.debug("Generated %s tokens, forced=%s", len(generated), forced)
        return Generation(
            generated, DenseMap(prob.double().cpu().numpy()), forced, mask_position
        )
