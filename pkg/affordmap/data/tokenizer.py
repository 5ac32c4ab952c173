"""Whitespace and punctuation tokenizer with a small fixed vocabulary.

Text is lowercased, split into words and single punctuation characters, and
wrapped in ``<bos>`` / ``<eos>``. ``<mask_token>`` is a reserved id: ordinary
words can never map to it, only the literal marker does.
"""
from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from affordmap.basic import ValidationError
from affordmap.data.prompts import ANSWER_TEMPLATE, MASK_TOKEN, PromptVariant, build_prompt


__all__ = [
    "Vocabulary", "TextExample", "encode_example", "split_words",
    "PAD_ID", "BOS_ID", "EOS_ID", "UNK_ID", "MASK_ID", "RESERVED",
]


logger = logging.getLogger("affordmap.data.tokenizer")


RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>", MASK_TOKEN)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, MASK_ID = range(len(RESERVED))

_TOKEN_RE = re.compile(re.escape(MASK_TOKEN) + r"|[a-z0-9]+(?:['\-][a-z0-9]+)*|[^\sa-z0-9]")
_NO_SPACE_BEFORE = set(",.?!;:")


def split_words(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, words: Sequence[str]) -> None:
        words = list(words)
        if tuple(words[:len(RESERVED)]) != RESERVED:
            raise ValidationError("Vocabulary must start with the reserved tokens.")
        if len(set(words)) != len(words):
            raise ValidationError("Vocabulary contains duplicates.")
        self._words = words
        self._ids = {word: i for i, word in enumerate(words)}

    @classmethod
    def build(cls, corpus: Iterable[str], max_size: Optional[int] = None) -> "Vocabulary":
        counts: Counter = Counter()
        for text in corpus:
            counts.update(w for w in split_words(text) if w not in RESERVED)
        # Most frequent first, ties alphabetically, so builds are reproducible.
        ordered = sorted(counts, key=lambda w: (-counts[w], w))
        if max_size is not None:
            ordered = ordered[:max(0, max_size - len(RESERVED))]
        logger.debug("Built vocabulary with %s words", len(ordered))
        return cls(list(RESERVED) + ordered)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def id(self, word: str) -> int:
        return self._ids.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        return self._words[idx]

    def encode(self, text: str, add_bos: bool = True, add_eos: bool = True) -> List[int]:
        ids = [self.id(w) for w in split_words(text)]
        if add_bos:
            ids.insert(0, BOS_ID)
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def tokenize(self, text: str) -> List[int]:
        return self.encode(text)

    def detokenize(self, ids: Iterable[int]) -> str:
        """Join the words of ``ids``; ids outside the vocabulary read as ``<unk>``."""
        out: List[str] = []
        for idx in ids:
            idx = int(idx)
            if idx in (PAD_ID, BOS_ID, EOS_ID):
                continue
            word = self._words[idx] if 0 <= idx < len(self._words) else RESERVED[UNK_ID]
            if out and word not in _NO_SPACE_BEFORE:
                out.append(" ")
            out.append(word)
        return "".join(out)

    def to_dict(self) -> Dict[str, Any]:
        return {"words": list(self._words)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Vocabulary":
        return cls(data["words"])


@dataclass
class TextExample:
    """Token ids of prompt + answer, for teacher forcing.

    ``ids`` is ``<bos> prompt answer <eos>``; ``prompt_len`` counts ``<bos>``
    and the prompt. ``ignore`` marks positions of the shifted targets
    ``ids[1:]`` that do not contribute to the text loss.
    """
    ids: np.ndarray
    prompt_len: int
    mask_index: int

    @property
    def prompt_ids(self) -> np.ndarray:
        return self.ids[:self.prompt_len]

    @property
    def ignore(self) -> np.ndarray:
        positions = np.arange(len(self.ids) - 1)
        return positions < self.prompt_len - 1


def encode_example(
    object_name: str,
    action_name: str,
    variant: "PromptVariant | str",
    vocab: Vocabulary,
    answer: str = ANSWER_TEMPLATE,
) -> TextExample:
    prompt = vocab.encode(build_prompt(object_name, action_name, variant), add_bos=True, add_eos=False)
    reply = vocab.encode(answer, add_bos=False, add_eos=True)
    ids = np.array(prompt + reply, dtype=np.int64)
    hits = np.flatnonzero(ids == MASK_ID)
    if len(hits) != 1:
        raise ValidationError(f"Answer must contain exactly one {MASK_TOKEN}, found {len(hits)}.")
    return TextExample(ids, len(prompt), int(hits[0]))
