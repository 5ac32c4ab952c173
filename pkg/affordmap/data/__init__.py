from affordmap.data.sample import Sample
from affordmap.data.prompts import PromptVariant, build_prompt, ANSWER_TEMPLATE, MASK_TOKEN
from affordmap.data.tokenizer import Vocabulary, TextExample, encode_example
from affordmap.data.agd20k import load_agd20k, load_depth, load_image
from affordmap.data.synthetic import (
    SyntheticConfig, generate_synthetic, synthetic_split, render_archetype,
    CATALOG, SEEN_ARCHETYPES, HELD_OUT_ARCHETYPES,
)


__all__ = [
    "Sample", "PromptVariant", "build_prompt", "ANSWER_TEMPLATE", "MASK_TOKEN",
    "Vocabulary", "TextExample", "encode_example", "load_agd20k", "load_depth",
    "load_image", "SyntheticConfig", "generate_synthetic", "synthetic_split",
    "render_archetype", "CATALOG", "SEEN_ARCHETYPES", "HELD_OUT_ARCHETYPES",
]
