"""Build the class-name embedding table used by ``affordmap split score``.

Needs the optional ``embeddings`` extra (``pip install affordmap[embeddings]``)
and network access to fetch the CLIP weights once.

    python scripts/build_clip_embeddings.py --output affordmap/resources/clip_text_embeddings.tsv
"""
import argparse
import logging
import sys

import numpy as np
import torch
from transformers import CLIPModel, CLIPTokenizer

from affordmap.splits import (
    DEFAULT_EMBEDDING_TABLE, EmbeddingTable, load_canonical_splits, lvis_classes,
    save_embedding_table,
)


logger = logging.getLogger("affordmap.scripts.build_clip_embeddings")


def class_names():
    easy, hard = load_canonical_splits()
    names = set(lvis_classes())
    for split in (easy, hard):
        names |= split.train_classes | split.test_classes
    return sorted(names)


@torch.no_grad()
def embed(names, model_name, template, batch_size=64):
    tokenizer = CLIPTokenizer.from_pretrained(model_name)
    model = CLIPModel.from_pretrained(model_name).eval()
    out = {}
    for start in range(0, len(names), batch_size):
        chunk = names[start:start + batch_size]
        batch = tokenizer([template.format(n) for n in chunk], padding=True, return_tensors="pt")
        features = model.get_text_features(**batch).double().numpy()
        for name, vec in zip(chunk, features):
            out[name] = vec / np.linalg.norm(vec)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="openai/clip-vit-base-patch32")
    parser.add_argument("--template", default="{}", help="text around each class name (default: the bare name)")
    parser.add_argument("--output", default=DEFAULT_EMBEDDING_TABLE)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)

    names = class_names()
    logger.info("Embedding %s class names with %s", len(names), args.model)
    table = EmbeddingTable(embed(names, args.model, args.template), source=f"{args.model} '{args.template}'")
    save_embedding_table(table, args.output)
    logger.info("Wrote %s", args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
