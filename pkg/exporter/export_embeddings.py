#!/usr/bin/env python3
"""One-shot embedding export: dataset JSONL in, binary vector store out.

Reads a dataset of pre-segmented documents, embeds every sentence with a
pretrained sentence-embedding model, and writes the flat binary store
the summarization toolkit consumes:

    magic b"CISE" | version u16 | dim u32 | model_id (u32 len + UTF-8)
    then per record: doc_id (u32 len + UTF-8) | sentence_index u32 | dim*f32

All integers and floats are little-endian; vectors are L2-normalized
float32. This tool is intentionally self-contained (stdlib + numpy, the
model library loaded lazily) and talks to the consumer only through the
two file formats above.

Models:
  - any sentence-transformers checkpoint name; the default is a small
    multilingual model so non-English datasets embed sensibly;
  - "hashing-v1": a deterministic token-hashing encoder for offline use
    (CI, smoke tests); pick the width with --dim.

Usage:
    python3 export_embeddings.py --dataset docs.jsonl --out vectors.bin
    python3 export_embeddings.py --dataset docs.jsonl --out vectors.bin \\
        --model hashing-v1 --dim 256
"""

import argparse
import hashlib
import json
import os
import struct
import sys

import numpy as np

MAGIC = b"CISE"
VERSION = 1
DEFAULT_MODEL = "sentence-transformers/paraphrase-multilingual-MiniLM-L12-v2"
HASHING_MODEL = "hashing-v1"


def read_dataset(path):
    """Minimal JSONL reader: every row needs an id and sentence list."""
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                doc_id, sentences = row["id"], row["sentences"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SystemExit(f"error: {path}:{lineno}: bad record: {exc}")
            if not isinstance(sentences, list) or not sentences:
                raise SystemExit(f"error: {path}:{lineno}: empty sentence list")
            docs.append((str(doc_id), [str(s) for s in sentences]))
    if not docs:
        raise SystemExit(f"error: {path}: dataset is empty")
    return docs


class HashingEncoder:
    """Deterministic stand-in encoder: md5-bucketed token counts.

    Not a semantic model; exists so exports can run (and be verified)
    with no model weights available. Identical sentences always map to
    identical vectors.
    """

    def __init__(self, dim):
        if dim < 8:
            raise SystemExit("error: hashing encoder needs --dim >= 8")
        self.dim = dim
        self.model_id = f"{HASHING_MODEL}:{dim}"

    def encode(self, sentences):
        out = np.zeros((len(sentences), self.dim), dtype=np.float32)
        for row, sentence in enumerate(sentences):
            tokens = sentence.lower().split()
            if not tokens:
                out[row, 0] = 1.0
                continue
            for tok in tokens:
                digest = hashlib.md5(tok.encode("utf-8")).digest()
                out[row, int.from_bytes(digest[:4], "little") % self.dim] += 1.0
        return out


class SentenceTransformerEncoder:
    def __init__(self, name):
        try:
            import sentence_transformers
        except ImportError as exc:
            raise SystemExit(
                f"error: sentence-transformers is not installed ({exc}); "
                f"install it or use --model {HASHING_MODEL}"
            )
        try:
            self.model = sentence_transformers.SentenceTransformer(name)
        except Exception as exc:
            raise SystemExit(f"error: could not load model {name!r}: {exc}")
        self.model.eval()
        self.model_id = f"{name}@sentence-transformers-{sentence_transformers.__version__}"
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def encode(self, sentences):
        vectors = self.model.encode(
            list(sentences),
            convert_to_numpy=True,
            normalize_embeddings=False,  # normalization happens once, below
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def normalize_rows(matrix):
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return (matrix / norms).astype(np.float32)


def write_store(path, dim, model_id, records):
    """records: iterable of (doc_id, sentence_index, float32 vector)."""
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", dim))
        encoded_model = model_id.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded_model)))
        fh.write(encoded_model)
        for doc_id, index, vector in records:
            encoded_id = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded_id)))
            fh.write(encoded_id)
            fh.write(struct.pack("<I", index))
            fh.write(vector.astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True, help="dataset JSONL")
    parser.add_argument("--out", required=True, help="output store path")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"model name, or {HASHING_MODEL} for the offline encoder")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--dim", type=int, default=384,
                        help=f"vector width for {HASHING_MODEL} (ignored otherwise)")
    args = parser.parse_args(argv)
    if args.batch_size < 1:
        raise SystemExit("error: --batch-size must be >= 1")

    docs = read_dataset(args.dataset)
    if args.model == HASHING_MODEL:
        encoder = HashingEncoder(args.dim)
    else:
        encoder = SentenceTransformerEncoder(args.model)

    keyed = [
        (doc_id, index, sentence)
        for doc_id, sentences in docs
        for index, sentence in enumerate(sentences)
    ]
    records = []
    for start in range(0, len(keyed), args.batch_size):
        batch = keyed[start : start + args.batch_size]
        matrix = normalize_rows(encoder.encode([s for _, _, s in batch]))
        records.extend(
            (doc_id, index, matrix[row])
            for row, (doc_id, index, _) in enumerate(batch)
        )

    dim = records[0][2].shape[0]
    try:
        write_store(args.out, dim, encoder.model_id, records)
    except OSError as exc:
        raise SystemExit(f"error: could not write {args.out!r}: {exc}")
    print(
        f"wrote {len(records)} vectors (dim {dim}, model {encoder.model_id}) "
        f"for {len(docs)} documents to {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
