#!/usr/bin/env python3
"""Regenerates runs/*/trigram.run: character-trigram cosine similarity
between each claim and every labeled claim or corpus passage.

Usage: python3 make_trigram_runs.py  (from this directory)
"""

import json
import math
import re
from collections import Counter

DEPTH = 50


def trigrams(text):
    norm = " " + re.sub(r"[^0-9a-z]+", " ", text.lower()).strip() + " "
    return Counter(norm[i : i + 3] for i in range(len(norm) - 2))


def cosine(a, b):
    dot = sum(v * b[k] for k, v in a.items() if k in b)
    if dot == 0:
        return 0.0
    return dot / math.sqrt(sum(v * v for v in a.values()) * sum(v * v for v in b.values()))


def load(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_run(path, tag, claims, docs):
    with open(path, "w") as out:
        for claim in claims:
            q = trigrams(claim["text"])
            scored = [(cosine(q, vec), doc_id) for doc_id, vec in docs]
            scored = [s for s in scored if s[0] > 0]
            scored.sort(key=lambda s: (-s[0], s[1]))
            for rank, (score, doc_id) in enumerate(scored[:DEPTH], start=1):
                out.write(f"{claim['id']} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def main():
    claims = load("claims.jsonl")
    labeled = [(r["id"], trigrams(r["claim"])) for r in load("labeled.jsonl")]
    corpus = [(r["id"], trigrams(r.get("title", "") + " " + r["text"])) for r in load("corpus.jsonl")]
    write_run("runs/labeled/trigram.run", "labeled:trigram", claims, labeled)
    write_run("runs/unlabeled/trigram.run", "unlabeled:trigram", claims, corpus)


if __name__ == "__main__":
    main()
