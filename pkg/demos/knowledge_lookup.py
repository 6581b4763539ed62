"""
Looking up background knowledge
===============================

Builds a BM25 index over a handful of encyclopedia abstracts, saves it,
reloads it and ranks documents for a few questions.
"""
import tempfile
from pathlib import Path

from textnmn.knowledge import (
    KbIndex, extract_query_nouns, ingest_abstracts, kb_vector_for_question, search, tokenize,
)

abstracts = Path(__file__).resolve().parent.parent / "tests" / "data" / "abstracts.tsv"

# titles that don't look like plain nouns are dropped at ingestion
docs = ingest_abstracts(abstracts)
print("kept", [d.title for d in docs])

index = KbIndex.build(docs)
path = Path(tempfile.mkdtemp()) / "kb.idx"
index.save(path)
index = KbIndex.load(path)
print("index", path.stat().st_size, "bytes,", index.n_docs, "docs, vector size", index.dim)

for q in ("What toppings are on the pizza?", "Is the giraffe eating?", "What is the man holding?"):
    tokens = tokenize(q)
    nouns = extract_query_nouns(tokens)
    hits = search(index, nouns, 3)
    print(q, "| query", nouns, "|", [(index.titles[d], round(s, 3)) for d, s in hits])
    # the averaged vector the nmn+kb model conditions on
    vec = kb_vector_for_question(tokens, index)
    print("   kb vector norm", round(float((vec ** 2).sum() ** 0.5), 3))
