"""Knowledge engine: document ingestion and cleaning, multi-strategy chunking,
rule-based (or model-backed) enrichment, a four-way hybrid index (KV, vector,
full-text, knowledge graph) fused by Reciprocal Rank Fusion, and freshness
scanning.

Embeddings are local 128-dim hashed bag-of-words vectors so the whole pipeline
is deterministic and oracle-checkable offline.
"""

from __future__ import annotations

import json
import math
import os
import re
from collections import deque
from dataclasses import dataclass, field

from .errors import (
    EmptyAfterCleaning,
    EmptyIndex,
    ExtractionGrammarError,
    UnknownEntity,
    UnreadableSource,
)
from .llm import count_tokens

VECTOR_DIM = 128
RRF_K = 60

_CONTROL = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")
_LOG_LINE = re.compile(r"^\s*[\[\(]?\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}")
_MD_HEADING = re.compile(r"^#{1,6}\s")
_SENTENCE_BOUNDARY = re.compile(r"[.?!](?=\s)|\n")
_TOKEN = re.compile(r"[a-z0-9]+")
_CAMEL = re.compile(r"^[A-Z][a-z0-9]*(?:[A-Z][a-z0-9]*)+$")
_CAPWORD = re.compile(r"^[A-Z][a-zA-Z0-9]*$")
_WORD = re.compile(r"[A-Za-z0-9_]+")


# ---------------------------------------------------------------------------
# stage 1: parsing / cleaning


@dataclass
class RawDocument:
    doc_id: str
    source_uri: str
    media_kind: str  # plain_text | markdown | log_file
    body: str
    ingested_at: float
    metadata: dict = field(default_factory=dict)


def clean_body(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _CONTROL.sub("", text)
    lines = [line.rstrip() for line in text.split("\n")]
    out: list[str] = []
    blanks = 0
    for line in lines:
        if line == "":
            blanks += 1
        else:
            if blanks > 2:
                out.extend([""])  # collapse >2 blank lines to 1
            else:
                out.extend([""] * blanks)
            blanks = 0
            out.append(line)
    if blanks:
        out.extend([""] if blanks > 2 else [""] * blanks)
    return "\n".join(out).strip("\n")


def detect_media_kind(body: str) -> str:
    lines = body.split("\n")
    if any(_MD_HEADING.match(line) for line in lines) or "```" in body:
        return "markdown"
    nonempty = [line for line in lines if line.strip()]
    if nonempty:
        stamped = sum(1 for line in nonempty if _LOG_LINE.match(line))
        if stamped / len(nonempty) >= 0.5:
            return "log_file"
    return "plain_text"


def ingest_text(
    doc_id: str,
    text: str,
    source_uri: str = "",
    ingested_at: float = 0.0,
    metadata: dict | None = None,
) -> RawDocument:
    body = clean_body(text)
    if not body:
        raise EmptyAfterCleaning(f"document {doc_id!r} is empty after cleaning")
    return RawDocument(
        doc_id=doc_id,
        source_uri=source_uri or doc_id,
        media_kind=detect_media_kind(body),
        body=body,
        ingested_at=ingested_at,
        metadata=dict(metadata or {}),
    )


def ingest(source: str | os.PathLike, ingested_at: float = 0.0) -> RawDocument:
    """Ingest a file; a sidecar <name>.meta.json may carry ttl and glossary."""
    path = os.fspath(source)
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            text = fh.read()
    except OSError as exc:
        raise UnreadableSource(f"{path}: {exc}") from exc
    metadata: dict = {}
    sidecar = path + ".meta.json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            metadata = json.load(fh)
    doc_id = os.path.splitext(os.path.basename(path))[0]
    return ingest_text(doc_id, text, source_uri=path, ingested_at=ingested_at, metadata=metadata)


# ---------------------------------------------------------------------------
# stage 2: chunking


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    strategy: str  # semantic | structural | sentence
    span: tuple[int, int]
    token_count: int
    overlap_sentences: int = 0  # leading sentences shared with the previous chunk


def _sentence_spans(body: str) -> list[tuple[int, int]]:
    """Trimmed (start, end) spans of sentences; gaps are whitespace-only."""
    boundaries = [m.end() for m in _SENTENCE_BOUNDARY.finditer(body)]
    if not boundaries or boundaries[-1] < len(body):
        boundaries.append(len(body))
    spans = []
    start = 0
    for boundary in boundaries:
        raw = body[start:boundary]
        stripped = raw.strip()
        if stripped:
            lead = len(raw) - len(raw.lstrip())
            spans.append((start + lead, start + lead + len(stripped)))
        start = boundary
    return spans


def _structural_spans(body: str) -> list[tuple[int, int]]:
    """Block spans split at headings and code-fence boundaries; a fence is one
    indivisible block."""
    lines = body.split("\n")
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line) + 1
    blocks: list[tuple[int, int]] = []
    current_start: int | None = None
    in_fence = False
    for i, line in enumerate(lines):
        stripped = line.strip()
        starts_fence = stripped.startswith("```")
        if in_fence:
            if starts_fence:
                in_fence = False
                blocks.append((current_start, offsets[i] + len(line)))
                current_start = None
            continue
        if starts_fence:
            if current_start is not None:
                blocks.append((current_start, offsets[i] - 1))
            current_start = offsets[i]
            in_fence = True
            continue
        if _MD_HEADING.match(line):
            if current_start is not None:
                blocks.append((current_start, offsets[i] - 1))
            current_start = offsets[i]
            continue
        if current_start is None and stripped:
            current_start = offsets[i]
    if current_start is not None:
        blocks.append((current_start, len(body)))
    # trim whitespace at block edges
    trimmed = []
    for start, end in blocks:
        raw = body[start:end]
        stripped = raw.strip()
        if not stripped:
            continue
        lead = len(raw) - len(raw.lstrip())
        trimmed.append((start + lead, start + lead + len(stripped)))
    return trimmed


def chunk(
    document: RawDocument,
    strategy: str = "semantic",
    max_tokens: int = 256,
    overlap_sentences: int = 1,
) -> list[Chunk]:
    body = document.body
    if strategy == "sentence":
        spans = _sentence_spans(body)
        return _spans_to_chunks(document, spans, "sentence")
    if strategy == "structural":
        spans = _structural_spans(body)
        if not spans:
            spans = [(0, len(body))]
        return _spans_to_chunks(document, spans, "structural")
    if strategy == "semantic":
        return _semantic_chunks(document, max_tokens, overlap_sentences)
    raise ValueError(f"unknown chunking strategy {strategy!r}")


def _spans_to_chunks(document: RawDocument, spans, strategy: str) -> list[Chunk]:
    chunks = []
    for i, (start, end) in enumerate(spans):
        text = document.body[start:end]
        chunks.append(
            Chunk(
                chunk_id=f"{document.doc_id}:{strategy}:{i}",
                doc_id=document.doc_id,
                text=text,
                strategy=strategy,
                span=(start, end),
                token_count=count_tokens(text),
            )
        )
    if not chunks:
        text = document.body
        chunks.append(Chunk(f"{document.doc_id}:{strategy}:0", document.doc_id, text,
                            strategy, (0, len(text)), count_tokens(text)))
    return chunks


def _semantic_chunks(document: RawDocument, max_tokens: int, overlap: int) -> list[Chunk]:
    """Greedy merge of consecutive sentences up to max_tokens; each chunk
    carries `overlap` trailing sentences of its predecessor, tracked as an
    annotation and excluded from the coverage invariant."""
    sentence_spans = _sentence_spans(document.body)
    if not sentence_spans:
        return _spans_to_chunks(document, [(0, len(document.body))], "semantic")
    groups: list[tuple[int, int]] = []  # sentence index ranges [i, j)
    i = 0
    while i < len(sentence_spans):
        j = i
        tokens = 0
        while j < len(sentence_spans):
            start, end = sentence_spans[j]
            t = count_tokens(document.body[start:end])
            if j > i and tokens + t > max_tokens:
                break
            tokens += t
            j += 1
        groups.append((i, j))
        i = j
    chunks = []
    for idx, (gi, gj) in enumerate(groups):
        lead = min(overlap, gi) if idx > 0 else 0
        first = gi - lead
        start = sentence_spans[first][0]
        end = sentence_spans[gj - 1][1]
        text = document.body[start:end]
        chunks.append(
            Chunk(
                chunk_id=f"{document.doc_id}:semantic:{idx}",
                doc_id=document.doc_id,
                text=text,
                strategy="semantic",
                span=(start, end),
                token_count=count_tokens(text),
                overlap_sentences=lead,
            )
        )
    return chunks


def coverage_gaps(body: str, chunks: list[Chunk]) -> list[str]:
    """Verify chunk spans are disjoint (modulo declared overlaps) and that the
    non-covered remainder is whitespace only. Returns a list of violations."""
    problems = []
    core_spans = []
    for c in chunks:
        start, end = c.span
        if c.overlap_sentences:
            # skip the leading overlap region: core begins where the previous
            # chunk's span ended
            core_spans.append((start, end, True))
        else:
            core_spans.append((start, end, False))
    prev_end = 0
    for start, end, has_overlap in core_spans:
        core_start = max(start, prev_end) if has_overlap else start
        if core_start < prev_end:
            problems.append(f"span ({start},{end}) overlaps previous end {prev_end}")
        gap = body[prev_end:core_start]
        if gap.strip():
            problems.append(f"non-whitespace gap before offset {core_start}: {gap[:40]!r}")
        prev_end = max(prev_end, end)
    tail = body[prev_end:]
    if tail.strip():
        problems.append(f"uncovered tail: {tail[:40]!r}")
    return problems


# ---------------------------------------------------------------------------
# stage 3: enrichment


@dataclass
class EnrichedChunk:
    chunk: Chunk
    faq_pairs: list[tuple[str, str]] = field(default_factory=list)
    entities: list[tuple[str, str]] = field(default_factory=list)  # (surface, type)
    relations: list[tuple[str, str, str]] = field(default_factory=list)

    def __post_init__(self):
        surfaces = {s for s, _ in self.entities}
        for subj, _pred, obj in self.relations:
            if subj not in surfaces or obj not in surfaces:
                raise ValueError("relation endpoints must appear in entities")


def _extract_entities(text: str, glossary: tuple[str, ...]) -> list[str]:
    found: list[str] = []
    seen: set[str] = set()
    words = _WORD.findall(text)
    i = 0
    while i < len(words):
        word = words[i]
        if _CAMEL.match(word):
            if word not in seen:
                seen.add(word)
                found.append(word)
            i += 1
            continue
        if _CAPWORD.match(word) and i + 1 < len(words) and _CAPWORD.match(words[i + 1]):
            j = i
            while j < len(words) and _CAPWORD.match(words[j]):
                j += 1
            phrase = " ".join(words[i:j])
            if phrase not in seen:
                seen.add(phrase)
                found.append(phrase)
            i = j
            continue
        i += 1
    for term in glossary:
        if term and term.lower() in text.lower() and term not in seen:
            seen.add(term)
            found.append(term)
    return found


def _sentence_texts(text: str) -> list[str]:
    parts = re.split(r"(?<=[.?!])\s+|\n+", text)
    return [p.strip() for p in parts if p.strip()]


def enrich(
    chunks: list[Chunk],
    provider=None,
    glossary: tuple[str, ...] = (),
) -> list[EnrichedChunk]:
    """Stage-3 enrichment: entities, co-occurrence relations, FAQ pairs.

    Fallback path tags CamelCase / capitalized phrases plus glossary hits and
    links entities co-occurring within a sentence.
    """
    if not chunks:
        raise ValueError("enrich needs at least one chunk")
    enriched = []
    for c in chunks:
        if provider is not None:
            enriched.append(_enrich_with_provider(c, provider))
            continue
        glossary_lower = {g.lower() for g in glossary}
        entities = _extract_entities(c.text, glossary)
        typed = [
            (e, "glossary" if e.lower() in glossary_lower else "named")
            for e in entities
        ]
        relations = []
        seen_rel = set()
        for sentence in _sentence_texts(c.text):
            present = [e for e in entities if e in sentence]
            for a_idx in range(len(present)):
                for b_idx in range(a_idx + 1, len(present)):
                    rel = (present[a_idx], "co_occurs_with", present[b_idx])
                    if rel not in seen_rel:
                        seen_rel.add(rel)
                        relations.append(rel)
        enriched.append(EnrichedChunk(chunk=c, entities=typed, relations=relations))
    return enriched


def _enrich_with_provider(c: Chunk, provider) -> EnrichedChunk:
    for attempt in range(2):
        raw = provider(c.text, repair=attempt > 0)
        try:
            obj = json.loads(raw)
            return EnrichedChunk(
                chunk=c,
                faq_pairs=[(q, a) for q, a in obj.get("faq_pairs", [])],
                entities=[(s, t) for s, t in obj.get("entities", [])],
                relations=[(s, p, o) for s, p, o in obj.get("relations", [])],
            )
        except (json.JSONDecodeError, ValueError, TypeError):
            continue
    raise ExtractionGrammarError(f"extraction output for {c.chunk_id} failed the grammar twice")


# ---------------------------------------------------------------------------
# stage 4: hybrid index


def fnv1a_64(data: str) -> int:
    h = 0xCBF29CE484222325
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def embed(text: str) -> list[float]:
    """128-dim hashed bag-of-words embedding, L2-normalized (zero vector for
    empty text)."""
    vec = [0.0] * VECTOR_DIM
    for token in tokenize(text):
        vec[fnv1a_64(token) % VECTOR_DIM] += 1.0
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        return vec
    return [v / norm for v in vec]


def cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


class HybridIndex:
    """KV + vector + full-text + knowledge-graph indexes over enriched chunks."""

    def __init__(self):
        self.kv: dict[str, set[str]] = {}
        self.vector: dict[str, list[float]] = {}
        self.fulltext: dict[str, dict[str, int]] = {}
        self.kg_edges: dict[tuple[str, str, str], set[str]] = {}
        self.doc_freshness: dict[str, tuple[float, float]] = {}  # (ingested_at, ttl_s)
        self.chunks: dict[str, EnrichedChunk] = {}
        self.doc_chunks: dict[str, set[str]] = {}

    # -- maintenance --

    def _remove_doc(self, doc_id: str) -> None:
        for chunk_id in self.doc_chunks.pop(doc_id, set()):
            self.chunks.pop(chunk_id, None)
            self.vector.pop(chunk_id, None)
            for key in list(self.kv):
                self.kv[key].discard(chunk_id)
                if not self.kv[key]:
                    del self.kv[key]
            for term in list(self.fulltext):
                self.fulltext[term].pop(chunk_id, None)
                if not self.fulltext[term]:
                    del self.fulltext[term]
            for edge in list(self.kg_edges):
                self.kg_edges[edge].discard(chunk_id)
                if not self.kg_edges[edge]:
                    del self.kg_edges[edge]
        self.doc_freshness.pop(doc_id, None)

    def kg_nodes(self) -> set[str]:
        nodes = set()
        for subj, _pred, obj in self.kg_edges:
            nodes.add(subj)
            nodes.add(obj)
        return nodes

    def to_dict(self) -> dict:
        """Versioned canonical dump (golden-test format, not a fast format)."""
        return {
            "version": 1,
            "kv": {k: sorted(v) for k, v in sorted(self.kv.items())},
            "vector": {
                cid: [round(x, 12) for x in vec]
                for cid, vec in sorted(self.vector.items())
            },
            "fulltext": {
                term: dict(sorted(postings.items()))
                for term, postings in sorted(self.fulltext.items())
            },
            "kg": [
                {"subject": s, "predicate": p, "object": o, "provenance": sorted(prov)}
                for (s, p, o), prov in sorted(self.kg_edges.items())
            ],
            "doc_freshness": {
                d: {"ingested_at": at, "ttl": ttl}
                for d, (at, ttl) in sorted(self.doc_freshness.items())
            },
        }


def index_upsert(
    index: HybridIndex,
    enriched: list[EnrichedChunk],
    documents: dict[str, RawDocument] | None = None,
) -> HybridIndex:
    """Insert (or replace) all chunks of the documents present in `enriched`.

    Re-upserting a doc_id first removes every prior posting it contributed, so
    incremental upsert is structurally identical to a from-scratch build.
    """
    if not enriched:
        return index
    doc_ids = {e.chunk.doc_id for e in enriched}
    for doc_id in doc_ids:
        index._remove_doc(doc_id)
    for e in enriched:
        cid = e.chunk.chunk_id
        index.chunks[cid] = e
        index.doc_chunks.setdefault(e.chunk.doc_id, set()).add(cid)
        index.kv.setdefault(e.chunk.doc_id, set()).add(cid)
        for surface, _type in e.entities:
            index.kv.setdefault(surface, set()).add(cid)
        index.vector[cid] = embed(e.chunk.text)
        for term in tokenize(e.chunk.text):
            postings = index.fulltext.setdefault(term, {})
            postings[cid] = postings.get(cid, 0) + 1
        for subj, pred, obj in e.relations:
            index.kg_edges.setdefault((subj, pred, obj), set()).add(cid)
    if documents:
        for doc_id in doc_ids:
            doc = documents.get(doc_id)
            if doc is not None:
                ttl_hours = float(doc.metadata.get("ttl_hours", 24.0))
                index.doc_freshness[doc_id] = (doc.ingested_at, ttl_hours * 3600.0)
    return index


# ---------------------------------------------------------------------------
# retrieval


@dataclass
class RetrievalResult:
    ranked: list[tuple[str, float, dict[str, int]]]  # (chunk_id, fused, per-index ranks)
    k: int


def _vector_ranking(index: HybridIndex, query: str) -> dict[str, int]:
    qvec = embed(query)
    scored = sorted(
        ((cosine(qvec, vec), cid) for cid, vec in index.vector.items()),
        key=lambda t: (-t[0], t[1]),
    )
    return {cid: rank for rank, (_s, cid) in enumerate(scored, start=1)}


def _fulltext_ranking(index: HybridIndex, query: str) -> dict[str, int]:
    terms = tokenize(query)
    scores: dict[str, int] = {}
    for term in terms:
        for cid, tf in index.fulltext.get(term, {}).items():
            scores[cid] = scores.get(cid, 0) + tf
    ordered = sorted(scores.items(), key=lambda t: (-t[1], t[0]))
    return {cid: rank for rank, (cid, _s) in enumerate(ordered, start=1)}


def _kv_ranking(index: HybridIndex, query: str) -> dict[str, int]:
    hits = index.kv.get(query, set())
    return {cid: 1 for cid in hits}


def retrieve(index: HybridIndex, query: str, k: int) -> RetrievalResult:
    """Fused retrieval: per-index rankings combined by RRF with K=60.

    fused(c) = sum over sub-indexes ranking c of 1 / (60 + rank_c).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.chunks:
        raise EmptyIndex("index holds no chunks")
    rankings = {
        "kv": _kv_ranking(index, query),
        "vector": _vector_ranking(index, query),
        "fulltext": _fulltext_ranking(index, query),
    }
    fused: dict[str, float] = {}
    per_index: dict[str, dict[str, int]] = {}
    for name, ranking in rankings.items():
        for cid, rank in ranking.items():
            fused[cid] = fused.get(cid, 0.0) + 1.0 / (RRF_K + rank)
            per_index.setdefault(cid, {})[name] = rank
    ordered = sorted(fused.items(), key=lambda t: (-t[1], t[0]))
    ranked = [(cid, score, per_index[cid]) for cid, score in ordered[:k]]
    return RetrievalResult(ranked=ranked, k=k)


def kg_neighbors(index: HybridIndex, entity: str, depth: int) -> dict[str, tuple[int, set[str]]]:
    """Directed BFS closure up to `depth`; each reached entity is tagged with
    its minimal hop count and the provenance chunks of the edge that first
    reached it."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if entity not in index.kg_nodes():
        raise UnknownEntity(f"unknown entity {entity!r}")
    adjacency: dict[str, list[tuple[str, set[str]]]] = {}
    for (subj, _pred, obj), prov in index.kg_edges.items():
        adjacency.setdefault(subj, []).append((obj, prov))
    out: dict[str, tuple[int, set[str]]] = {}
    queue = deque([(entity, 0)])
    seen = {entity}
    while queue:
        node, hops = queue.popleft()
        if hops >= depth:
            continue
        for neighbor, prov in sorted(adjacency.get(node, []), key=lambda t: t[0]):
            if neighbor in seen:
                continue
            seen.add(neighbor)
            out[neighbor] = (hops + 1, set(prov))
            queue.append((neighbor, hops + 1))
    return out


# ---------------------------------------------------------------------------
# stage 5: freshness


def refresh_scan(index: HybridIndex, now: float) -> list[str]:
    """Doc ids whose age exceeds their ttl; re-ingesting + upserting clears
    staleness."""
    stale = [
        doc_id
        for doc_id, (ingested_at, ttl) in index.doc_freshness.items()
        if now - ingested_at > ttl
    ]
    return sorted(stale)


# ---------------------------------------------------------------------------
# corpus convenience


def load_corpus(directory: str | os.PathLike, ingested_at: float = 0.0) -> list[RawDocument]:
    docs = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".meta.json"):
            continue
        path = os.path.join(directory, name)
        if os.path.isfile(path):
            docs.append(ingest(path, ingested_at=ingested_at))
    return docs


def build_index(
    documents: list[RawDocument],
    strategy: str = "semantic",
    provider=None,
) -> HybridIndex:
    index = HybridIndex()
    doc_map = {d.doc_id: d for d in documents}
    for doc in documents:
        glossary = tuple(doc.metadata.get("glossary", []))
        chunks = chunk(doc, strategy=strategy)
        enriched = enrich(chunks, provider=provider, glossary=glossary)
        index_upsert(index, enriched, documents=doc_map)
    return index
