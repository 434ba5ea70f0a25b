"""MinHash/LSH near-duplicate removal, one partition at a time.

Web documents are compared only within their (snapshot, language)
partition. An exact-duplicate fast path (full-text hash) runs before
MinHash so byte-identical copies never depend on estimator noise.
Detection parameters default to 5-word shingles with 112 permutations
banded 14x8 and a verification threshold of 0.75.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_SHINGLE_K = 5
DEFAULT_NUM_PERM = 112
DEFAULT_BANDS = 14
DEFAULT_ROWS = 8
DEFAULT_VERIFY_THRESHOLD = 0.75

_U64 = np.uint64


def _fingerprint(data: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest(), "big")


@dataclass(frozen=True)
class ShingleSet:
    k: int
    hashes: frozenset
    exempt: bool = False  # too few words to form a single shingle


def shingle(text: str, k: int = DEFAULT_SHINGLE_K) -> ShingleSet:
    """Hashes of all k-word windows after lowercasing and space collapsing."""
    if k < 1:
        raise ValueError("shingle width must be at least 1")
    words = text.lower().split()
    if len(words) < k:
        return ShingleSet(k, frozenset(), exempt=True)
    hashes = frozenset(
        _fingerprint(" ".join(words[i:i + k]))
        for i in range(len(words) - k + 1))
    return ShingleSet(k, hashes)


@dataclass(frozen=True)
class MinHashSignature:
    num_perm: int
    values: tuple
    seed: int

    def __post_init__(self):
        if len(self.values) != self.num_perm:
            raise ValueError("signature length mismatch")


def _permutation_params(num_perm: int, seed: int):
    rng = np.random.default_rng(seed)
    info = np.iinfo(np.uint64)
    a = rng.integers(0, info.max, size=num_perm, dtype=_U64) | _U64(1)
    b = rng.integers(0, info.max, size=num_perm, dtype=_U64)
    return a, b


def minhash(shingles, num_perm: int = DEFAULT_NUM_PERM,
            seed: int = 0) -> MinHashSignature:
    """Per-permutation minimum of (a*x + b) mod 2^64 over the shingle set."""
    hashes = getattr(shingles, "hashes", shingles)
    if not hashes:
        raise ValueError("cannot sign an empty shingle set")
    a, b = _permutation_params(num_perm, seed)
    x = np.fromiter((h for h in hashes), dtype=_U64, count=len(hashes))
    with np.errstate(over="ignore"):
        table = a[:, None] * x[None, :] + b[:, None]
    values = table.min(axis=1)
    return MinHashSignature(num_perm, tuple(int(v) for v in values), seed)


def estimate_jaccard(s1: MinHashSignature, s2: MinHashSignature) -> float:
    if s1.num_perm != s2.num_perm or s1.seed != s2.seed:
        raise ValueError("signatures are not comparable")
    agree = sum(1 for x, y in zip(s1.values, s2.values) if x == y)
    return agree / s1.num_perm


class LshIndex:
    """Band buckets over signatures; b*r must equal num_perm exactly."""

    def __init__(self, bands: int, rows: int, num_perm: int):
        if bands * rows != num_perm:
            raise ValueError("bands*rows must equal num_perm: %d*%d != %d"
                             % (bands, rows, num_perm))
        self.bands = bands
        self.rows = rows
        self.num_perm = num_perm
        self.buckets = {}

    def _band_keys(self, sig: MinHashSignature):
        for band in range(self.bands):
            chunk = sig.values[band * self.rows:(band + 1) * self.rows]
            digest = hashlib.blake2b(
                np.asarray(chunk, dtype=_U64).tobytes(),
                digest_size=8).digest()
            yield (band, digest)

    def add(self, doc_id, sig: MinHashSignature) -> None:
        if sig.num_perm != self.num_perm:
            raise ValueError("signature has %d values, index expects %d"
                             % (sig.num_perm, self.num_perm))
        for key in self._band_keys(sig):
            self.buckets.setdefault(key, []).append(doc_id)

    def candidate_pairs(self) -> set:
        pairs = set()
        for members in self.buckets.values():
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    a, b = members[i], members[j]
                    pairs.add((a, b) if a <= b else (b, a))
        return pairs


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def find_duplicates(signatures: Sequence[Tuple[object, MinHashSignature]],
                    bands: int = DEFAULT_BANDS, rows: int = DEFAULT_ROWS,
                    threshold: float = DEFAULT_VERIFY_THRESHOLD) -> list:
    """Clusters of ids whose verified signature agreement meets the threshold.

    Returns one list per cluster (singletons included), ordered by first
    appearance in the input; candidate pairs come from LSH bands and are
    verified by the estimator before linking.
    """
    order = {}
    index = None
    sigs = {}
    for doc_id, sig in signatures:
        if doc_id in order:
            raise ValueError("duplicate document id %r" % (doc_id,))
        if index is None:
            index = LshIndex(bands, rows, sig.num_perm)
        order[doc_id] = len(order)
        sigs[doc_id] = sig
        index.add(doc_id, sig)
    if index is None:
        return []
    uf = _UnionFind()
    for doc_id in order:
        uf.find(doc_id)
    for a, b in index.candidate_pairs():
        if estimate_jaccard(sigs[a], sigs[b]) >= threshold:
            uf.union(a, b)
    clusters = {}
    for doc_id in order:
        clusters.setdefault(uf.find(doc_id), []).append(doc_id)
    grouped = sorted(clusters.values(), key=lambda ids: order[ids[0]])
    for ids in grouped:
        ids.sort(key=lambda d: order[d])
    return grouped


@dataclass(frozen=True)
class DropRecord:
    partition: tuple
    kept_id: str
    dropped_id: str
    similarity: float


def default_partition_key(doc) -> tuple:
    snapshot = doc.extra_fields().get("snapshot")
    if snapshot is None:
        raise ValueError("document %s has no snapshot field for "
                         "partitioning" % doc.id)
    return (snapshot, doc.language)


def dedup_partition(docs: Sequence,
                    partition_fn: Callable = default_partition_key,
                    k: int = DEFAULT_SHINGLE_K,
                    num_perm: int = DEFAULT_NUM_PERM,
                    bands: int = DEFAULT_BANDS, rows: int = DEFAULT_ROWS,
                    threshold: float = DEFAULT_VERIFY_THRESHOLD,
                    seed: int = 0) -> tuple:
    """Keep-first dedup inside each partition. Returns (kept, drop report).

    Output order follows input order; documents are never compared across
    partitions. Documents too short to shingle are exempt from near-dup
    detection but still participate in the exact-duplicate fast path.
    """
    partitions = {}
    for position, doc in enumerate(docs):
        partitions.setdefault(partition_fn(doc), []).append((position, doc))

    dropped_positions = set()
    report = []
    for key in sorted(partitions, key=lambda k: partitions[k][0][0]):
        members = partitions[key]
        # exact-duplicate fast path on the full text
        first_by_hash = {}
        survivors = []
        for position, doc in members:
            text_hash = _fingerprint(doc.text)
            if text_hash in first_by_hash:
                kept_doc = first_by_hash[text_hash]
                dropped_positions.add(position)
                report.append(DropRecord(key, kept_doc.id, doc.id, 1.0))
            else:
                first_by_hash[text_hash] = doc
                survivors.append((position, doc))
        # near-duplicate pass over the remaining documents
        signatures = []
        by_id = {}
        for position, doc in survivors:
            shingles = shingle(doc.text, k)
            if shingles.exempt:
                continue
            signatures.append((doc.id, minhash(shingles, num_perm, seed)))
            by_id[doc.id] = (position, doc)
        sig_by_id = dict(signatures)
        for cluster in find_duplicates(signatures, bands, rows, threshold):
            kept_id = cluster[0]
            for dup_id in cluster[1:]:
                position, _ = by_id[dup_id]
                dropped_positions.add(position)
                similarity = estimate_jaccard(sig_by_id[kept_id],
                                              sig_by_id[dup_id])
                report.append(DropRecord(key, kept_id, dup_id, similarity))

    kept = [doc for position, doc in enumerate(docs)
            if position not in dropped_positions]
    return kept, report


def write_drop_report(report: Iterable[DropRecord], path) -> int:
    import csv
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["partition", "kept_id", "dropped_id",
                         "verified_similarity"])
        for row in report:
            writer.writerow(["|".join(str(p) for p in row.partition),
                             row.kept_id, row.dropped_id,
                             "%.6f" % row.similarity])
            n += 1
    return n


def save_signature_cache(path, entries: dict, seed: int,
                         num_perm: int) -> None:
    """entries: {(source, id): MinHashSignature}. Stored as one npz file."""
    keys = sorted(entries)
    matrix = np.array([entries[k].values for k in keys], dtype=_U64)
    np.savez_compressed(
        path, values=matrix,
        keys=np.array(["%s\x00%s" % k for k in keys]),
        meta=np.array([seed, num_perm], dtype=np.int64))


def load_signature_cache(path) -> tuple:
    """Returns ({(source, id): MinHashSignature}, seed, num_perm)."""
    data = np.load(path, allow_pickle=False)
    seed, num_perm = (int(v) for v in data["meta"])
    entries = {}
    for key, row in zip(data["keys"], data["values"]):
        source, _, doc_id = str(key).partition("\x00")
        entries[(source, doc_id)] = MinHashSignature(
            num_perm, tuple(int(v) for v in row), seed)
    return entries, seed, num_perm
