"""Hierarchical navigable small world index over unit vectors.

A multi-layer proximity graph: every item lives at layer 0, and each
item is promoted to higher layers with exponentially decaying
probability. Queries greedily descend the sparse upper layers to a good
entry point, then run a bounded best-first search at layer 0. Because
all stored vectors are unit-normalized, similarity is a plain dot
product and equals cosine similarity.

Construction is deterministic: layer draws come from a counter-keyed
splitmix64 stream, so the same seed and insertion order rebuild the
same graph, and persistence round-trips byte-identical search results.
"""
from __future__ import annotations

import heapq
import io
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadK, CorruptFile, DimensionMismatch, DuplicateId, VersionMismatch

MAGIC = b"EVRX"
VERSION = 1

VECTORS_MAGIC = b"EVRV"
VECTORS_VERSION = 1

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4B9C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class HnswParams:
    dim: int = 1024
    M: int = 16
    M0: int = 0  # defaults to 2*M
    ef_construction: int = 200
    ef_search: int = 64
    rng_seed: int = 0x5EED

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.M0 <= 0:
            self.M0 = 2 * self.M
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be >= M")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")

    @property
    def mL(self) -> float:
        return 1.0 / math.log(self.M)


@dataclass
class SearchHit:
    item_id: str
    score: float
    payload: bytes

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "score": self.score}


def _sort_hits(scored: list[tuple[float, str, bytes]], k: int) -> list[SearchHit]:
    # score descending, ties by item_id ascending
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [SearchHit(item_id=i, score=s, payload=p) for s, i, p in scored[:k]]


def brute_force_topk(items: list[tuple[str, np.ndarray, bytes]],
                     query: np.ndarray, k: int) -> list[SearchHit]:
    """Exact top-k by cosine over unit vectors; oracle for the graph search."""
    q = np.asarray(query, dtype=np.float32)
    qn = float(np.linalg.norm(q))
    if qn > 0:
        q = q / qn
    scored = []
    for item_id, vec, payload in items:
        v = np.asarray(vec, dtype=np.float32)
        score = float(np.clip(float(np.dot(v, q)), -1.0, 1.0))
        scored.append((score, item_id, payload))
    return _sort_hits(scored, k)


class HnswIndex:
    def __init__(self, params: HnswParams | None = None):
        self.params = params or HnswParams()
        self._ids: list[str] = []
        self._id_to_idx: dict[str, int] = {}
        self._vectors = np.zeros((0, self.params.dim), dtype=np.float32)
        self._payloads: list[bytes] = []
        self._levels: list[int] = []
        # _links[node][layer] -> list of neighbor node indices
        self._links: list[list[list[int]]] = []
        self._entry: int = -1
        self._max_level: int = -1
        self._insert_count: int = 0  # RNG stream position; persisted

    # --- basic accessors ---

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._id_to_idx

    @property
    def dim(self) -> int:
        return self.params.dim

    def items(self) -> list[tuple[str, np.ndarray, bytes]]:
        return [
            (self._ids[i], self._vectors[i], self._payloads[i])
            for i in range(len(self._ids))
        ]

    def neighbor_lists(self, node: int) -> list[list[int]]:
        return self._links[node]

    def payload(self, item_id: str) -> bytes:
        return self._payloads[self._id_to_idx[item_id]]

    # --- construction ---

    def _draw_level(self) -> int:
        x = _splitmix64((self.params.rng_seed + self._insert_count) & _MASK64)
        self._insert_count += 1
        u = ((x >> 11) + 1) / float(1 << 53)  # uniform in (0, 1]
        return int(-math.log(u) * self.params.mL)

    def _grow(self, needed: int):
        cap = self._vectors.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, max(16, cap * 2))
        grown = np.zeros((new_cap, self.params.dim), dtype=np.float32)
        grown[:len(self._ids)] = self._vectors[:len(self._ids)]
        self._vectors = grown

    def _sims(self, node_idxs: list[int], q: np.ndarray) -> np.ndarray:
        return self._vectors[node_idxs] @ q

    def _greedy_descent(self, q: np.ndarray, entry: int, layer: int) -> int:
        cur = entry
        cur_sim = float(self._vectors[cur] @ q)
        improved = True
        while improved:
            improved = False
            neighbors = self._links[cur][layer]
            if not neighbors:
                break
            sims = self._sims(neighbors, q)
            best = int(np.argmax(sims))
            if float(sims[best]) > cur_sim:
                cur = neighbors[best]
                cur_sim = float(sims[best])
                improved = True
        return cur

    def _search_layer(self, q: np.ndarray, entries: list[int], ef: int,
                      layer: int) -> list[tuple[float, int]]:
        """Bounded best-first search; returns up to ef (sim, node) pairs."""
        visited = set(entries)
        entry_sims = self._sims(entries, q)
        candidates: list[tuple[float, int]] = []  # max-heap via negated sim
        results: list[tuple[float, int]] = []     # min-heap, worst on top
        for node, sim in zip(entries, entry_sims):
            sim = float(sim)
            heapq.heappush(candidates, (-sim, node))
            heapq.heappush(results, (sim, node))
        while len(results) > ef:
            heapq.heappop(results)

        while candidates:
            neg_sim, node = heapq.heappop(candidates)
            if len(results) >= ef and -neg_sim < results[0][0]:
                break
            fresh = [n for n in self._links[node][layer] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            sims = self._sims(fresh, q)
            for nbr, sim in zip(fresh, sims):
                sim = float(sim)
                if len(results) < ef or sim > results[0][0]:
                    heapq.heappush(candidates, (-sim, nbr))
                    heapq.heappush(results, (sim, nbr))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(((s, n) for s, n in results), key=lambda t: (-t[0], t[1]))

    def _select_neighbors(self, target: np.ndarray,
                          candidates: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity-aware neighbor selection.

        Scanning candidates nearest-first, keep one only if it is closer
        to the target than to every neighbor already kept; this spreads
        edges across directions instead of clustering them, which keeps
        the graph navigable in high dimensions. Pruned candidates refill
        the list if fewer than m survive.
        """
        ordered = sorted(candidates, key=lambda t: (-t[0], t[1]))
        selected: list[int] = []
        discarded: list[int] = []
        for sim, node in ordered:
            if len(selected) >= m:
                break
            if selected:
                to_selected = self._sims(selected, self._vectors[node])
                if float(np.max(to_selected)) >= sim:
                    discarded.append(node)
                    continue
            selected.append(node)
        for node in discarded:
            if len(selected) >= m:
                break
            selected.append(node)
        return selected

    def _prune(self, node: int, layer: int, bound: int):
        links = self._links[node][layer]
        if len(links) <= bound:
            return
        sims = self._sims(links, self._vectors[node])
        candidates = [(float(s), n) for s, n in zip(sims, links)]
        self._links[node][layer] = self._select_neighbors(
            self._vectors[node], candidates, bound
        )

    def insert(self, item_id: str, vector: np.ndarray, payload: bytes = b"") -> None:
        if item_id in self._id_to_idx:
            raise DuplicateId(item_id)
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.params.dim,):
            raise DimensionMismatch(
                f"vector shape {vec.shape}, index dim {self.params.dim}"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise DimensionMismatch("cannot index a zero vector")
        vec = vec / norm

        idx = len(self._ids)
        level = self._draw_level()
        self._grow(idx + 1)
        self._vectors[idx] = vec
        self._ids.append(item_id)
        self._id_to_idx[item_id] = idx
        self._payloads.append(payload)
        self._levels.append(level)
        self._links.append([[] for _ in range(level + 1)])

        if self._entry < 0:
            self._entry = idx
            self._max_level = level
            return

        ep = self._entry
        for layer in range(self._max_level, level, -1):
            ep = self._greedy_descent(vec, ep, layer)

        entries = [ep]
        for layer in range(min(level, self._max_level), -1, -1):
            found = self._search_layer(vec, entries, self.params.ef_construction, layer)
            # degree bound is M0 on the dense base layer, M above
            bound = self.params.M0 if layer == 0 else self.params.M
            neighbors = self._select_neighbors(vec, found, bound)
            self._links[idx][layer] = list(neighbors)
            for nbr in neighbors:
                self._links[nbr][layer].append(idx)
                self._prune(nbr, layer, bound)
            entries = [n for _, n in found]

        if level > self._max_level:
            self._entry = idx
            self._max_level = level

    # --- queries ---

    def search(self, query: np.ndarray, k: int, ef: int | None = None) -> list[SearchHit]:
        if k < 1:
            raise BadK(f"k must be >= 1, got {k}")
        if not self._ids:
            return []
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.params.dim,):
            raise DimensionMismatch(f"query shape {q.shape}, index dim {self.params.dim}")
        qn = float(np.linalg.norm(q))
        if qn > 0:
            q = q / qn
        ef = max(ef if ef is not None else self.params.ef_search, k)

        ep = self._entry
        for layer in range(self._max_level, 0, -1):
            ep = self._greedy_descent(q, ep, layer)
        found = self._search_layer(q, [ep], ef, 0)
        scored = [
            (float(np.clip(sim, -1.0, 1.0)), self._ids[node], self._payloads[node])
            for sim, node in found
        ]
        return _sort_hits(scored, k)

    def brute_force(self, query: np.ndarray, k: int) -> list[SearchHit]:
        return brute_force_topk(self.items(), query, k)

    # --- persistence ---

    def persist(self, path: Path) -> None:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<H", VERSION))
        p = self.params
        buf.write(struct.pack(
            "<IIIIIQQqq",
            p.dim, p.M, p.M0, p.ef_construction, p.ef_search,
            p.rng_seed, self._insert_count, self._entry, self._max_level,
        ))
        buf.write(struct.pack("<Q", len(self._ids)))
        for i, item_id in enumerate(self._ids):
            id_bytes = item_id.encode("utf-8")
            buf.write(struct.pack("<H", len(id_bytes)))
            buf.write(id_bytes)
            buf.write(self._vectors[i].astype("<f4").tobytes())
            payload = self._payloads[i]
            buf.write(struct.pack("<I", len(payload)))
            buf.write(payload)
            buf.write(struct.pack("<I", self._levels[i]))
            for layer_links in self._links[i]:
                buf.write(struct.pack("<I", len(layer_links)))
                buf.write(struct.pack(f"<{len(layer_links)}I", *layer_links))
        body = buf.getvalue()
        checksum = zlib.crc32(body) & 0xFFFFFFFF
        tmp = Path(str(path) + ".tmp")
        tmp.write_bytes(body + struct.pack("<I", checksum))
        tmp.replace(path)

    @classmethod
    def load(cls, path: Path) -> "HnswIndex":
        data = Path(path).read_bytes()
        if len(data) < len(MAGIC) + 2 + 4:
            raise CorruptFile(f"{path}: too short to be an index file")
        if data[:4] != MAGIC:
            raise CorruptFile(f"{path}: bad magic {data[:4]!r}")
        (version,) = struct.unpack_from("<H", data, 4)
        if version != VERSION:
            raise VersionMismatch(f"{path}: file version {version}, expected {VERSION}")
        body, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
        if zlib.crc32(body) & 0xFFFFFFFF != stored:
            raise CorruptFile(f"{path}: checksum mismatch")

        try:
            off = 6
            dim, M, M0, efc, efs, seed, count_rng, entry, max_level = struct.unpack_from(
                "<IIIIIQQqq", body, off
            )
            off += struct.calcsize("<IIIIIQQqq")
            params = HnswParams(dim=dim, M=M, M0=M0, ef_construction=efc,
                                ef_search=efs, rng_seed=seed)
            index = cls(params)
            index._insert_count = count_rng
            (n_items,) = struct.unpack_from("<Q", body, off)
            off += 8
            index._grow(n_items)
            for i in range(n_items):
                (id_len,) = struct.unpack_from("<H", body, off)
                off += 2
                item_id = body[off:off + id_len].decode("utf-8")
                off += id_len
                vec = np.frombuffer(body, dtype="<f4", count=dim, offset=off).copy()
                off += 4 * dim
                (payload_len,) = struct.unpack_from("<I", body, off)
                off += 4
                payload = body[off:off + payload_len]
                off += payload_len
                (level,) = struct.unpack_from("<I", body, off)
                off += 4
                links: list[list[int]] = []
                for _ in range(level + 1):
                    (n_links,) = struct.unpack_from("<I", body, off)
                    off += 4
                    links.append(list(struct.unpack_from(f"<{n_links}I", body, off)))
                    off += 4 * n_links
                index._vectors[i] = vec
                index._ids.append(item_id)
                index._id_to_idx[item_id] = i
                index._payloads.append(payload)
                index._levels.append(level)
                index._links.append(links)
            if off != len(body):
                raise CorruptFile(f"{path}: {len(body) - off} trailing bytes")
            index._entry = entry
            index._max_level = max_level
            return index
        except (struct.error, UnicodeDecodeError, IndexError) as exc:
            raise CorruptFile(f"{path}: truncated or malformed body: {exc}") from exc


# --- flat vector files (the `embed` CLI output consumed by `index build`) ---

def write_vectors(path: Path, pairs: list[tuple[str, np.ndarray]], dim: int) -> None:
    buf = io.BytesIO()
    buf.write(VECTORS_MAGIC)
    buf.write(struct.pack("<H", VECTORS_VERSION))
    buf.write(struct.pack("<IQ", dim, len(pairs)))
    for item_id, vec in pairs:
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (dim,):
            raise DimensionMismatch(f"{item_id}: vector shape {arr.shape}, dim {dim}")
        id_bytes = item_id.encode("utf-8")
        buf.write(struct.pack("<H", len(id_bytes)))
        buf.write(id_bytes)
        buf.write(arr.tobytes())
    body = buf.getvalue()
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_vectors(path: Path) -> tuple[int, list[tuple[str, np.ndarray]]]:
    data = Path(path).read_bytes()
    if len(data) < 4 + 2 + 12 + 4 or data[:4] != VECTORS_MAGIC:
        raise CorruptFile(f"{path}: not a vector file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VECTORS_VERSION:
        raise VersionMismatch(f"{path}: vector file version {version}")
    body, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise CorruptFile(f"{path}: checksum mismatch")
    dim, count = struct.unpack_from("<IQ", body, 6)
    off = 6 + 12
    pairs = []
    try:
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", body, off)
            off += 2
            item_id = body[off:off + id_len].decode("utf-8")
            off += id_len
            vec = np.frombuffer(body, dtype="<f4", count=dim, offset=off).copy()
            off += 4 * dim
            pairs.append((item_id, vec))
    except (struct.error, ValueError) as exc:
        raise CorruptFile(f"{path}: truncated vector file") from exc
    return dim, pairs
