"""Knowledge base of annotated true-positive files and exact k=1 retrieval.

On disk::

    kb/manifest                      build summary (JSON)
    kb/<problem>/index.records       one JSON record per entry
    kb/<problem>/<id>.annotated      annotated source of that entry
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, EmbedderError, EmptyIndex, OutOfRange, ProviderError
from .problems import ALL_PROBLEMS, CATALOG, DESCRIPTIONS, ProblemType
from .providers import Embedder
from .records import iter_records
from .tokens import TOKENIZER_NAME, count_tokens

log = logging.getLogger(__name__)

TOKEN_LIMIT = 8192
RETRIEVAL_K = 1
ANNOTATION_PREFIX = "# Problem: "
ANNOTATION = re.compile(r"#\s*Problem:\s*\S")

_LINE = re.compile(r"[^\r\n]*(?:\r\n|\r|\n)|[^\r\n]+$")


@dataclass(frozen=True)
class RagConfig:
    embedding_model: str = "text-embedding-3-large"
    dimension: int = 3072
    k: int = RETRIEVAL_K
    token_limit: int = TOKEN_LIMIT

    def __post_init__(self) -> None:
        if self.k != RETRIEVAL_K:
            raise ValueError("only k=1 retrieval is supported")
        if self.token_limit != TOKEN_LIMIT:
            raise ValueError(f"token_limit is fixed at {TOKEN_LIMIT}")


def annotate_tp_file(source: str, problem: ProblemType, lines: Iterable[int]) -> str:
    """Append ``# Problem: <description>`` to each listed line."""
    wanted = set(lines)
    if not wanted:
        return source
    chunks = _LINE.findall(source)
    bad = sorted(n for n in wanted if n < 1 or n > len(chunks))
    if bad:
        raise OutOfRange(f"line(s) {bad} outside 1..{len(chunks)}")
    label = f"  {ANNOTATION_PREFIX}{DESCRIPTIONS[problem]}"
    out = []
    for number, chunk in enumerate(chunks, 1):
        if number in wanted:
            body = chunk.rstrip("\r\n")
            chunk = body + label + chunk[len(body):]
        out.append(chunk)
    return "".join(out)


@dataclass(frozen=True)
class KbCandidate:
    source_path: str
    problem: ProblemType
    lines: frozenset[int]
    source: str


@dataclass(frozen=True)
class KbEntry:
    id: str
    problem: ProblemType
    annotated_source: str
    token_count: int
    vector: tuple[float, ...]
    source_path: str

    def record(self) -> dict:
        return {
            "id": self.id,
            "problem": self.problem.value,
            "token_count": self.token_count,
            "source_path": self.source_path,
            "vector": list(self.vector),
        }


@dataclass(frozen=True)
class VectorIndex:
    problem: ProblemType
    entries: tuple[KbEntry, ...]
    dimension: int
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.entries, key=lambda e: e.id))
        for e in ordered:
            if len(e.vector) != self.dimension:
                raise DimensionMismatch(f"entry {e.id} has {len(e.vector)} dimensions, "
                                        f"index has {self.dimension}")
        object.__setattr__(self, "entries", ordered)
        matrix = np.array([e.vector for e in ordered], dtype=np.float64).reshape(len(ordered), self.dimension)
        matrix.setflags(write=False)
        object.__setattr__(self, "_matrix", matrix)

    def __len__(self) -> int:
        return len(self.entries)


def retrieve(index: VectorIndex, query: Iterable[float]) -> tuple[KbEntry, float]:
    """Nearest entry by Euclidean distance; ties go to the smallest id."""
    if not index.entries:
        raise EmptyIndex(f"index for {index.problem.value} is empty")
    q = np.asarray(list(query), dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionMismatch(f"query has {q.size} dimensions, index has {index.dimension}")
    distances = np.sqrt(((index._matrix - q) ** 2).sum(axis=1))
    best = int(np.argmin(distances))  # first minimum, and entries are sorted by id
    return index.entries[best], float(distances[best])


def entry_id(source_path: str, problem: ProblemType) -> str:
    stem = re.sub(r"[^A-Za-z0-9_-]+", "_", Path(source_path).stem).strip("_") or "file"
    digest = hashlib.sha256(f"{source_path}\0{problem.value}".encode("utf-8")).hexdigest()[:10]
    return f"{stem}-{digest}"


@dataclass
class KnowledgeBase:
    indices: dict[ProblemType, VectorIndex]
    manifest: dict

    def save(self, directory: str | Path) -> None:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        for problem in ALL_PROBLEMS:
            pdir = root / problem.value
            pdir.mkdir(exist_ok=True)
            for stale in pdir.glob("*.annotated"):
                stale.unlink()
            index = self.indices[problem]
            for e in index.entries:
                (pdir / f"{e.id}.annotated").write_bytes(e.annotated_source.encode("utf-8"))
            (pdir / "index.records").write_text(
                "".join(json.dumps(e.record()) + "\n" for e in index.entries), encoding="utf-8")
        (root / "manifest").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "KnowledgeBase":
        root = Path(directory)
        manifest_path = root / "manifest"
        if not manifest_path.is_file():
            raise FileNotFoundError(f"{root} has no manifest; build the knowledge base first")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        dimension = int(manifest["dimension"])
        indices = {}
        for problem in ALL_PROBLEMS:
            pdir = root / problem.value
            entries = []
            records = pdir / "index.records"
            if records.is_file():
                for rec in iter_records(records):
                    text = (pdir / f"{rec['id']}.annotated").read_bytes().decode("utf-8")
                    entries.append(KbEntry(rec["id"], problem, text, int(rec["token_count"]),
                                           tuple(float(x) for x in rec["vector"]), rec["source_path"]))
            indices[problem] = VectorIndex(problem, tuple(entries), dimension)
        return cls(indices, manifest)


def build_index(candidates: Iterable[KbCandidate], embedder: Embedder,
                token_limit: int = TOKEN_LIMIT) -> KnowledgeBase:
    """Annotate, size-filter, embed and group candidates into per-problem indices.

    Files are filtered as a whole: a file is excluded when any of its annotated
    forms exceeds ``token_limit``.  A file listed under several problems yields
    one entry per problem.
    """
    by_file: dict[str, list[KbCandidate]] = {}
    for c in candidates:
        by_file.setdefault(c.source_path, []).append(c)

    grouped: dict[ProblemType, list[KbEntry]] = {p: [] for p in ALL_PROBLEMS}
    files = []
    for path in sorted(by_file):
        cands = sorted(by_file[path], key=lambda c: c.problem.value)
        annotated = [(c, annotate_tp_file(c.source, c.problem, c.lines)) for c in cands]
        tokens = max(count_tokens(text) for _, text in annotated)
        row = {"source_path": path, "token_count": tokens,
               "problems": [c.problem.value for c in cands]}
        if tokens > token_limit:
            row.update(status="excluded", reason="token_limit", entries=[])
            log.info("excluding %s: %d tokens > %d", path, tokens, token_limit)
            files.append(row)
            continue
        ids = []
        for c, text in annotated:
            eid = entry_id(path, c.problem)
            try:
                vector = embedder.embed(text)
            except (ProviderError, DimensionMismatch, ValueError) as exc:
                raise EmbedderError(f"embedding failed for entry {eid}: {exc}", entry_id=eid) from exc
            if len(vector) != embedder.dimension:
                raise EmbedderError(f"entry {eid}: embedder returned {len(vector)} dimensions",
                                    entry_id=eid)
            grouped[c.problem].append(KbEntry(eid, c.problem, text, count_tokens(text),
                                              tuple(float(x) for x in vector), path))
            ids.append(eid)
        row.update(status="included", reason=None, entries=ids)
        files.append(row)

    indices = {p: VectorIndex(p, tuple(grouped[p]), embedder.dimension) for p in ALL_PROBLEMS}
    manifest = {
        "tokenizer": TOKENIZER_NAME,
        "tokenizer_is_fallback": True,
        "token_limit": token_limit,
        "embedder": getattr(embedder, "spec", type(embedder).__name__),
        "dimension": embedder.dimension,
        "files_included": sum(1 for f in files if f["status"] == "included"),
        "files_excluded": sum(1 for f in files if f["status"] == "excluded"),
        "entries_per_problem": {p.value: len(indices[p]) for p in ALL_PROBLEMS},
        "files": files,
    }
    return KnowledgeBase(indices, manifest)


def retrieve_example_for(problem: ProblemType, source_text: str, embedder: Embedder,
                         indices: dict[ProblemType, VectorIndex],
                         token_limit: int = TOKEN_LIMIT) -> tuple[str, bool]:
    """Annotated source of the nearest KB entry, or the static example.

    Returns ``(example, retrieved)``.  Query files over ``token_limit`` fall
    back to the static catalog example.
    """
    tokens = count_tokens(source_text)
    if tokens > token_limit:
        log.warning("query has %d tokens (> %d); using the static %s example",
                    tokens, token_limit, problem.value)
        return CATALOG[problem].static_example, False
    entry, _ = retrieve(indices[problem], embedder.embed(source_text))
    return entry.annotated_source, True


class RagStore:
    """Binds a knowledge base to the embedder used for queries."""

    def __init__(self, kb: KnowledgeBase, embedder: Embedder, token_limit: int = TOKEN_LIMIT):
        if kb.manifest.get("dimension") != embedder.dimension:
            raise DimensionMismatch(f"knowledge base has {kb.manifest.get('dimension')} dimensions, "
                                    f"embedder produces {embedder.dimension}")
        self.kb = kb
        self.embedder = embedder
        self.token_limit = token_limit

    def example_for(self, problem: ProblemType, source_text: str) -> tuple[str, bool]:
        return retrieve_example_for(problem, source_text, self.embedder, self.kb.indices,
                                    self.token_limit)


def candidates_from_truth(truth_path: str | Path, src_dir: str | Path) -> list[KbCandidate]:
    """Merge truth records per (file, problem) and load each file from ``src_dir``."""
    merged: dict[tuple[str, ProblemType], set[int]] = {}
    for rec in iter_records(truth_path):
        key = (rec["file"], ProblemType.parse(rec["problem"]))
        merged.setdefault(key, set()).update(int(n) for n in rec["lines"])
    src = Path(src_dir)
    out = []
    for (path, problem), lines in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        full = Path(path) if Path(path).is_absolute() else src / path
        text = full.read_bytes().decode("utf-8")
        out.append(KbCandidate(path, problem, frozenset(lines), text))
    return out
