"""Keyword-indexed note store for design rules, material data and run findings."""

from __future__ import annotations

import re
import threading
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .domain import normalize_role
from .workspace import ProjectWorkspace, utc_now

KNOWLEDGE_DIR = "knowledge"
_TOKEN = re.compile(r"[a-z0-9]+(?:[-.][a-z0-9]+)*")
_FRONT = re.compile(r"\A---\n(.*?)\n---\n?(.*)\Z", re.S)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Note:
    note_id: str
    text: str
    tags: tuple[str, ...] = ()
    producer: str = ""
    timestamp: str = ""

    def render(self) -> str:
        meta = [f"id: {self.note_id}", f"tags: {', '.join(self.tags)}"]
        if self.producer:
            meta.append(f"producer: {self.producer}")
        if self.timestamp:
            meta.append(f"timestamp: {self.timestamp}")
        return "---\n" + "\n".join(meta) + "\n---\n" + self.text.rstrip("\n") + "\n"


def parse_note(text: str, default_id: str) -> Note:
    m = _FRONT.match(text)
    if not m:
        return Note(default_id, text.strip())
    meta = {}
    for line in m.group(1).splitlines():
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    tags = tuple(t.strip() for t in meta.get("tags", "").split(",") if t.strip())
    return Note(meta.get("id", default_id), m.group(2).strip(), tags, meta.get("producer", ""),
                meta.get("timestamp", ""))


def bundled_notes() -> list[Note]:
    root = resources.files("aeroforge.data").joinpath("notes")
    out = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".md"):
            out.append(parse_note(entry.read_text(encoding="utf-8"), f"ref-{entry.name[:-3]}"))
    return out


class KnowledgeStore:
    """Append-only notes; bundled references plus findings recorded in the workspace."""

    def __init__(self, workspace: ProjectWorkspace | None = None, include_bundled: bool = True, clock=utc_now):
        self.workspace = workspace
        self.clock = clock
        self._lock = threading.Lock()
        self._notes: list[Note] = bundled_notes() if include_bundled else []
        if workspace is not None:
            folder = workspace.root / KNOWLEDGE_DIR
            if folder.exists():
                for f in sorted(folder.glob("note-*.md")):
                    self._notes.append(parse_note(f.read_text(encoding="utf-8"), f.stem))
        self._seq = sum(1 for n in self._notes if n.note_id.startswith("note-"))

    @property
    def notes(self) -> list[Note]:
        with self._lock:
            return list(self._notes)

    def query(self, terms: str | list[str], limit: int | None = None) -> list[Note]:
        """Notes ranked by summed term frequency over body and tags; ties by id."""
        words = tokenize(terms if isinstance(terms, str) else " ".join(terms))
        if not words:
            return []
        scored = []
        for note in self.notes:
            counts = Counter(tokenize(note.text) + tokenize(" ".join(note.tags)))
            score = sum(counts[w] for w in words)
            if score > 0:
                scored.append((-score, note.note_id, note))
        scored.sort(key=lambda s: (s[0], s[1]))
        ranked = [s[2] for s in scored]
        return ranked[:limit] if limit is not None else ranked

    def record_finding(self, text: str, tags=(), producer: str = "chief") -> str:
        if not text or not text.strip():
            raise ValueError("note text must be nonempty")
        role = normalize_role(producer)
        with self._lock:
            self._seq += 1
            note = Note(f"note-{self._seq:06d}", text.strip(), tuple(tags), role, self.clock())
            self._notes.append(note)
        if self.workspace is not None:
            self.workspace.publish_text(f"{KNOWLEDGE_DIR}/{note.note_id}.md", note.render(), producer=role)
        return note.note_id
