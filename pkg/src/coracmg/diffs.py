"""Commit domain types and a parser for git's unified diff format.

A commit record carries eight fields (diff, message, repo_full_name, sha,
author_name, files, date, loc) and serializes to one JSON object per line.
``parse_diff`` turns raw ``diff --git`` text into a structured view of file
changes, hunks, and tagged lines; ``count_loc`` and ``diff_line_count`` are
the two line counters used by the corpus filters.

All types are immutable after construction and the parse operations are
pure, so everything here is safe to use from concurrent workers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable

from .errors import MalformedDiff

SHA_RE = re.compile(r"^[0-9a-f]{40}$")

# Tags for lines inside a hunk.  META covers "\ No newline at end of file"
# markers, which must be preserved for byte-exact round-trips but do not
# count toward hunk lengths.
ADDED = "added"
DELETED = "deleted"
CONTEXT = "context"
META = "meta"

# Extension -> language for the mainstream-language file filter and per-file
# language tags.  Callers may pass their own table where a different notion
# of "source code" is needed.
DEFAULT_LANGUAGES: dict[str, str] = {
    ".java": "java",
    ".cpp": "cpp",
    ".cc": "cpp",
    ".cxx": "cpp",
    ".hpp": "cpp",
    ".hh": "cpp",
    ".hxx": "cpp",
    ".h": "cpp",
    ".scala": "scala",
    ".sc": "scala",
    ".ts": "typescript",
    ".tsx": "typescript",
    ".py": "python",
    ".pyi": "python",
    ".lua": "lua",
    ".go": "go",
    ".rs": "rust",
    ".erl": "erlang",
    ".hrl": "erlang",
}


def language_of(path: str, table: dict[str, str] | None = None) -> str:
    table = DEFAULT_LANGUAGES if table is None else table
    dot = path.rfind(".")
    if dot == -1:
        return "other"
    return table.get(path[dot:].lower(), "other")


@dataclass(frozen=True)
class DiffLine:
    tag: str  # ADDED | DELETED | CONTEXT | META
    content: str  # line text without the leading marker character
    # Empty context lines appear both as " " (git) and "" (whitespace-stripped
    # diffs); the flag keeps round-trips byte-exact.
    bare: bool = False


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple[DiffLine, ...]

    @property
    def added(self) -> int:
        return sum(1 for ln in self.lines if ln.tag == ADDED)

    @property
    def deleted(self) -> int:
        return sum(1 for ln in self.lines if ln.tag == DELETED)


@dataclass(frozen=True)
class FileChange:
    old_path: str | None  # None for newly added files
    new_path: str | None  # None for deleted files
    hunks: tuple[Hunk, ...]
    is_binary: bool = False

    @property
    def path(self) -> str:
        """The path this change is filed under (new side, old side for deletions)."""
        return self.new_path if self.new_path is not None else (self.old_path or "")

    @property
    def language(self) -> str:
        return language_of(self.path)

    @property
    def added(self) -> int:
        return sum(h.added for h in self.hunks)

    @property
    def deleted(self) -> int:
        return sum(h.deleted for h in self.hunks)


@dataclass(frozen=True)
class ParsedDiff:
    file_changes: tuple[FileChange, ...]

    @property
    def files(self) -> list[str]:
        return [fc.path for fc in self.file_changes]


@dataclass(frozen=True)
class CommitRecord:
    """One mined commit: the unit stored in corpus JSON Lines files."""

    diff: str
    message: str
    repo_full_name: str
    sha: str
    author_name: str
    files: list[str] = field(default_factory=list)
    date: str = ""  # ISO-8601, UTC
    loc: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "diff": self.diff,
                "message": self.message,
                "repo_full_name": self.repo_full_name,
                "sha": self.sha,
                "author_name": self.author_name,
                "files": self.files,
                "date": self.date,
                "loc": self.loc,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "CommitRecord":
        obj = json.loads(line)
        return cls(
            diff=obj["diff"],
            message=obj["message"],
            repo_full_name=obj["repo_full_name"],
            sha=obj["sha"],
            author_name=obj["author_name"],
            files=list(obj["files"]),
            date=obj["date"],
            loc=int(obj["loc"]),
        )

    def validate(self) -> None:
        """Check the record invariants; raises ValueError on the first violation."""
        if not SHA_RE.match(self.sha):
            raise ValueError(f"sha is not 40 lowercase hex chars: {self.sha!r}")
        if "\n" in self.message or "\r" in self.message:
            raise ValueError("message contains newline characters")
        if re.search(r"#\d", self.message):
            raise ValueError("message still contains a PR number reference")
        parsed = parse_diff(self.diff)
        if self.loc != count_loc(parsed):
            raise ValueError(f"loc={self.loc} but diff has {count_loc(parsed)} changed lines")
        if set(self.files) != set(parsed.files):
            raise ValueError("files does not match the paths in the diff headers")
        # Parseable and parsed already; date must be ISO-8601.
        datetime.fromisoformat(self.date)


def read_jsonl(path) -> Iterable[CommitRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield CommitRecord.from_json(line)


def write_jsonl(path, records: Iterable[CommitRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
            n += 1
    return n


def utc_isoformat(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


_HUNK_HEADER = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_BINARY = re.compile(r"^Binary files .* differ$|^GIT binary patch$")


_C_ESCAPES = {"n": 10, "t": 9, "r": 13, "a": 7, "b": 8, "f": 12, "v": 11, "\\": 92, '"': 34}


def _unquote_git_path(path: str) -> str:
    """Undo git's C-style path quoting ("caf\\303\\251.py" and friends)."""
    if len(path) < 2 or path[0] != '"' or path[-1] != '"':
        return path
    body = path[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in "01234567":
                out.append(int(body[i + 1 : i + 4], 8))
                i += 4
                continue
            if nxt in _C_ESCAPES:
                out.append(_C_ESCAPES[nxt])
                i += 2
                continue
        out.extend(ch.encode("utf-8"))
        i += 1
    return out.decode("utf-8", errors="replace")


def _strip_prefix(path: str) -> str | None:
    path = _unquote_git_path(path)
    if path == "/dev/null":
        return None
    if len(path) > 2 and path[1] == "/" and path[0] in "abiwco":
        return path[2:]
    return path


def _git_header_paths(line: str) -> tuple[str, str]:
    # "diff --git a/<old> b/<new>"; paths with spaces are resolved by
    # scanning for the " b/" separator, quoted paths by C-style unquoting.
    body = line[len("diff --git ") :]
    if '"' in body:
        parts = re.findall(r'"(?:[^"\\]|\\.)*"|\S+', body)
        if len(parts) == 2:
            return _strip_prefix(parts[0]) or "", _strip_prefix(parts[1]) or ""
    marker = body.find(" b/")
    if marker != -1:
        return body[:marker][2:] if body.startswith("a/") else body[:marker], body[marker + 3 :]
    halves = body.split(" ", 1)
    if len(halves) == 2:
        return _strip_prefix(halves[0]) or "", _strip_prefix(halves[1]) or ""
    return body, body


def parse_diff(raw: str) -> ParsedDiff:
    """Parse a git unified diff (possibly spanning many files) into structure.

    Empty input yields an empty change list.  A hunk header that cannot be
    parsed raises :class:`MalformedDiff` naming the byte offset.  Binary file
    sections and pure renames become file changes with zero hunks.
    """
    if not raw:
        return ParsedDiff(file_changes=())

    changes: list[FileChange] = []
    lines = raw.split("\n")
    # Byte offset of the start of each line, for error reporting.
    offsets: list[int] = []
    pos = 0
    for ln in lines:
        offsets.append(pos)
        pos += len(ln.encode("utf-8")) + 1

    i = 0
    n = len(lines)

    def parse_one_file(start: int) -> int:
        nonlocal changes
        header = lines[start]
        old_from_git, new_from_git = _git_header_paths(header)
        old_path: str | None = old_from_git
        new_path: str | None = new_from_git
        is_binary = False
        deleted_file = False
        new_file = False
        hunks: list[Hunk] = []
        j = start + 1
        while j < n:
            line = lines[j]
            if line.startswith("diff --git "):
                break
            if _BINARY.match(line):
                is_binary = True
                j += 1
                continue
            if line.startswith("deleted file mode"):
                deleted_file = True
                j += 1
                continue
            if line.startswith("new file mode"):
                new_file = True
                j += 1
                continue
            if line.startswith("rename from "):
                old_path = _unquote_git_path(line[len("rename from ") :])
                j += 1
                continue
            if line.startswith("rename to "):
                new_path = _unquote_git_path(line[len("rename to ") :])
                j += 1
                continue
            if line.startswith("--- "):
                old_path = _strip_prefix(line[4:].split("\t")[0])
                j += 1
                continue
            if line.startswith("+++ "):
                new_path = _strip_prefix(line[4:].split("\t")[0])
                j += 1
                continue
            if line.startswith("@@"):
                m = _HUNK_HEADER.match(line)
                if not m:
                    raise MalformedDiff(f"unparseable hunk header {line!r}", offsets[j])
                old_start = int(m.group(1))
                old_len = int(m.group(2)) if m.group(2) is not None else 1
                new_start = int(m.group(3))
                new_len = int(m.group(4)) if m.group(4) is not None else 1
                j += 1
                body: list[DiffLine] = []
                seen_old = 0
                seen_new = 0
                while j < n and (seen_old < old_len or seen_new < new_len):
                    bl = lines[j]
                    if bl.startswith("+"):
                        body.append(DiffLine(ADDED, bl[1:]))
                        seen_new += 1
                    elif bl.startswith("-"):
                        body.append(DiffLine(DELETED, bl[1:]))
                        seen_old += 1
                    elif bl.startswith("\\"):
                        body.append(DiffLine(META, bl[1:]))
                    elif bl.startswith(" ") or bl == "":
                        body.append(DiffLine(CONTEXT, bl[1:], bare=(bl == "")))
                        seen_old += 1
                        seen_new += 1
                    else:
                        raise MalformedDiff(
                            f"unexpected line inside hunk: {bl!r}", offsets[j]
                        )
                    j += 1
                if seen_old != old_len or seen_new != new_len:
                    raise MalformedDiff(
                        "truncated hunk: header promised "
                        f"-{old_len}/+{new_len} but body ended early",
                        offsets[min(j, n - 1)],
                    )
                # Trailing "\ No newline" marker belongs to this hunk.
                if j < n and lines[j].startswith("\\"):
                    body.append(DiffLine(META, lines[j][1:]))
                    j += 1
                hunks.append(Hunk(old_start, old_len, new_start, new_len, tuple(body)))
                continue
            # index lines, mode lines, similarity scores, etc.
            j += 1
        if new_file:
            old_path = None
        if deleted_file:
            new_path = None
        changes.append(
            FileChange(
                old_path=old_path,
                new_path=new_path,
                hunks=tuple(hunks),
                is_binary=is_binary,
            )
        )
        return j

    while i < n:
        if lines[i].startswith("diff --git "):
            i = parse_one_file(i)
        else:
            i += 1
    return ParsedDiff(file_changes=tuple(changes))


def count_loc(diff: ParsedDiff) -> int:
    """Total added plus deleted line count across all files."""
    return sum(fc.added + fc.deleted for fc in diff.file_changes)


def diff_line_count(raw: str) -> int:
    """Number of newline-delimited lines in the raw diff payload, headers included.

    A final line without a trailing newline counts as one line.
    """
    if not raw:
        return 0
    return raw.count("\n") + (0 if raw.endswith("\n") else 1)


def changed_line_count(raw: str) -> int:
    """Added plus deleted lines of the raw diff; the alternative R2 counter."""
    return count_loc(parse_diff(raw))


def render_hunk_body(hunk: Hunk) -> str:
    """Serialize a hunk's tagged lines back to unified-diff body text."""
    marker = {ADDED: "+", DELETED: "-", CONTEXT: " ", META: "\\"}
    out = []
    for ln in hunk.lines:
        if ln.bare:
            out.append("")
        else:
            out.append(marker[ln.tag] + ln.content)
    return "\n".join(out)
