"""Identifier obfuscation that keeps the program's syntax and API usage intact.

Only names the file itself binds (variables, parameters, functions, classes)
are renamed.  Keywords, builtins, imported names, attribute names, keyword
argument names and dunders are kept.  Renaming happens on the token stream,
so comments, string literals and layout stay byte-identical.
"""

from __future__ import annotations

import ast
import builtins
import io
import json
import keyword
import random
import re
import string
import tokenize
from dataclasses import dataclass
from pathlib import Path

_ALPHABET = string.ascii_lowercase + string.digits
NAME_PREFIX = "x"
NAME_LENGTH = 8


@dataclass(frozen=True)
class ObfuscationMap:
    seed: int
    renames: dict[str, str]

    def inverse(self) -> dict[str, str]:
        return {new: old for old, new in self.renames.items()}

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "renames": self.renames}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ObfuscationMap":
        data = json.loads(text)
        return cls(int(data["seed"]), dict(data["renames"]))


def _preserved_names(tree: ast.AST) -> set[str]:
    keep = set(keyword.kwlist) | set(getattr(keyword, "softkwlist", [])) | set(dir(builtins))
    keep |= {"self", "cls"}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                keep.update(alias.name.split("."))
                if alias.asname:
                    keep.add(alias.asname)
        elif isinstance(node, ast.ImportFrom):
            if node.module:
                keep.update(node.module.split("."))
            for alias in node.names:
                keep.add(alias.asname or alias.name)
        elif isinstance(node, ast.Attribute):
            keep.add(node.attr)
        elif isinstance(node, ast.keyword) and node.arg:
            keep.add(node.arg)
        elif isinstance(node, (ast.MatchAs, ast.MatchStar)) and node.name:
            keep.add(node.name)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            keep.add(node.rest)
        elif isinstance(node, ast.MatchClass):
            keep.update(node.kwd_attrs)
    return keep


def _bound_names(tree: ast.AST) -> set[str]:
    bound: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store, ast.Del)):
            bound.add(node.id)
        elif isinstance(node, ast.arg):
            bound.add(node.arg)
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            bound.add(node.name)
        elif isinstance(node, ast.ExceptHandler) and node.name:
            bound.add(node.name)
    return {n for n in bound if not (n.startswith("__") and n.endswith("__"))}


# -- token-level renaming ------------------------------------------------------------

def _rename_tokens(text: str, mapping: dict[str, str]) -> str:
    """Replace NAME tokens found in ``mapping``, including inside f-string fields."""
    if not mapping:
        return text
    lines = _split_keepends(text)
    edits: dict[int, list[tuple[int, int, str]]] = {}
    prev = None
    for tok in tokenize.generate_tokens(io.StringIO(text).readline):
        if tok.type == tokenize.NAME and tok.string in mapping and not (prev and prev.string == "."):
            row, col = tok.start
            edits.setdefault(row, []).append((col, tok.end[1], mapping[tok.string]))
        elif tok.type == tokenize.STRING and tok.start[0] == tok.end[0]:
            new = _rename_fstring(tok.string, mapping)
            if new != tok.string:
                row, col = tok.start
                edits.setdefault(row, []).append((col, tok.end[1], new))
        elif tok.type == tokenize.STRING:
            new = _rename_fstring(tok.string, mapping)
            if new != tok.string:
                _multiline_edit(lines, edits, tok, new)
        if tok.type not in (tokenize.NL, tokenize.NEWLINE, tokenize.COMMENT,
                            tokenize.INDENT, tokenize.DEDENT):
            prev = tok
    for row, row_edits in edits.items():
        line = lines[row - 1]
        for start, end, new in sorted(row_edits, reverse=True):
            line = line[:start] + new + line[end:]
        lines[row - 1] = line
    return "".join(lines)


def _split_keepends(text: str) -> list[str]:
    # Row numbering must agree with tokenize over io.StringIO, which breaks on "\n" only.
    return re.findall(r"[^\n]*\n|[^\n]+$", text)


def _multiline_edit(lines: list[str], edits: dict, tok: tokenize.TokenInfo, new: str) -> None:
    # A multi-line f-string keeps its line structure because renames never add newlines.
    new_lines = new.split("\n")
    (srow, scol), (erow, ecol) = tok.start, tok.end
    for offset, piece in enumerate(new_lines):
        row = srow + offset
        start = scol if offset == 0 else 0
        if row == erow:
            end = ecol
        else:
            end = len(lines[row - 1].rstrip("\r\n"))
        edits.setdefault(row, []).append((start, end, piece))


def _string_parts(token: str) -> tuple[str, str, str, str]:
    i = 0
    while token[i] not in "'\"":
        i += 1
    prefix = token[:i]
    quote = token[i:i + 3] if token[i:i + 3] in ('"""', "'''") else token[i]
    return prefix, quote, token[i + len(quote):len(token) - len(quote)], quote


def _rename_fstring(token: str, mapping: dict[str, str]) -> str:
    prefix, quote, body, _ = _string_parts(token)
    if "f" not in prefix.lower():
        return token
    return prefix + quote + _rename_fbody(body, mapping) + quote


def _skip_string(s: str, i: int) -> int:
    q = s[i:i + 3] if s[i:i + 3] in ('"""', "'''") else s[i]
    j = i + len(q)
    while j < len(s) and not s.startswith(q, j):
        j += 2 if s[j] == "\\" else 1
    return j + len(q)


def _rename_fbody(body: str, mapping: dict[str, str]) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch in "{}" and body[i:i + 2] in ("{{", "}}"):
            out.append(body[i:i + 2])
            i += 2
            continue
        if ch != "{":
            out.append(ch)
            i += 1
            continue
        # expression field: scan to the top-level '!', ':' or '}'
        j = i + 1
        depth = 0
        while j < len(body):
            c = body[j]
            if c in "'\"":
                j = _skip_string(body, j)
                continue
            if c in "([{":
                depth += 1
            elif c in ")]}":
                if depth == 0:
                    break
                depth -= 1
            elif depth == 0 and c == "!" and body[j + 1:j + 2] != "=":
                break
            elif depth == 0 and c == ":":
                break
            j += 1
        expr = body[i + 1:j]
        out.append("{" + _rename_expr(expr, mapping))
        i = j
        if i < len(body) and body[i] == "!":
            k = i
            while k < len(body) and body[k] not in ":}":
                k += 1
            out.append(body[i:k])
            i = k
        if i < len(body) and body[i] == ":":
            k = i + 1
            depth = 0
            while k < len(body):
                if body[k] == "{":
                    depth += 1
                elif body[k] == "}":
                    if depth == 0:
                        break
                    depth -= 1
                k += 1
            out.append(":" + _rename_fbody(body[i + 1:k], mapping))
            i = k
        if i < len(body):
            out.append("}")
            i += 1
    return "".join(out)


def _rename_expr(expr: str, mapping: dict[str, str]) -> str:
    stripped = expr.rstrip()
    trail = expr[len(stripped):]
    if stripped.endswith("=") and not stripped.endswith(("==", "!=", "<=", ">=")):
        # self-documenting field ``{name=}``
        return _rename_expr(stripped[:-1], mapping) + "=" + trail
    try:
        return _rename_tokens("(" + stripped + ")", mapping)[1:-1] + trail
    except (tokenize.TokenError, IndentationError, SyntaxError):
        return expr


# -- public API --------------------------------------------------------------------------

def _name_order(text: str) -> list[str]:
    seen: dict[str, None] = {}
    for tok in tokenize.generate_tokens(io.StringIO(text).readline):
        if tok.type == tokenize.NAME:
            seen.setdefault(tok.string, None)
    return list(seen)


def _fresh_names(count: int, seed: int, taken: set[str]) -> list[str]:
    rng = random.Random(seed)
    out: list[str] = []
    used = set(taken)
    while len(out) < count:
        name = NAME_PREFIX + "".join(rng.choice(_ALPHABET) for _ in range(NAME_LENGTH))
        if name in used or keyword.iskeyword(name):
            continue
        used.add(name)
        out.append(name)
    return out


def obfuscate(source: str, seed: int) -> tuple[str, ObfuscationMap]:
    tree = ast.parse(source)
    keep = _preserved_names(tree)
    candidates = _bound_names(tree) - keep
    order = [n for n in _name_order(source) if n in candidates]
    order += sorted(candidates - set(order))
    all_names = set(_name_order(source)) | {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    fresh = _fresh_names(len(order), seed, all_names | keep)
    renames = dict(zip(order, fresh))
    result = _rename_tokens(source, renames)
    ast.parse(result)
    return result, ObfuscationMap(seed, renames)


def deobfuscate(source: str, mapping: ObfuscationMap) -> str:
    return _rename_tokens(source, mapping.inverse())


def obfuscate_file(path: str | Path, seed: int, out: str | Path | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.obf.py`` and its ``.map.json`` sidecar; returns both paths."""
    path = Path(path)
    text = path.read_bytes().decode("utf-8")
    result, mapping = obfuscate(text, seed)
    target = Path(out) if out else path.with_name(f"{path.stem}.obf{path.suffix}")
    target.write_bytes(result.encode("utf-8"))
    sidecar = target.with_name(target.name + ".map.json")
    sidecar.write_text(mapping.to_json(), encoding="utf-8")
    return target, sidecar
