"""Lexing, parsing and text preprocessing for the annotated input language.

The input language is line oriented: each formula sits on one physical line
and ends with a dot.  A formula may carry a weight annotation in square
brackets, e.g. ``[0.6] coin(heads).``, ``[0.2;0.4] rain.``, ``[0.8|win] happy.``
or, in query files, ``[?] win.``.  Meta statements (``#indep`` ... ``#endIndep``
and friends) occupy their own lines without a trailing dot.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "ParseError",
    "Const",
    "Num",
    "Var",
    "Interval",
    "Pool",
    "Func",
    "BinOp",
    "Atom",
    "Not",
    "And",
    "Or",
    "Rule",
    "Count",
    "CountElem",
    "Comparison",
    "Annotation",
    "AnnotatedFormula",
    "AnnotatedDisjunction",
    "DomainDecl",
    "MetaBlock",
    "strip_comments",
    "resolve_includes",
    "expand_macros",
    "parse_program",
    "parse_formula",
    "desugar_annotated_disjunction",
    "load_source",
    "formula_atoms",
    "formula_variables",
    "RESERVED_PREFIXES",
]

#: Identifier prefixes reserved for generated atoms.
RESERVED_PREFIXES = ("hp__", "condPr")


class ParseError(ValueError):
    """Raised for malformed input; carries an optional source location."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = ""):
        self.line = line
        self.source = source
        where = ""
        if source and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Num:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Interval:
    lo: "Term"
    hi: "Term"

    def __str__(self) -> str:
        return f"{self.lo}..{self.hi}"


@dataclass(frozen=True)
class Pool:
    """Alternatives inside one argument position, written ``a;b;c``."""

    alternatives: tuple

    def __str__(self) -> str:
        return ";".join(str(a) for a in self.alternatives)


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple

    def __str__(self) -> str:
        return f"{self.name}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Term"
    right: "Term"

    def __str__(self) -> str:
        return f"({self.left}{self.op}{self.right})"


Term = Union[Const, Num, Var, Interval, Pool, Func, BinOp]


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


def _term_key(t) -> tuple:
    """Sort key for ground terms: integers before symbols, integers numeric."""
    if isinstance(t, Num):
        return (0, t.value, "")
    if isinstance(t, Const):
        return (1, 0, t.name)
    if isinstance(t, Func):
        return (2, 0, t.name) + tuple(_term_key(a) for a in t.args)
    return (3, 0, str(t))


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()
    strong: bool = False

    def __str__(self) -> str:
        sign = "-" if self.strong else ""
        if not self.args:
            return sign + self.pred
        return f"{sign}{self.pred}({','.join(str(a) for a in self.args)})"

    @property
    def signature(self) -> tuple:
        return (("-" if self.strong else "") + self.pred, len(self.args))

    def sort_key(self) -> tuple:
        return (self.pred, self.strong, len(self.args)) + tuple(_term_key(a) for a in self.args)


@dataclass(frozen=True)
class Not:
    """Default negation (``not f``)."""

    sub: "Formula"

    def __str__(self) -> str:
        return f"not {_wrap(self.sub, 2)}"


@dataclass(frozen=True)
class And:
    items: tuple

    def __str__(self) -> str:
        if not self.items:
            return "#true"
        return " & ".join(_wrap(i, 2) for i in self.items)


@dataclass(frozen=True)
class Or:
    items: tuple

    def __str__(self) -> str:
        if not self.items:
            return "#false"
        return " | ".join(_wrap(i, 1) for i in self.items)


@dataclass(frozen=True)
class Rule:
    """``head :- body``; an empty head (``None``) makes an integrity constraint."""

    head: Optional["Formula"]
    body: tuple

    def __str__(self) -> str:
        body = ", ".join(str(b) for b in self.body)
        if self.head is None:
            return f":- {body}"
        if not self.body:
            return str(self.head)
        return f"{self.head} :- {body}"


@dataclass(frozen=True)
class CountElem:
    literal: "Formula"
    conditions: tuple = ()

    def __str__(self) -> str:
        if not self.conditions:
            return str(self.literal)
        return str(self.literal) + "".join(f" : {c}" for c in self.conditions)


@dataclass(frozen=True)
class Count:
    lower: Optional[int]
    elems: tuple
    upper: Optional[int]

    def __str__(self) -> str:
        lo = "" if self.lower is None else str(self.lower)
        hi = "" if self.upper is None else str(self.upper)
        return f"{lo}{{{', '.join(str(e) for e in self.elems)}}}{hi}"


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


Formula = Union[Atom, Not, And, Or, Rule, Count, Comparison]


def _precedence(f) -> int:
    if isinstance(f, Rule):
        return 0
    if isinstance(f, Or):
        return 1 if len(f.items) > 1 else 4
    if isinstance(f, And):
        return 2 if len(f.items) > 1 else 4
    if isinstance(f, Not):
        return 3
    return 4


def _wrap(f, parent: int) -> str:
    """Render ``f`` as an operand of an operator with precedence ``parent``."""
    text = str(f)
    return f"({text})" if _precedence(f) <= parent else text


# ---------------------------------------------------------------------------
# Annotated statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    """A weight annotation.

    ``kind`` is one of ``point``, ``interval``, ``query``, ``span`` or
    ``distribute``.  A conditional annotation has a non-``None`` ``condition``
    (``point``/``interval`` for weights, ``query`` for conditional queries).
    """

    kind: str
    lo: Optional[float] = None
    hi: Optional[float] = None
    condition: Optional[Formula] = None
    level: int = 1
    condition_text: str = ""

    @property
    def is_weight(self) -> bool:
        return self.kind in ("point", "interval", "distribute")

    @property
    def is_conditional(self) -> bool:
        return self.condition is not None


@dataclass
class AnnotatedFormula:
    annotation: Optional[Annotation]
    formula: Formula
    line: int = 0
    text: str = ""

    def __str__(self) -> str:
        return render_statement(self.annotation, self.formula)


@dataclass
class AnnotatedDisjunction:
    """``[p1] h1; [p2] h2 ::- body``."""

    alternatives: list
    body: tuple
    line: int = 0


@dataclass
class DomainDecl:
    """``#domain p(X).`` binds variable ``X`` to the extension of ``p``."""

    atom: Atom
    line: int = 0


@dataclass
class MetaBlock:
    """A ``#indep``-style region; ``kind`` names the block keyword."""

    kind: str
    items: list = field(default_factory=list)
    line: int = 0


Statement = Union[AnnotatedFormula, AnnotatedDisjunction, DomainDecl, MetaBlock]


def format_probability(x: float) -> str:
    """Shortest round-trip decimal (no exponent) with at most 16 significant digits."""
    if x == int(x):
        return str(int(x))
    return np.format_float_positional(float(x), precision=16, unique=True, fractional=False, trim="-")


def render_annotation(a: Optional[Annotation]) -> str:
    if a is None:
        return ""
    if a.kind == "query":
        inner = "?"
    elif a.kind == "span":
        inner = "."
    elif a.kind == "distribute":
        inner = ":"
    elif a.kind == "point":
        inner = format_probability(a.lo)
    else:
        inner = f"{format_probability(a.lo)};{format_probability(a.hi)}"
    if a.condition is not None:
        inner += f"|{a.condition}"
    return "[" * a.level + inner + "]" * a.level + " "


def render_statement(a: Optional[Annotation], f: Formula) -> str:
    return f"{render_annotation(a)}{f}."


# ---------------------------------------------------------------------------
# Text preprocessing
# ---------------------------------------------------------------------------


def strip_comments(text: str) -> str:
    """Blank out ``%`` line comments and ``%* ... *%`` block comments.

    Removed characters become spaces (newlines are kept) so that line and
    column positions of the remaining tokens are unchanged.
    """
    out = []
    i = 0
    n = len(text)
    line = 1
    while i < n:
        ch = text[i]
        if ch == "%":
            if i + 1 < n and text[i + 1] == "*":
                end = text.find("*%", i + 2)
                if end < 0:
                    raise ParseError("unterminated block comment '%*'", line)
                region = text[i : end + 2]
                out.append("".join("\n" if c == "\n" else " " for c in region))
                line += region.count("\n")
                i = end + 2
                continue
            end = text.find("\n", i)
            if end < 0:
                end = n
            out.append(" " * (end - i))
            i = end
            continue
        if ch == "\n":
            line += 1
        out.append(ch)
        i += 1
    return "".join(out)


_INCLUDE_RE = re.compile(r'^\s*#include\s+"([^"]+)"\s*$')
_RECURSIVE_SUFFIXES = (".prasp", ".hypoth", ".query", ".examples")


def resolve_includes(path: Union[str, Path], visited: Optional[set] = None) -> str:
    """Return the text of ``path`` with ``#include "file"`` lines spliced in.

    Included paths are resolved relative to the including file.  Included
    files are themselves scanned for includes only if they carry one of the
    program suffixes; anything else is inserted verbatim.
    """
    path = Path(path).resolve()
    visited = set() if visited is None else visited
    if path in visited:
        raise ParseError(f"include cycle through {path}")
    if not path.exists():
        raise ParseError(f"included file not found: {path}")
    visited = visited | {path}
    text = strip_comments(path.read_text(encoding="utf-8"))
    lines = text.split("\n")
    out = []
    for lineno, line in enumerate(lines, 1):
        m = _INCLUDE_RE.match(line)
        if not m:
            if line.strip().startswith("#include"):
                raise ParseError("malformed #include (expected #include \"file\")", lineno, str(path))
            out.append(line)
            continue
        target = (path.parent / m.group(1)).resolve()
        if target.suffix in _RECURSIVE_SUFFIXES:
            out.append(resolve_includes(target, visited))
        else:
            if not target.exists():
                raise ParseError(f"included file not found: {target}", lineno, str(path))
            out.append(strip_comments(target.read_text(encoding="utf-8")))
    return "\n".join(out)


_DEF_RE = re.compile(r"^\s*#def\s+([A-Za-z_][A-Za-z0-9_]*)\s*=(.*)$")


def expand_macros(text: str) -> str:
    """Expand ``#def name = content`` text macros below their definition.

    The definition line itself is replaced by an empty line.  Occurrences
    are matched as whole words and never inside ``#keywords``.  Macro
    bodies are expanded with the macros defined before them, so macros may
    refer to earlier macros.
    """
    macros: dict[str, str] = {}
    out = []
    for lineno, line in enumerate(text.split("\n"), 1):
        m = _DEF_RE.match(line)
        if m:
            name, body = m.group(1), m.group(2)
            body = body.split("%", 1)[0].strip()
            body = _apply_macros(body, macros)
            if name in macros:
                warnings.warn(f"line {lineno}: macro '{name}' redefined", stacklevel=2)
            macros[name] = body
            out.append("")
            continue
        out.append(_apply_macros(line, macros) if macros else line)
    return "\n".join(out)


def _apply_macros(line: str, macros: dict) -> str:
    for name, body in macros.items():
        line = re.sub(rf"(?<![#\w]){re.escape(name)}(?!\w)", lambda _m, b=body: b, line)
    return line


def load_source(path: Union[str, Path]) -> str:
    """Read a program file with includes, comments and macros processed."""
    return expand_macros(resolve_includes(path))


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'ident', 'var', 'meta', 'op', 'kw'
    text: str
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<meta>\#[A-Za-z_]+)
  | (?P<num>\d+\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|\d+)
  | (?P<op>::-|:-|\.\.|->|<-|!=|==|<=|>=|<>|[()\[\]{},;|&.:<>=+\-*/?!])
  | (?P<ident>[a-z][A-Za-z0-9_']*)
  | (?P<var>[A-Z_][A-Za-z0-9_']*)
    """,
    re.VERBOSE,
)


def tokenize(line: str, lineno: int = 0) -> list:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if not m:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno)
        kind = m.lastgroup
        text = m.group(kind)
        if kind == "op" and text == "." and pos + 1 < len(line) and line[pos + 1].isdigit():
            prev = tokens[-1].text if tokens else ""
            if prev in ("[", ";", "|", ","):
                m2 = re.compile(r"\.\d+").match(line, pos)
                text = "0" + m2.group(0)
                tokens.append(Token("num", text, pos))
                pos = m2.end()
                continue
        if kind != "ws":
            if kind == "ident" and text == "not":
                kind = "kw"
            tokens.append(Token(kind, text, pos))
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_CMP_OPS = {"==": "==", "=": "==", "!=": "!=", "<>": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}

_BLOCKS = {
    "#indep": "#endIndep",
    "#pIndep": "#endPIndep",
    "#indepVolat": "#endIndepVolat",
    "#pIndepVolat": "#endPIndepVolat",
    "#volat": "#endVolat",
}
_BLOCK_KIND = {
    "#indep": "indep",
    "#pIndep": "pindep",
    "#indepVolat": "indep_volat",
    "#pIndepVolat": "pindep_volat",
    "#volat": "volat",
}
_UNSUPPORTED_META = {
    "#indepGroups", "#pIndepGroups", "#gIndep", "#indepGroupsVolat",
    "#pIndepGroupsVolat", "#scala", "#script", "#external",
}


class _Parser:
    def __init__(self, tokens: Sequence[Token], line: int, source: str = "", allow_reserved: bool = False):
        self.toks = list(tokens)
        self.i = 0
        self.line = line
        self.source = source
        self.allow_reserved = allow_reserved

    # -- helpers ----------------------------------------------------------
    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.line, self.source)

    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.text == text and t.kind in ("op", "kw", "meta")

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of formula")
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise self.error(f"expected '{text}' but found '{t.text}'")
        return t

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def check_name(self, name: str) -> None:
        if not self.allow_reserved and name.startswith(RESERVED_PREFIXES):
            raise self.error(f"identifier '{name}' uses a reserved prefix")

    # -- terms ------------------------------------------------------------
    def term(self) -> Term:
        left = self.additive()
        if self.at(".."):
            self.next()
            right = self.additive()
            return Interval(left, right)
        return left

    def additive(self) -> Term:
        left = self.multiplicative()
        while self.at("+") or self.at("-"):
            op = self.next().text
            left = BinOp(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Term:
        left = self.unary_term()
        while self.at("*") or self.at("/"):
            op = self.next().text
            left = BinOp(op, left, self.unary_term())
        return left

    def unary_term(self) -> Term:
        if self.at("-"):
            self.next()
            t = self.unary_term()
            if isinstance(t, Num):
                return Num(-t.value)
            return BinOp("-", Num(0), t)
        return self.primary_term()

    def primary_term(self) -> Term:
        t = self.next()
        if t.kind == "num":
            if not re.fullmatch(r"\d+", t.text):
                raise self.error(f"non-integer term '{t.text}'")
            return Num(int(t.text))
        if t.kind == "var":
            return Var(t.text)
        if t.kind == "ident":
            self.check_name(t.text)
            if self.at("("):
                self.next()
                args = self.arguments()
                self.expect(")")
                return Func(t.text, tuple(args))
            return Const(t.text)
        if t.text == "(":
            inner = self.term()
            self.expect(")")
            return inner
        raise self.error(f"unexpected '{t.text}' in term")

    def arguments(self) -> list:
        args = [self.pooled_term()]
        while self.at(","):
            self.next()
            args.append(self.pooled_term())
        return args

    def pooled_term(self) -> Term:
        alts = [self.term()]
        while self.at(";"):
            self.next()
            alts.append(self.term())
        return alts[0] if len(alts) == 1 else Pool(tuple(alts))

    # -- formulas ---------------------------------------------------------
    def formula(self) -> Formula:
        left = self.disjunction()
        if self.at("->"):
            self.next()
            right = self.formula()
            return Or((Not(left), right))
        if self.at("<-"):
            self.next()
            right = self.formula()
            return Or((left, Not(right)))
        return left

    def disjunction(self) -> Formula:
        items = [self.conjunction()]
        while self.at("|"):
            self.next()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Formula:
        items = [self.unary()]
        while self.at("&"):
            self.next()
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self) -> Formula:
        if self.at("not"):
            self.next()
            return Not(self.unary())
        if self.at("!"):
            self.next()
            return Not(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of formula")
        if t.text == "(":
            self.next()
            f = self.formula()
            self.expect(")")
            return f
        if t.kind == "meta" and t.text in ("#true", "#false"):
            self.next()
            return And(()) if t.text == "#true" else Or(())
        if t.text == "{" or (t.kind == "meta" and t.text == "#count"):
            return self.count(None)
        if t.kind == "num" and (self.at("{", 1) or self.at("#count", 1)):
            self.next()
            return self.count(self._int(t))
        if t.text == "-" and self.peek(1) is not None and self.peek(1).kind == "ident":
            self.next()
            atom = self.atom_from_term(self.primary_term())
            return Atom(atom.pred, atom.args, strong=True)
        left = self.term()
        nxt = self.peek()
        if nxt is not None and nxt.kind == "op" and nxt.text in _CMP_OPS:
            self.next()
            return Comparison(_CMP_OPS[nxt.text], left, self.term())
        return self.atom_from_term(left)

    def _int(self, t: Token) -> int:
        if not re.fullmatch(r"\d+", t.text):
            raise self.error(f"count bound must be an integer, got '{t.text}'")
        return int(t.text)

    def atom_from_term(self, t: Term) -> Atom:
        if isinstance(t, Const):
            return Atom(t.name, ())
        if isinstance(t, Func):
            return Atom(t.name, t.args)
        raise self.error(f"expected an atom, found term '{t}'")

    def count(self, lower: Optional[int]) -> Count:
        if self.at("#count"):
            self.next()
        self.expect("{")
        elems = []
        if not self.at("}"):
            elems.append(self.count_elem())
            while self.at(",") or self.at(";"):
                self.next()
                elems.append(self.count_elem())
        self.expect("}")
        upper = None
        t = self.peek()
        if t is not None and t.kind == "num":
            self.next()
            upper = self._int(t)
        return Count(lower, tuple(elems), upper)

    def count_elem(self) -> CountElem:
        lit = self.literal()
        conds = []
        while self.at(":"):
            self.next()
            conds.append(self.literal())
        return CountElem(lit, tuple(conds))

    def literal(self) -> Formula:
        if self.at("not"):
            self.next()
            return Not(self.literal())
        if self.at("-") and self.peek(1) is not None and self.peek(1).kind == "ident":
            self.next()
            a = self.atom_from_term(self.primary_term())
            return Atom(a.pred, a.args, strong=True)
        left = self.term()
        nxt = self.peek()
        if nxt is not None and nxt.kind == "op" and nxt.text in _CMP_OPS:
            self.next()
            return Comparison(_CMP_OPS[nxt.text], left, self.term())
        return self.atom_from_term(left)

    def body(self) -> list:
        items = [self.formula()]
        while self.at(","):
            self.next()
            items.append(self.formula())
        return items

    def statement_formula(self) -> Formula:
        """Formula or rule up to the end of the token list."""
        if self.at(":-"):
            self.next()
            body = self.body()
            self._finish()
            return Rule(None, tuple(body))
        head = self.formula()
        if self.at(":-"):
            self.next()
            body = self.body()
            self._finish()
            return Rule(head, tuple(body))
        self._finish()
        return head

    def _finish(self) -> None:
        if not self.done():
            raise self.error(f"unexpected '{self.peek().text}'")


def _split_statements(tokens: list, lineno: int, source: str) -> list:
    """Split a line's tokens at top-level dots."""
    stmts = []
    depth = 0
    cur: list = []
    for t in tokens:
        if t.kind == "op" and t.text in "([{":
            depth += 1
        elif t.kind == "op" and t.text in ")]}":
            depth -= 1
        if t.kind == "op" and t.text == "." and depth == 0:
            if not cur:
                raise ParseError("empty statement", lineno, source)
            stmts.append(cur)
            cur = []
            continue
        cur.append(t)
    if cur:
        raise ParseError(
            "formula not terminated by '.' on this line (formulas must not contain line breaks)",
            lineno,
            source,
        )
    return stmts


def _parse_number(text: str, lineno: int, source: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed weight '{text}'", lineno, source) from None
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ParseError(f"weight {text} outside [0,1]", lineno, source)
    return value


def _parse_annotation(tokens: list, line: str, lineno: int, source: str, query_mode: bool) -> tuple:
    """Parse the leading annotation; return (Annotation, remaining tokens)."""
    level = 0
    while level < len(tokens) and tokens[level].text == "[":
        level += 1
    if level > 3:
        raise ParseError("at most three brackets allowed in an annotation", lineno, source)
    depth = 0
    end = None
    for j in range(level, len(tokens)):
        t = tokens[j]
        if t.text in ("(", "{", "["):
            depth += 1
        elif t.text in (")", "}"):
            depth -= 1
        elif t.text == "]":
            if depth == 0:
                end = j
                break
            depth -= 1
    if end is None:
        raise ParseError("unterminated annotation", lineno, source)
    for k in range(1, level):
        if end + k >= len(tokens) or tokens[end + k].text != "]":
            raise ParseError("unbalanced annotation brackets", lineno, source)
    inner = tokens[level:end]
    rest = tokens[end + level :]
    bar = None
    depth = 0
    for j, t in enumerate(inner):
        if t.text in ("(", "{"):
            depth += 1
        elif t.text in (")", "}"):
            depth -= 1
        elif t.text == "|" and depth == 0:
            bar = j
            break
    weight_toks = inner if bar is None else inner[:bar]
    condition = None
    condition_text = ""
    if bar is not None:
        ctoks = inner[bar + 1 :]
        if not ctoks:
            raise ParseError("empty condition in annotation", lineno, source)
        p = _Parser(ctoks, lineno, source)
        condition = p.formula()
        p._finish()
        last = ctoks[-1]
        condition_text = line[ctoks[0].col : last.col + len(last.text)].strip()
    texts = [t.text for t in weight_toks]
    if texts == ["?"]:
        kind, lo, hi = "query", None, None
    elif texts == ["."]:
        kind, lo, hi = "span", None, None
    elif texts == [":"]:
        kind, lo, hi = "distribute", None, None
        if level < 2:
            raise ParseError("'[:]' requires at least two brackets ([[:]])", lineno, source)
    elif len(texts) == 1 and weight_toks[0].kind == "num":
        kind = "point"
        lo = hi = _parse_number(texts[0], lineno, source)
    elif len(texts) == 3 and texts[1] == ";" and weight_toks[0].kind == "num" and weight_toks[2].kind == "num":
        kind = "interval"
        lo = _parse_number(texts[0], lineno, source)
        hi = _parse_number(texts[2], lineno, source)
        if hi < lo:
            raise ParseError(f"interval upper bound {hi} below lower bound {lo}", lineno, source)
    else:
        raise ParseError(f"malformed weight '{' '.join(texts)}'", lineno, source)
    if query_mode and kind in ("point", "interval", "distribute"):
        raise ParseError("numeric weights are not allowed in query files", lineno, source)
    if not query_mode and kind == "query":
        raise ParseError("'[?]' queries belong in query or hypothesis files", lineno, source)
    if kind == "span" and condition is not None:
        raise ParseError("'[.]' cannot be conditional", lineno, source)
    return Annotation(kind, lo, hi, condition, level, condition_text), rest


def _split_top(tokens: list, sep: str) -> list:
    parts, cur, depth = [], [], 0
    for t in tokens:
        if t.text in ("(", "[", "{"):
            depth += 1
        elif t.text in (")", "]", "}"):
            depth -= 1
        if t.text == sep and depth == 0:
            parts.append(cur)
            cur = []
        else:
            cur.append(t)
    parts.append(cur)
    return parts


def _parse_ad(tokens: list, line: str, lineno: int, source: str) -> AnnotatedDisjunction:
    parts = _split_top(tokens, "::-")
    if len(parts) != 2:
        raise ParseError("malformed annotated disjunction", lineno, source)
    head_toks, body_toks = parts
    alternatives = []
    for alt in _split_top(head_toks, ";"):
        if not alt or alt[0].text != "[":
            raise ParseError("every alternative of an annotated disjunction needs a weight", lineno, source)
        ann, rest = _parse_annotation(alt, line, lineno, source, query_mode=False)
        if ann.kind != "point" or ann.condition is not None or ann.level != 1:
            raise ParseError("annotated disjunction weights must be plain point probabilities", lineno, source)
        p = _Parser(rest, lineno, source)
        f = p.formula()
        p._finish()
        if not isinstance(f, Atom):
            raise ParseError("annotated disjunction alternatives must be atoms", lineno, source)
        alternatives.append((ann.lo, f))
    total = sum(w for w, _ in alternatives)
    if total > 1 + 1e-9:
        raise ParseError(f"annotated disjunction weights sum to {total} > 1", lineno, source)
    body: tuple = ()
    if body_toks:
        p = _Parser(body_toks, lineno, source)
        body = tuple(p.body())
        p._finish()
    return AnnotatedDisjunction(alternatives, body, lineno)


def parse_formula(text: str, allow_reserved: bool = False) -> Formula:
    """Parse a single formula (without annotation or trailing dot)."""
    text = text.strip()
    if text.endswith("."):
        text = text[:-1]
    p = _Parser(tokenize(text), 0, allow_reserved=allow_reserved)
    return p.statement_formula()


def parse_program(text: str, source: str = "", query_mode: bool = False) -> list:
    """Parse preprocessed program text into a list of statements.

    ``query_mode`` enforces the query-file rule that no numeric weights appear.
    Returns :class:`AnnotatedFormula`, :class:`AnnotatedDisjunction`,
    :class:`DomainDecl` and :class:`MetaBlock` objects in source order.
    """
    top: list = []
    stack: list = []  # open MetaBlocks

    def emit(item) -> None:
        (stack[-1].items if stack else top).append(item)

    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        tokens = tokenize(line, lineno)
        if not tokens:
            continue
        first = tokens[0]
        if first.kind == "meta" and first.text not in ("#count", "#domain", "#true", "#false"):
            key = first.text
            if len(tokens) != 1:
                raise ParseError(f"meta statement {key} must be alone on its line", lineno, source)
            if key in _BLOCKS:
                if stack:
                    raise ParseError(f"{key} cannot be nested inside {stack[-1].kind}", lineno, source)
                stack.append(MetaBlock(_BLOCK_KIND[key], [], lineno))
                continue
            closing = {v: k for k, v in _BLOCKS.items()}
            if key in closing:
                if not stack or stack[-1].kind != _BLOCK_KIND[closing[key]]:
                    raise ParseError(f"{key} without matching {closing[key]}", lineno, source)
                top.append(stack.pop())
                continue
            if key in _UNSUPPORTED_META:
                raise ParseError(f"meta statement {key} is not supported in prasp-lite", lineno, source)
            raise ParseError(f"unknown meta statement {key}", lineno, source)
        for stmt in _split_statements(tokens, lineno, source):
            emit(_parse_statement(stmt, line, lineno, source, query_mode))
    if stack:
        raise ParseError(f"unterminated block opened at line {stack[-1].line}", stack[-1].line, source)
    for item in top:
        if isinstance(item, MetaBlock) and item.kind != "volat":
            for f in item.items:
                if not isinstance(f, AnnotatedFormula) or f.annotation is None:
                    raise ParseError("independence blocks may only contain weighted formulas", f.line, source)
                if f.annotation.kind not in ("point", "interval"):
                    raise ParseError("independence blocks need numeric weights", f.line, source)
                if f.annotation.condition is not None:
                    raise ParseError("conditional weights are not allowed in independence blocks", f.line, source)
    return top


def _parse_statement(stmt: list, line: str, lineno: int, source: str, query_mode: bool):
    if any(t.text == "::-" for t in stmt):
        if query_mode:
            raise ParseError("annotated disjunctions are not allowed in query files", lineno, source)
        return _parse_ad(stmt, line, lineno, source)
    if stmt[0].kind == "meta" and stmt[0].text == "#domain":
        p = _Parser(stmt[1:], lineno, source)
        f = p.formula()
        p._finish()
        if not isinstance(f, Atom):
            raise ParseError("#domain expects an atom", lineno, source)
        return DomainDecl(f, lineno)
    annotation = None
    rest = stmt
    if stmt[0].text == "[":
        annotation, rest = _parse_annotation(stmt, line, lineno, source, query_mode)
    if not rest:
        raise ParseError("annotation without formula", lineno, source)
    allow = False
    if rest[0].text == "condPr" and annotation is not None and annotation.level >= 2:
        allow = True
    p = _Parser(rest, lineno, source, allow_reserved=allow)
    formula = p.statement_formula()
    text = line[rest[0].col : rest[-1].col + len(rest[-1].text)].strip()
    return AnnotatedFormula(annotation, formula, lineno, text)


# ---------------------------------------------------------------------------
# Annotated disjunctions
# ---------------------------------------------------------------------------


def desugar_annotated_disjunction(ad: AnnotatedDisjunction, index: int = 0) -> tuple:
    """Rewrite an annotated disjunction into weighted helper facts and rules.

    Alternative ``i`` fires through helper ``hp__ad_<index>_<i>`` with
    conditional weight ``q_i = p_i / prod_{j<i} (1 - q_j)`` and only when no
    earlier helper fired.  Returns ``(weighted_helpers, rules)`` where
    ``weighted_helpers`` is a list of :class:`AnnotatedFormula` (the helpers
    belong to one implicit mutual-independence group) and ``rules`` a list of
    unannotated :class:`AnnotatedFormula`.
    """
    helpers = []
    rules = []
    previous: list = []
    remaining = 1.0
    for i, (p, head) in enumerate(ad.alternatives):
        if len(ad.alternatives) == 1 and abs(p - 1.0) < 1e-12:
            rules.append(AnnotatedFormula(None, Rule(head, tuple(ad.body)), ad.line))
            break
        if remaining <= 1e-12:
            if p > 1e-12:
                raise ParseError("annotated disjunction weights exceed 1", ad.line)
            break
        q = min(1.0, p / remaining)
        h = Atom(f"hp__ad_{index}_{i}")
        body = tuple(ad.body) + (h,) + tuple(Not(x) for x in previous)
        rules.append(AnnotatedFormula(None, Rule(head, body), ad.line))
        if q >= 1.0 - 1e-12:
            rules.append(AnnotatedFormula(None, h, ad.line))
            previous.append(h)
            remaining = 0.0
            continue
        helpers.append(AnnotatedFormula(Annotation("point", q, q), h, ad.line))
        previous.append(h)
        remaining *= 1.0 - q
    return helpers, rules


# ---------------------------------------------------------------------------
# Formula utilities
# ---------------------------------------------------------------------------


def formula_atoms(f) -> Iterable[Atom]:
    """Yield every atom occurring in ``f`` (count conditions included)."""
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from formula_atoms(f.sub)
    elif isinstance(f, (And, Or)):
        for g in f.items:
            yield from formula_atoms(g)
    elif isinstance(f, Rule):
        if f.head is not None:
            yield from formula_atoms(f.head)
        for b in f.body:
            yield from formula_atoms(b)
    elif isinstance(f, Count):
        for e in f.elems:
            yield from formula_atoms(e.literal)
            for c in e.conditions:
                yield from formula_atoms(c)


def term_variables(t) -> set:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Func):
        return set().union(*(term_variables(a) for a in t.args)) if t.args else set()
    if isinstance(t, (Interval,)):
        return term_variables(t.lo) | term_variables(t.hi)
    if isinstance(t, BinOp):
        return term_variables(t.left) | term_variables(t.right)
    if isinstance(t, Pool):
        return set().union(*(term_variables(a) for a in t.alternatives))
    return set()


def formula_variables(f, include_local: bool = True) -> set:
    """Variables of ``f``; count-element variables bound by their conditions
    are omitted unless ``include_local``."""
    if isinstance(f, Atom):
        return set().union(*(term_variables(a) for a in f.args)) if f.args else set()
    if isinstance(f, Comparison):
        return term_variables(f.left) | term_variables(f.right)
    if isinstance(f, Not):
        return formula_variables(f.sub, include_local)
    if isinstance(f, (And, Or)):
        return set().union(*(formula_variables(g, include_local) for g in f.items)) if f.items else set()
    if isinstance(f, Rule):
        out = set() if f.head is None else formula_variables(f.head, include_local)
        for b in f.body:
            out |= formula_variables(b, include_local)
        return out
    if isinstance(f, Count):
        out: set = set()
        for e in f.elems:
            ev = formula_variables(e.literal, True)
            cv = set()
            for c in e.conditions:
                cv |= formula_variables(c, True)
            if include_local or not e.conditions:
                out |= ev | cv
            else:
                out |= ev - cv
        return out
    return set()
