"""Text format for reason theories, MAT bindings and conflict declarations.

Line-oriented: `reason`, `mat`, `rule`, `prefer` and `conflict`
declarations, one per line, with `#` comments.  Variables start with an
uppercase letter, constants with a lowercase one.  Printing is canonical
(kind-ordered, single spaces) and round-trip stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from . import ltlf
from .reasons import (
    AndExpr, Const, Default, MatHead, OrExpr, PriorityRelation, ReasonAtom,
    ReasonExpr, ReasonTheory, Term, Var, expr_atoms,
)


class DslError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__("line %d, col %d: %s" % (line, col, message))
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Tokenizer

_PUNCT = ("<>", ":=", "=>", "(", ")", ",", ":", ">", "/", "|", "&", "!")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "ident" | "int" | punctuation literal | "eol"
    text: str
    line: int
    col: int


def _tokenize_line(text: str, line_no: int) -> list[_Tok]:
    toks: list[_Tok] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        matched = False
        for punct in _PUNCT:
            if text.startswith(punct, i):
                toks.append(_Tok(punct, punct, line_no, i + 1))
                i += len(punct)
                matched = True
                break
        if matched:
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("ident", text[i:j], line_no, i + 1))
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("int", text[i:j], line_no, i + 1))
            i = j
            continue
        raise DslError("unexpected character %r" % ch, line_no, i + 1)
    toks.append(_Tok("eol", "", line_no, n + 1))
    return toks


class _Cursor:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        tok = self.toks[self.pos]
        if tok.kind != "eol":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: Optional[str] = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind:
            raise DslError(
                "expected %s, found %r" % (what or repr(kind), tok.text or "end of line"),
                tok.line, tok.col)
        return self.next()

    def at_end(self) -> bool:
        return self.peek().kind == "eol"

    def expect_end(self) -> None:
        tok = self.peek()
        if tok.kind != "eol":
            raise DslError("trailing input %r" % tok.text, tok.line, tok.col)


# ---------------------------------------------------------------------------
# Document model


@dataclass(frozen=True)
class ReasonDecl:
    name: str
    arity: int


@dataclass(frozen=True)
class MatDecl:
    head: MatHead
    formula: ltlf.Formula


@dataclass(frozen=True)
class RuleDecl:
    default: Default


@dataclass(frozen=True)
class PreferDecl:
    higher: str
    lower: str


@dataclass(frozen=True)
class ConflictDecl:
    a: MatHead
    b: MatHead


Declaration = Union[ReasonDecl, MatDecl, RuleDecl, PreferDecl, ConflictDecl]


@dataclass(frozen=True)
class TheoryDocument:
    declarations: tuple[Declaration, ...] = ()

    def reasons(self) -> list[ReasonDecl]:
        return [d for d in self.declarations if isinstance(d, ReasonDecl)]

    def mats(self) -> list[MatDecl]:
        return [d for d in self.declarations if isinstance(d, MatDecl)]

    def rules(self) -> list[RuleDecl]:
        return [d for d in self.declarations if isinstance(d, RuleDecl)]

    def prefers(self) -> list[PreferDecl]:
        return [d for d in self.declarations if isinstance(d, PreferDecl)]

    def conflicts(self) -> list[ConflictDecl]:
        return [d for d in self.declarations if isinstance(d, ConflictDecl)]


# ---------------------------------------------------------------------------
# Parsing


def _parse_term(cur: _Cursor) -> Term:
    tok = cur.expect("ident", "a term")
    if tok.text[0].isupper():
        return Var(tok.text)
    return Const(tok.text)


def _parse_term_list(cur: _Cursor) -> tuple[Term, ...]:
    cur.expect("(")
    args: list[Term] = []
    if cur.peek().kind != ")":
        args.append(_parse_term(cur))
        while cur.peek().kind == ",":
            cur.next()
            args.append(_parse_term(cur))
    cur.expect(")")
    return tuple(args)


def _parse_reason_atom(cur: _Cursor) -> ReasonAtom:
    name = cur.expect("ident", "a predicate name")
    args = _parse_term_list(cur) if cur.peek().kind == "(" else ()
    return ReasonAtom(name.text, args)


def _parse_rexpr(cur: _Cursor) -> ReasonExpr:
    def conj() -> ReasonExpr:
        atoms = [_parse_reason_atom(cur)]
        while cur.peek().kind == "&":
            cur.next()
            atoms.append(_parse_reason_atom(cur))
        if len(atoms) == 1:
            return atoms[0]
        return AndExpr(tuple(atoms))

    disj = [conj()]
    while cur.peek().kind == "|":
        cur.next()
        disj.append(conj())
    if len(disj) == 1:
        return disj[0]
    return OrExpr(tuple(disj))


def _parse_mat_head(cur: _Cursor) -> MatHead:
    name = cur.expect("ident", "a MAT name")
    args = _parse_term_list(cur) if cur.peek().kind == "(" else ()
    return MatHead(name.text, args)


_LTLF_UNARY = {"X": ltlf.Next, "WX": ltlf.WeakNext, "F": ltlf.Eventually, "G": ltlf.Globally}


def _parse_ltlf_unary(cur: _Cursor) -> ltlf.Formula:
    tok = cur.peek()
    if tok.kind == "!":
        cur.next()
        return ltlf.make_not(_parse_ltlf_unary(cur))
    if tok.kind == "(":
        cur.next()
        inner = _parse_ltlf_or(cur)
        cur.expect(")")
        return inner
    if tok.kind == "ident":
        if tok.text in _LTLF_UNARY:
            cur.next()
            return _LTLF_UNARY[tok.text](_parse_ltlf_unary(cur))
        if tok.text == "true":
            cur.next()
            return ltlf.TRUE
        if tok.text == "false":
            cur.next()
            return ltlf.FALSE
        if tok.text[0].isupper():
            raise DslError("atom names must start lowercase: %r" % tok.text, tok.line, tok.col)
        cur.next()
        args = _parse_term_list(cur) if cur.peek().kind == "(" else ()
        return ltlf.Atom(ltlf.Prop(tok.text, args))
    raise DslError("expected a formula, found %r" % (tok.text or "end of line"), tok.line, tok.col)


def _parse_ltlf_temporal(cur: _Cursor) -> ltlf.Formula:
    left = _parse_ltlf_unary(cur)
    while cur.peek().kind == "ident" and cur.peek().text in ("U", "R"):
        op = cur.next().text
        right = _parse_ltlf_unary(cur)
        left = ltlf.Until(left, right) if op == "U" else ltlf.Release(left, right)
    return left


def _parse_ltlf_and(cur: _Cursor) -> ltlf.Formula:
    parts = [_parse_ltlf_temporal(cur)]
    while cur.peek().kind == "&":
        cur.next()
        parts.append(_parse_ltlf_temporal(cur))
    if len(parts) == 1:
        return parts[0]
    return ltlf.make_and(parts)


def _parse_ltlf_or(cur: _Cursor) -> ltlf.Formula:
    parts = [_parse_ltlf_and(cur)]
    while cur.peek().kind == "|":
        cur.next()
        parts.append(_parse_ltlf_and(cur))
    if len(parts) == 1:
        return parts[0]
    return ltlf.make_or(parts)


def parse_ltlf(text: str, line_no: int = 1) -> ltlf.Formula:
    """Parse a single LTLf formula."""
    cur = _Cursor(_tokenize_line(text, line_no))
    if cur.at_end():
        raise DslError("expected a formula", line_no, cur.peek().col)
    formula = _parse_ltlf_or(cur)
    cur.expect_end()
    return formula


def _parse_line(cur: _Cursor) -> Declaration:
    tok = cur.expect("ident", "a declaration keyword")
    if tok.text == "reason":
        name = cur.expect("ident", "a predicate name")
        cur.expect("/")
        arity = cur.expect("int", "an arity")
        decl: Declaration = ReasonDecl(name.text, int(arity.text))
    elif tok.text == "mat":
        name = cur.expect("ident", "a MAT name")
        head_tok = cur.peek()
        args = _parse_term_list(cur)
        for arg in args:
            if not isinstance(arg, Var):
                raise DslError("mat declaration arguments must be variables",
                               head_tok.line, head_tok.col)
        cur.expect(":=")
        formula = _parse_ltlf_or(cur)
        decl = MatDecl(MatHead(name.text, args), formula)
    elif tok.text == "rule":
        rule_id = cur.expect("ident", "a rule id")
        cur.expect(":")
        antecedent = _parse_rexpr(cur)
        cur.expect("=>")
        head = _parse_mat_head(cur)
        decl = RuleDecl(Default(rule_id.text, antecedent, head))
    elif tok.text == "prefer":
        higher = cur.expect("ident", "a rule id")
        cur.expect(">")
        lower = cur.expect("ident", "a rule id")
        decl = PreferDecl(higher=higher.text, lower=lower.text)
    elif tok.text == "conflict":
        a = _parse_mat_head(cur)
        cur.expect("<>")
        b = _parse_mat_head(cur)
        decl = ConflictDecl(a, b)
    else:
        raise DslError("unknown declaration %r" % tok.text, tok.line, tok.col)
    cur.expect_end()
    return decl


def _check_document(doc: TheoryDocument) -> None:
    reason_sigs: dict[str, int] = {}
    for d in doc.reasons():
        reason_sigs[d.name] = d.arity
    mat_sigs: dict[str, int] = {}
    for d in doc.mats():
        mat_sigs[d.head.name] = len(d.head.args)
    rule_ids = set()
    for r in doc.rules():
        rule_ids.add(r.default.id)
        for atom in expr_atoms(r.default.antecedent):
            if atom.predicate not in reason_sigs:
                raise DslError("undeclared reason predicate %r" % atom.predicate, 0, 0)
            if reason_sigs[atom.predicate] != len(atom.args):
                raise DslError("arity mismatch for %s" % atom.predicate, 0, 0)
        head = r.default.conclusion
        if head.name not in mat_sigs:
            raise DslError("undeclared MAT %r" % head.name, 0, 0)
        if mat_sigs[head.name] != len(head.args):
            raise DslError("arity mismatch for MAT %s" % head.name, 0, 0)
    for p in doc.prefers():
        for rid in (p.higher, p.lower):
            if rid not in rule_ids:
                raise DslError("prefer references unknown rule %r" % rid, 0, 0)
    for c in doc.conflicts():
        for head in (c.a, c.b):
            if head.name not in mat_sigs:
                raise DslError("conflict references undeclared MAT %r" % head.name, 0, 0)
            if mat_sigs[head.name] != len(head.args):
                raise DslError("arity mismatch for MAT %s" % head.name, 0, 0)


def parse_theory(text: str) -> TheoryDocument:
    """Parse a theory document; rejects undeclared symbols and bad arities."""
    decls: list[Declaration] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        toks = _tokenize_line(raw, line_no)
        cur = _Cursor(toks)
        if cur.at_end():
            continue
        decls.append(_parse_line(cur))
    doc = TheoryDocument(tuple(decls))
    _check_document(doc)
    return doc


# ---------------------------------------------------------------------------
# Printing


def _print_decl(decl: Declaration) -> str:
    if isinstance(decl, ReasonDecl):
        return "reason %s/%d" % (decl.name, decl.arity)
    if isinstance(decl, MatDecl):
        return "mat %s(%s) := %s" % (
            decl.head.name, ", ".join(str(a) for a in decl.head.args), decl.formula)
    if isinstance(decl, RuleDecl):
        return "rule %s" % decl.default
    if isinstance(decl, PreferDecl):
        return "prefer %s > %s" % (decl.higher, decl.lower)
    if isinstance(decl, ConflictDecl):
        return "conflict %s <> %s" % (decl.a, decl.b)
    raise TypeError(decl)


def print_theory(doc: TheoryDocument) -> str:
    """Canonical text: kind order reason/mat/rule/prefer/conflict, source
    order within each kind, one declaration per line."""
    lines = []
    for group in (doc.reasons(), doc.mats(), doc.rules(), doc.prefers(), doc.conflicts()):
        lines.extend(_print_decl(d) for d in group)
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# Document <-> runtime objects


def theory_from_document(doc: TheoryDocument) -> ReasonTheory:
    pairs = frozenset((p.lower, p.higher) for p in doc.prefers())
    return ReasonTheory(
        reason_signatures={d.name: d.arity for d in doc.reasons()},
        mat_signatures={d.head.name: len(d.head.args) for d in doc.mats()},
        defaults=tuple(r.default for r in doc.rules()),
        priority=PriorityRelation(pairs),
    )


def mat_definitions_from_document(doc: TheoryDocument) -> dict[str, ltlf.MatDefinition]:
    return {d.head.name: ltlf.MatDefinition(d.head, d.formula) for d in doc.mats()}


def conflict_pairs_from_document(doc: TheoryDocument) -> tuple[tuple[MatHead, MatHead], ...]:
    return tuple((c.a, c.b) for c in doc.conflicts())


def document_from_parts(
    theory: ReasonTheory,
    definitions: Optional[dict[str, ltlf.MatDefinition]] = None,
    conflict_pairs: tuple[tuple[MatHead, MatHead], ...] = (),
) -> TheoryDocument:
    """Rebuild a canonical document from runtime objects.

    MAT names without an explicit definition are declared with a vacuous
    `true` template so the document stays self-contained.
    """
    decls: list[Declaration] = []
    for name, arity in theory.reason_signatures.items():
        decls.append(ReasonDecl(name, arity))
    definitions = definitions or {}
    for name, arity in theory.mat_signatures.items():
        defn = definitions.get(name)
        if defn is not None:
            decls.append(MatDecl(defn.head, defn.template))
        else:
            head = MatHead(name, tuple(Var("V%d" % i) for i in range(arity)))
            decls.append(MatDecl(head, ltlf.TRUE))
    for default in theory.defaults:
        decls.append(RuleDecl(default))
    for lower, higher in sorted(theory.priority.pairs):
        decls.append(PreferDecl(higher=higher, lower=lower))
    for a, b in conflict_pairs:
        decls.append(ConflictDecl(a, b))
    return TheoryDocument(tuple(decls))


def parse_fact_atom(text: str) -> ReasonAtom:
    """Parse one ground fact like `D(l)`."""
    cur = _Cursor(_tokenize_line(text, 1))
    atom = _parse_reason_atom(cur)
    cur.expect_end()
    if not atom.is_ground():
        raise DslError("fact must be ground: %s" % atom, 1, 1)
    return atom


def parse_mat_head_text(text: str) -> MatHead:
    cur = _Cursor(_tokenize_line(text, 1))
    head = _parse_mat_head(cur)
    cur.expect_end()
    return head


def parse_rexpr_text(text: str) -> ReasonExpr:
    cur = _Cursor(_tokenize_line(text, 1))
    expr = _parse_rexpr(cur)
    cur.expect_end()
    return expr
