"""Finite-trace temporal logic for macro action types.

MAT heads from the reason layer are bound to LTLf templates here.  The
Guard evaluates actions by progressing the bound formulas against the
labels each step produces; conflicts between MATs are decided by declared
pattern pairs, optionally backed by a bounded satisfiability search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .reasons import Const, ContractViolation, MatHead, Term, Var


class MatLogicError(Exception):
    pass


class DefinitionError(MatLogicError):
    """A MAT head has no (matching) formula definition."""


# ---------------------------------------------------------------------------
# Propositions and formulas


@dataclass(frozen=True)
class Prop:
    name: str
    args: tuple[Term, ...] = ()

    def is_ground(self) -> bool:
        return all(isinstance(a, Const) for a in self.args)

    def substitute(self, subst: Mapping[str, Const]) -> "Prop":
        return Prop(self.name, tuple(
            subst.get(a.name, a) if isinstance(a, Var) else a for a in self.args))

    def __str__(self):
        if not self.args:
            return self.name
        return "%s(%s)" % (self.name, ", ".join(str(a) for a in self.args))


@dataclass(frozen=True)
class TrueF:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom:
    prop: Prop

    def __str__(self):
        return str(self.prop)


@dataclass(frozen=True)
class Not:
    sub: "Formula"

    def __str__(self):
        return "!%s" % _paren(self.sub, _UNARY)


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __str__(self):
        return " & ".join(_paren(c, _AND) for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __str__(self):
        return " | ".join(_paren(c, _OR) for c in self.children)


@dataclass(frozen=True)
class Next:
    sub: "Formula"

    def __str__(self):
        return "X %s" % _paren(self.sub, _UNARY)


@dataclass(frozen=True)
class WeakNext:
    sub: "Formula"

    def __str__(self):
        return "WX %s" % _paren(self.sub, _UNARY)


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return "%s U %s" % (_paren(self.left, _TEMPORAL_BIN), _paren(self.right, _TEMPORAL_BIN, right=True))


@dataclass(frozen=True)
class Release:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return "%s R %s" % (_paren(self.left, _TEMPORAL_BIN), _paren(self.right, _TEMPORAL_BIN, right=True))


@dataclass(frozen=True)
class Eventually:
    sub: "Formula"

    def __str__(self):
        return "F %s" % _paren(self.sub, _UNARY)


@dataclass(frozen=True)
class Globally:
    sub: "Formula"

    def __str__(self):
        return "G %s" % _paren(self.sub, _UNARY)


Formula = Union[TrueF, FalseF, Atom, Not, And, Or, Next, WeakNext, Until, Release, Eventually, Globally]

TRUE = TrueF()
FALSE = FalseF()

# Precedence levels: higher binds tighter.
_OR, _AND, _TEMPORAL_BIN, _UNARY = 1, 2, 3, 4


def _level(f: Formula) -> int:
    if isinstance(f, Or):
        return _OR
    if isinstance(f, And):
        return _AND
    if isinstance(f, (Until, Release)):
        return _TEMPORAL_BIN
    return _UNARY + 1 if isinstance(f, (TrueF, FalseF, Atom)) else _UNARY


def _paren(f: Formula, parent_level: int, right: bool = False) -> str:
    level = _level(f)
    if level < parent_level or (right and level == parent_level == _TEMPORAL_BIN):
        return "(%s)" % f
    # Left-associative binaries: a U b U c parses as (a U b) U c, so a right
    # operand at the same level needs parentheses (handled above); chains of
    # & / | are flattened into one node so same-level children are safe.
    return str(f)


# ---------------------------------------------------------------------------
# Simplifying constructors


def make_not(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Not):
        return f.sub
    return Not(f)


def make_and(children: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for child in children:
        if isinstance(child, FalseF):
            return FALSE
        if isinstance(child, TrueF):
            continue
        if isinstance(child, And):
            for sub in child.children:
                if sub not in flat:
                    flat.append(sub)
        elif child not in flat:
            flat.append(child)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def make_or(children: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for child in children:
        if isinstance(child, TrueF):
            return TRUE
        if isinstance(child, FalseF):
            continue
        if isinstance(child, Or):
            for sub in child.children:
                if sub not in flat:
                    flat.append(sub)
        elif child not in flat:
            flat.append(child)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def simplify(f: Formula) -> Formula:
    """Canonical form: True/False absorption, idempotence, flattening."""
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Not):
        return make_not(simplify(f.sub))
    if isinstance(f, And):
        return make_and(simplify(c) for c in f.children)
    if isinstance(f, Or):
        return make_or(simplify(c) for c in f.children)
    if isinstance(f, Next):
        return Next(simplify(f.sub))
    if isinstance(f, WeakNext):
        return WeakNext(simplify(f.sub))
    if isinstance(f, Until):
        return Until(simplify(f.left), simplify(f.right))
    if isinstance(f, Release):
        return Release(simplify(f.left), simplify(f.right))
    if isinstance(f, Eventually):
        return Eventually(simplify(f.sub))
    if isinstance(f, Globally):
        return Globally(simplify(f.sub))
    raise MatLogicError("not a formula: %r" % (f,))


def formula_props(f: Formula) -> set[Prop]:
    if isinstance(f, Atom):
        return {f.prop}
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, (Not, Next, WeakNext, Eventually, Globally)):
        return formula_props(f.sub)
    if isinstance(f, (And, Or)):
        out: set[Prop] = set()
        for c in f.children:
            out |= formula_props(c)
        return out
    return formula_props(f.left) | formula_props(f.right)


def formula_is_ground(f: Formula) -> bool:
    return all(p.is_ground() for p in formula_props(f))


def substitute_formula(f: Formula, subst: Mapping[str, Const]) -> Formula:
    if isinstance(f, Atom):
        return Atom(f.prop.substitute(subst))
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, (Not, Next, WeakNext, Eventually, Globally)):
        return type(f)(substitute_formula(f.sub, subst))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(substitute_formula(c, subst) for c in f.children))
    return type(f)(substitute_formula(f.left, subst), substitute_formula(f.right, subst))


# ---------------------------------------------------------------------------
# Labels, progression, finite-trace evaluation

Label = frozenset  # of ground Prop


def label_of(*props: Prop) -> Label:
    for p in props:
        if not p.is_ground():
            raise ContractViolation("label atoms must be ground: %s" % p)
    return frozenset(props)


def progress(f: Formula, label: Label) -> Formula:
    """Residual obligation after observing one step, simplified."""
    if not formula_is_ground(f):
        raise ContractViolation("progress requires a ground formula: %s" % f)
    return _progress(f, label)


def _progress(f: Formula, label: Label) -> Formula:
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Atom):
        return TRUE if f.prop in label else FALSE
    if isinstance(f, Not):
        return make_not(_progress(f.sub, label))
    if isinstance(f, And):
        return make_and(_progress(c, label) for c in f.children)
    if isinstance(f, Or):
        return make_or(_progress(c, label) for c in f.children)
    if isinstance(f, (Next, WeakNext)):
        return simplify(f.sub)
    if isinstance(f, Until):
        return make_or([
            _progress(f.right, label),
            make_and([_progress(f.left, label), Until(simplify(f.left), simplify(f.right))]),
        ])
    if isinstance(f, Release):
        return make_and([
            _progress(f.right, label),
            make_or([_progress(f.left, label), Release(simplify(f.left), simplify(f.right))]),
        ])
    if isinstance(f, Eventually):
        return make_or([_progress(f.sub, label), Eventually(simplify(f.sub))])
    if isinstance(f, Globally):
        return make_and([_progress(f.sub, label), Globally(simplify(f.sub))])
    raise MatLogicError("not a formula: %r" % (f,))


def accept_empty(f: Formula) -> bool:
    """Whether a residual obligation is met with no further steps."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return False
    if isinstance(f, Not):
        return not accept_empty(f.sub)
    if isinstance(f, And):
        return all(accept_empty(c) for c in f.children)
    if isinstance(f, Or):
        return any(accept_empty(c) for c in f.children)
    if isinstance(f, (Next, Eventually, Until)):
        return False
    if isinstance(f, (WeakNext, Globally, Release)):
        return True
    raise MatLogicError("not a formula: %r" % (f,))


def evaluate(f: Formula, trace: Sequence[Label]) -> bool:
    """Standard LTLf satisfaction on a non-empty finite trace."""
    if not trace:
        raise ContractViolation("evaluate requires a non-empty trace")
    if not formula_is_ground(f):
        raise ContractViolation("evaluate requires a ground formula: %s" % f)
    return _sat(f, trace, 0)


def _sat(f: Formula, trace: Sequence[Label], i: int) -> bool:
    last = len(trace) - 1
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return f.prop in trace[i]
    if isinstance(f, Not):
        return not _sat(f.sub, trace, i)
    if isinstance(f, And):
        return all(_sat(c, trace, i) for c in f.children)
    if isinstance(f, Or):
        return any(_sat(c, trace, i) for c in f.children)
    if isinstance(f, Next):
        return i < last and _sat(f.sub, trace, i + 1)
    if isinstance(f, WeakNext):
        return i >= last or _sat(f.sub, trace, i + 1)
    if isinstance(f, Until):
        for k in range(i, last + 1):
            if _sat(f.right, trace, k):
                return True
            if not _sat(f.left, trace, k):
                return False
        return False
    if isinstance(f, Release):
        for k in range(i, last + 1):
            if not _sat(f.right, trace, k):
                return False
            if _sat(f.left, trace, k):
                return True
        return True
    if isinstance(f, Eventually):
        return any(_sat(f.sub, trace, k) for k in range(i, last + 1))
    if isinstance(f, Globally):
        return all(_sat(f.sub, trace, k) for k in range(i, last + 1))
    raise MatLogicError("not a formula: %r" % (f,))


# ---------------------------------------------------------------------------
# MAT definitions and monitors


@dataclass(frozen=True)
class MatDefinition:
    head: MatHead  # pattern; may contain variables
    template: Formula

    def __post_init__(self):
        head_vars = {a.name for a in self.head.args if isinstance(a, Var)}
        for prop in formula_props(self.template):
            for arg in prop.args:
                if isinstance(arg, Var) and arg.name not in head_vars:
                    raise ContractViolation(
                        "template variable %s not bound by head %s" % (arg.name, self.head))


def instantiate(defn: MatDefinition, head: MatHead) -> Formula:
    """Ground the definition's template with the constants of `head`."""
    if defn.head.name != head.name or len(defn.head.args) != len(head.args):
        raise DefinitionError("head %s does not match definition %s" % (head, defn.head))
    if not head.is_ground():
        raise ContractViolation("instantiate requires a ground head: %s" % head)
    subst: dict[str, Const] = {}
    for pat, val in zip(defn.head.args, head.args):
        assert isinstance(val, Const)
        if isinstance(pat, Const):
            if pat.name != val.name:
                raise DefinitionError("head %s does not match definition %s" % (head, defn.head))
        else:
            if subst.get(pat.name, val).name != val.name:
                raise DefinitionError("inconsistent binding for %s in %s" % (pat.name, head))
            subst[pat.name] = val
    return simplify(substitute_formula(defn.template, subst))


PENDING, SATISFIED, VIOLATED = "pending", "satisfied", "violated"


def _status_of(f: Formula) -> str:
    if isinstance(f, TrueF):
        return SATISFIED
    if isinstance(f, FalseF):
        return VIOLATED
    return PENDING


@dataclass(frozen=True)
class Monitor:
    mat: MatHead
    current: Formula
    status: str = PENDING

    @classmethod
    def start(cls, mat: MatHead, formula: Formula) -> "Monitor":
        f = simplify(formula)
        return cls(mat=mat, current=f, status=_status_of(f))


def step_monitor(monitor: Monitor, label: Label, last: bool = False) -> Monitor:
    """Progress a pending monitor one step; settled monitors are absorbing.

    With ``last=True`` the label is the final position of the trace, so the
    residual is decided by single-position semantics (a pending X obligation
    has no successor to refer to and fails, WX succeeds, an unmet eventuality
    becomes a violation)."""
    if monitor.status != PENDING:
        return monitor
    if last:
        residual = TRUE if evaluate(monitor.current, [label]) else FALSE
    else:
        residual = progress(monitor.current, label)
    return Monitor(mat=monitor.mat, current=residual, status=_status_of(residual))


def finalize_monitor(monitor: Monitor) -> Monitor:
    """Settle a monitor whose trace ended before it consumed any label:
    obligations with no positions left resolve by empty-suffix acceptance."""
    if monitor.status != PENDING:
        return monitor
    status = SATISFIED if accept_empty(monitor.current) else VIOLATED
    final = TRUE if status == SATISFIED else FALSE
    return Monitor(mat=monitor.mat, current=final, status=status)


# ---------------------------------------------------------------------------
# Conflict oracle


def _unify_head(pattern: MatHead, ground: MatHead, binding: dict[str, str]) -> Optional[dict[str, str]]:
    if pattern.name != ground.name or len(pattern.args) != len(ground.args):
        return None
    out = dict(binding)
    for pat, val in zip(pattern.args, ground.args):
        if not isinstance(val, Const):
            return None
        if isinstance(pat, Const):
            if pat.name != val.name:
                return None
        else:
            bound = out.get(pat.name)
            if bound is None:
                out[pat.name] = val.name
            elif bound != val.name:
                return None
    return out


DECLARED_ONLY = "declared_only"
DECLARED_PLUS_SAT = "declared_plus_sat"


@dataclass(frozen=True)
class ConflictOracle:
    declared: tuple[tuple[MatHead, MatHead], ...] = ()
    mode: str = DECLARED_ONLY
    definitions: Mapping[str, MatDefinition] = None  # required for sat mode
    bound: int = 6

    def _declared_conflict(self, a: MatHead, b: MatHead) -> bool:
        for p1, p2 in self.declared:
            for x, y in ((a, b), (b, a)):
                binding = _unify_head(p1, x, {})
                if binding is not None and _unify_head(p2, y, binding) is not None:
                    return True
        return False

    def conflict_name_pairs(self) -> Optional[frozenset]:
        """Name pairs that may conflict; None in satisfiability mode, where
        any pair of definitions could be jointly unsatisfiable."""
        if self.mode == DECLARED_PLUS_SAT:
            return None
        return frozenset(frozenset((p1.name, p2.name)) for p1, p2 in self.declared)

    def conflict(self, a: MatHead, b: MatHead) -> bool:
        if self._declared_conflict(a, b):
            return True
        if self.mode != DECLARED_PLUS_SAT:
            return False
        defs = self.definitions or {}
        for head in (a, b):
            if head.name not in defs:
                raise DefinitionError("no MAT definition for %s in sat mode" % head)
        fa = instantiate(defs[a.name], a)
        fb = instantiate(defs[b.name], b)
        return not _jointly_satisfiable(make_and([fa, fb]), self.bound)


def _jointly_satisfiable(f: Formula, bound: int) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    alphabet = sorted(formula_props(f), key=str)
    for length in range(1, bound + 1):
        labels = [frozenset(combo)
                  for r in range(len(alphabet) + 1)
                  for combo in itertools.combinations(alphabet, r)]
        for trace in itertools.product(labels, repeat=length):
            if evaluate(f, list(trace)):
                return True
    return False
