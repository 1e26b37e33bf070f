"""Parametrized reason theories and prioritized defeasible inference.

A theory is a triple of reason signatures, defaults (rules mapping reason
expressions to macro-action-type heads) and a strict priority order over
rule ids.  Given a fact base, the theory is grounded into a situation
model and the undefeated conclusions form the permissible set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Protocol, Union


class ReasonError(Exception):
    """Base class for errors raised by the reason layer."""


class SignatureError(ReasonError):
    """A predicate or MAT name is undeclared or used with the wrong arity."""


class ContractViolation(ReasonError):
    """An operation was called with arguments outside its contract."""


class PriorityCycleError(ReasonError):
    """Adding a priority pair would make the order cyclic."""


class DuplicateIdError(ReasonError):
    """A default id collides with a structurally different default."""


# ---------------------------------------------------------------------------
# Terms, atoms, expressions


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ContractViolation("empty variable name")

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ContractViolation("empty constant name")

    def __str__(self):
        return self.name


Term = Union[Var, Const]


def _subst_term(term: Term, subst: Mapping[str, Const]) -> Term:
    if isinstance(term, Var):
        return subst.get(term.name, term)
    return term


@dataclass(frozen=True)
class ReasonAtom:
    predicate: str
    args: tuple[Term, ...] = ()

    def is_ground(self) -> bool:
        return all(isinstance(a, Const) for a in self.args)

    def substitute(self, subst: Mapping[str, Const]) -> "ReasonAtom":
        return ReasonAtom(self.predicate, tuple(_subst_term(a, subst) for a in self.args))

    def __str__(self):
        if not self.args:
            return self.predicate
        return "%s(%s)" % (self.predicate, ", ".join(str(a) for a in self.args))


@dataclass(frozen=True)
class AndExpr:
    children: tuple["ReasonExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ContractViolation("And needs at least 2 children")

    def __str__(self):
        return " & ".join(_expr_str(c, wrap_or=True) for c in self.children)


@dataclass(frozen=True)
class OrExpr:
    children: tuple["ReasonExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ContractViolation("Or needs at least 2 children")

    def __str__(self):
        return " | ".join(str(c) for c in self.children)


ReasonExpr = Union[ReasonAtom, AndExpr, OrExpr]


def _expr_str(expr: ReasonExpr, wrap_or: bool = False) -> str:
    if wrap_or and isinstance(expr, OrExpr):
        return "(%s)" % expr
    return str(expr)


def expr_atoms(expr: ReasonExpr) -> Iterable[ReasonAtom]:
    if isinstance(expr, ReasonAtom):
        yield expr
    else:
        for child in expr.children:
            yield from expr_atoms(child)


def expr_vars(expr: ReasonExpr) -> list[str]:
    """Variable names in first-occurrence order."""
    seen: list[str] = []
    for atom in expr_atoms(expr):
        for arg in atom.args:
            if isinstance(arg, Var) and arg.name not in seen:
                seen.append(arg.name)
    return seen


def expr_is_ground(expr: ReasonExpr) -> bool:
    return all(atom.is_ground() for atom in expr_atoms(expr))


def substitute_expr(expr: ReasonExpr, subst: Mapping[str, Const]) -> ReasonExpr:
    if isinstance(expr, ReasonAtom):
        return expr.substitute(subst)
    children = tuple(substitute_expr(c, subst) for c in expr.children)
    return type(expr)(children)


@dataclass(frozen=True)
class MatHead:
    name: str
    args: tuple[Term, ...] = ()

    def is_ground(self) -> bool:
        return all(isinstance(a, Const) for a in self.args)

    def substitute(self, subst: Mapping[str, Const]) -> "MatHead":
        return MatHead(self.name, tuple(_subst_term(a, subst) for a in self.args))

    def __str__(self):
        if not self.args:
            return self.name
        return "%s(%s)" % (self.name, ", ".join(str(a) for a in self.args))


@dataclass(frozen=True)
class Default:
    id: str
    antecedent: ReasonExpr
    conclusion: MatHead

    def __post_init__(self):
        ante_vars = set(expr_vars(self.antecedent))
        for arg in self.conclusion.args:
            if isinstance(arg, Var) and arg.name not in ante_vars:
                raise ContractViolation(
                    "rule %s: conclusion variable %s not bound by antecedent"
                    % (self.id, arg.name)
                )

    def __str__(self):
        return "%s: %s => %s" % (self.id, self.antecedent, self.conclusion)


def _canonical_rename(default: Default) -> tuple:
    """Shape of a default with variables renamed by first occurrence.

    Used for alpha-equivalence when deciding whether a rule already exists.
    """
    order = expr_vars(default.antecedent)
    for arg in default.conclusion.args:
        if isinstance(arg, Var) and arg.name not in order:
            order.append(arg.name)
    ren = {name: Const("_v%d" % i) for i, name in enumerate(order)}

    def shape(expr):
        if isinstance(expr, ReasonAtom):
            return ("atom", expr.predicate, tuple(
                ("v", ren[a.name].name) if isinstance(a, Var) else ("c", a.name)
                for a in expr.args))
        tag = "and" if isinstance(expr, AndExpr) else "or"
        return (tag, tuple(shape(c) for c in expr.children))

    concl = ("mat", default.conclusion.name, tuple(
        ("v", ren[a.name].name) if isinstance(a, Var) else ("c", a.name)
        for a in default.conclusion.args))
    return (shape(default.antecedent), concl)


def alpha_equivalent(a: Default, b: Default) -> bool:
    return _canonical_rename(a) == _canonical_rename(b)


# ---------------------------------------------------------------------------
# Priority relation (strict partial order on default ids)


def _transitive_closure(pairs: frozenset[tuple[str, str]]) -> frozenset[tuple[str, str]]:
    succ: dict[str, set[str]] = {}
    for lo, hi in pairs:
        succ.setdefault(lo, set()).add(hi)
    closure: set[tuple[str, str]] = set()
    for start in succ:
        stack = list(succ[start])
        seen: set[str] = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            closure.add((start, node))
            stack.extend(succ.get(node, ()))
    return frozenset(closure)


@dataclass(frozen=True)
class PriorityRelation:
    pairs: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        closure = _transitive_closure(self.pairs)
        for lo, hi in closure:
            if lo == hi:
                raise PriorityCycleError("priority order contains a cycle through %r" % lo)
        object.__setattr__(self, "_closure", closure)

    @property
    def closure(self) -> frozenset[tuple[str, str]]:
        return self._closure  # type: ignore[attr-defined]

    def precedes(self, lower: str, higher: str) -> bool:
        return (lower, higher) in self.closure

    def with_pair(self, lower: str, higher: str) -> "PriorityRelation":
        """New relation with (lower, higher) added; raises on a cycle."""
        if lower == higher:
            raise PriorityCycleError("a default cannot outrank itself: %r" % lower)
        return PriorityRelation(self.pairs | {(lower, higher)})


# ---------------------------------------------------------------------------
# Theories and fact bases


@dataclass(frozen=True)
class ReasonTheory:
    reason_signatures: Mapping[str, int] = field(default_factory=dict)
    mat_signatures: Mapping[str, int] = field(default_factory=dict)
    defaults: tuple[Default, ...] = ()
    priority: PriorityRelation = field(default_factory=PriorityRelation)

    def __post_init__(self):
        ids = [d.id for d in self.defaults]
        if len(ids) != len(set(ids)):
            raise DuplicateIdError("duplicate default ids in theory")
        by_id = set(ids)
        for d in self.defaults:
            for atom in expr_atoms(d.antecedent):
                declared = self.reason_signatures.get(atom.predicate)
                if declared is None:
                    raise SignatureError("undeclared reason predicate %r" % atom.predicate)
                if declared != len(atom.args):
                    raise SignatureError(
                        "predicate %s/%d used with arity %d"
                        % (atom.predicate, declared, len(atom.args)))
            declared = self.mat_signatures.get(d.conclusion.name)
            if declared is None:
                raise SignatureError("undeclared MAT name %r" % d.conclusion.name)
            if declared != len(d.conclusion.args):
                raise SignatureError(
                    "MAT %s/%d used with arity %d"
                    % (d.conclusion.name, declared, len(d.conclusion.args)))
        for lo, hi in self.priority.pairs:
            if lo not in by_id or hi not in by_id:
                raise SignatureError("priority pair (%s, %s) references unknown id" % (lo, hi))

    def default_by_id(self, default_id: str) -> Default:
        for d in self.defaults:
            if d.id == default_id:
                return d
        raise KeyError(default_id)


@dataclass(frozen=True)
class FactBase:
    facts: frozenset[ReasonAtom] = frozenset()

    def __post_init__(self):
        for atom in self.facts:
            if not atom.is_ground():
                raise ContractViolation("fact base must be ground: %s" % atom)

    def __contains__(self, atom: ReasonAtom) -> bool:
        return atom in self.facts

    def constants(self) -> list[str]:
        names = {a.name for atom in self.facts for a in atom.args}
        return sorted(names)


def entails(facts: FactBase, expr: ReasonExpr) -> bool:
    """Closed-world evaluation of a ground reason expression."""
    if isinstance(expr, ReasonAtom):
        if not expr.is_ground():
            raise ContractViolation("entails requires a ground expression: %s" % expr)
        return expr in facts
    if isinstance(expr, AndExpr):
        return all(entails(facts, c) for c in expr.children)
    if isinstance(expr, OrExpr):
        return any(entails(facts, c) for c in expr.children)
    raise ContractViolation("not a reason expression: %r" % (expr,))


# ---------------------------------------------------------------------------
# Grounding


@dataclass(frozen=True)
class GroundedDefault:
    source_id: str
    substitution: tuple[tuple[str, str], ...]  # (variable, constant), sorted by variable
    antecedent: ReasonExpr
    conclusion: MatHead

    def substitution_map(self) -> dict[str, str]:
        return dict(self.substitution)

    def __str__(self):
        return "%s[%s]: %s => %s" % (
            self.source_id,
            ", ".join("%s=%s" % kv for kv in self.substitution),
            self.antecedent,
            self.conclusion,
        )


@dataclass(frozen=True)
class GroundedModel:
    facts: FactBase
    grounded: tuple[GroundedDefault, ...]
    priority: frozenset[tuple[int, int]]  # (lower index, higher index)


def _conjunctive_atoms(expr: ReasonExpr) -> Optional[list[ReasonAtom]]:
    """Atoms of a purely conjunctive expression, or None if it contains Or."""
    if isinstance(expr, ReasonAtom):
        return [expr]
    if isinstance(expr, AndExpr):
        out: list[ReasonAtom] = []
        for child in expr.children:
            sub = _conjunctive_atoms(child)
            if sub is None:
                return None
            out.extend(sub)
        return out
    return None


def _match_atom(atom: ReasonAtom, fact: ReasonAtom, binding: dict[str, str]) -> Optional[dict[str, str]]:
    if atom.predicate != fact.predicate or len(atom.args) != len(fact.args):
        return None
    out = dict(binding)
    for pat, val in zip(atom.args, fact.args):
        assert isinstance(val, Const)
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


def _join_substitutions(atoms: list[ReasonAtom], facts: FactBase) -> list[dict[str, str]]:
    """Join atom matches; exact for conjunctions and much cheaper than
    enumerating every combination of constants.  Every returned binding
    matches all atoms, so the conjunction is entailed by construction."""
    by_predicate: dict[str, list[ReasonAtom]] = {}
    for fact in facts.facts:
        by_predicate.setdefault(fact.predicate, []).append(fact)
    bindings: list[dict[str, str]] = [{}]
    for atom in atoms:
        nxt: list[dict[str, str]] = []
        for binding in bindings:
            for fact in by_predicate.get(atom.predicate, ()):
                m = _match_atom(atom, fact, binding)
                if m is not None and m not in nxt:
                    nxt.append(m)
        bindings = nxt
        if not bindings:
            return []
    return bindings


def _candidate_substitutions(expr: ReasonExpr, facts: FactBase, constants: list[str]) -> list[dict[str, str]]:
    atoms = _conjunctive_atoms(expr)
    if atoms is not None:
        return _join_substitutions(atoms, facts)
    variables = expr_vars(expr)
    if not variables:
        return [{}]
    # General case (disjunctions may leave variables unconstrained).
    out = []
    for combo in itertools.product(constants, repeat=len(variables)):
        out.append(dict(zip(variables, combo)))
    return out


def _check_facts(theory: ReasonTheory, facts: FactBase) -> None:
    for atom in facts.facts:
        declared = theory.reason_signatures.get(atom.predicate)
        if declared is None:
            raise SignatureError("fact uses undeclared predicate %r" % atom.predicate)
        if declared != len(atom.args):
            raise SignatureError(
                "fact %s does not match signature %s/%d" % (atom, atom.predicate, declared))


def ground_theory(theory: ReasonTheory, facts: FactBase) -> GroundedModel:
    """Instantiate every default whose antecedent is entailed by the facts.

    Substitutions draw constants from the fact base only.  Output order is
    deterministic: default id, then lexicographic substitution.
    """
    _check_facts(theory, facts)
    constants = facts.constants()
    grounded: list[GroundedDefault] = []
    for default in sorted(theory.defaults, key=lambda d: d.id):
        variables = expr_vars(default.antecedent)
        conjunctive = _conjunctive_atoms(default.antecedent) is not None
        seen: set[tuple[tuple[str, str], ...]] = set()
        hits = []
        for cand in _candidate_substitutions(default.antecedent, facts, constants):
            key = tuple(sorted(cand.items()))
            if key in seen:
                continue
            seen.add(key)
            subst = {v: Const(c) for v, c in cand.items()}
            if set(cand) != set(variables):
                continue
            # Join bindings already entail conjunctive antecedents; only the
            # enumerated (disjunctive) case needs an entailment check.
            if conjunctive or entails(facts, substitute_expr(default.antecedent, subst)):
                hits.append((key, subst))
        hits.sort(key=lambda kv: kv[0])
        for key, subst in hits:
            grounded.append(GroundedDefault(
                source_id=default.id,
                substitution=key,
                antecedent=substitute_expr(default.antecedent, subst),
                conclusion=default.conclusion.substitute(subst),
            ))
    by_source: dict[str, list[int]] = {}
    for idx, g in enumerate(grounded):
        by_source.setdefault(g.source_id, []).append(idx)
    priority = frozenset(
        (i, j)
        for lower, higher in theory.priority.closure
        if lower in by_source and higher in by_source
        for i in by_source[lower]
        for j in by_source[higher]
    )
    return GroundedModel(facts=facts, grounded=tuple(grounded), priority=priority)


# ---------------------------------------------------------------------------
# Permissible MATs


class ConflictChecker(Protocol):
    def conflict(self, a: MatHead, b: MatHead) -> bool: ...

    # Optional: a frozenset of frozensets of MAT names covering every pair
    # that could possibly conflict (None when unknown).  Lets the inference
    # skip pairs whose names can never conflict.
    # def conflict_name_pairs(self) -> Optional[frozenset]: ...


@dataclass(frozen=True)
class PermissibleSet:
    kind: str  # "unconstrained" | "constrained"
    mats: tuple[MatHead, ...] = ()

    UNCONSTRAINED = "unconstrained"
    CONSTRAINED = "constrained"

    @property
    def is_unconstrained(self) -> bool:
        return self.kind == self.UNCONSTRAINED

    def __contains__(self, mat: MatHead) -> bool:
        return mat in self.mats

    def __str__(self):
        if self.is_unconstrained:
            return "unconstrained"
        return ", ".join(str(m) for m in self.mats)


@dataclass(frozen=True)
class Justification:
    triggered: tuple[GroundedDefault, ...] = ()
    conflicts: frozenset[tuple[int, int]] = frozenset()  # i < j
    defeats: frozenset[tuple[int, int]] = frozenset()  # (defeated, defeater)
    verdict: PermissibleSet = PermissibleSet(PermissibleSet.UNCONSTRAINED)

    def defeated_indices(self) -> set[int]:
        return {i for i, _ in self.defeats}


def permissible_mats(model: GroundedModel, oracle: ConflictChecker) -> tuple[PermissibleSet, Justification]:
    """Single-step defeat: a grounded default is defeated iff a conflicting
    grounded default strictly outranks it.  Conclusions of the undefeated
    form the permissible set; an empty model is unconstrained.
    """
    grounded = model.grounded
    if not grounded:
        verdict = PermissibleSet(PermissibleSet.UNCONSTRAINED)
        return verdict, Justification(verdict=verdict)
    name_pairs = None
    probe = getattr(oracle, "conflict_name_pairs", None)
    if callable(probe):
        name_pairs = probe()
    conflicts: set[tuple[int, int]] = set()
    if name_pairs is None:
        for i in range(len(grounded)):
            for j in range(i + 1, len(grounded)):
                if oracle.conflict(grounded[i].conclusion, grounded[j].conclusion):
                    conflicts.add((i, j))
    else:
        by_name: dict[str, list[int]] = {}
        for idx, g in enumerate(grounded):
            by_name.setdefault(g.conclusion.name, []).append(idx)
        for pair in name_pairs:
            names = tuple(pair)
            left, right = (names[0], names[0]) if len(names) == 1 else names
            for i in by_name.get(left, ()):
                for j in by_name.get(right, ()):
                    if i == j:
                        continue
                    lo, hi = (i, j) if i < j else (j, i)
                    if (lo, hi) in conflicts:
                        continue
                    if oracle.conflict(grounded[lo].conclusion, grounded[hi].conclusion):
                        conflicts.add((lo, hi))
    defeats: set[tuple[int, int]] = set()
    for i, j in conflicts:
        if (i, j) in model.priority:
            defeats.add((i, j))
        if (j, i) in model.priority:
            defeats.add((j, i))
    defeated = {i for i, _ in defeats}
    mats: list[MatHead] = []
    seen_mats: set[MatHead] = set()
    for i, g in enumerate(grounded):
        if i not in defeated and g.conclusion not in seen_mats:
            seen_mats.add(g.conclusion)
            mats.append(g.conclusion)
    verdict = PermissibleSet(PermissibleSet.CONSTRAINED, tuple(mats))
    just = Justification(
        triggered=grounded,
        conflicts=frozenset(conflicts),
        defeats=frozenset(defeats),
        verdict=verdict,
    )
    return verdict, just


# ---------------------------------------------------------------------------
# Theory revision primitives


def add_default(theory: ReasonTheory, default: Default) -> tuple[ReasonTheory, bool]:
    """Append a default; returns (theory, added).

    An alpha-equivalent existing rule makes this a no-op.  New predicate
    and MAT names are declared with their observed arity.
    """
    for existing in theory.defaults:
        if alpha_equivalent(existing, default):
            return theory, False
        if existing.id == default.id:
            raise DuplicateIdError("id %r already used by a different rule" % default.id)
    reason_sigs = dict(theory.reason_signatures)
    for atom in expr_atoms(default.antecedent):
        declared = reason_sigs.get(atom.predicate)
        if declared is None:
            reason_sigs[atom.predicate] = len(atom.args)
        elif declared != len(atom.args):
            raise SignatureError(
                "predicate %s/%d used with arity %d"
                % (atom.predicate, declared, len(atom.args)))
    mat_sigs = dict(theory.mat_signatures)
    declared = mat_sigs.get(default.conclusion.name)
    if declared is None:
        mat_sigs[default.conclusion.name] = len(default.conclusion.args)
    elif declared != len(default.conclusion.args):
        raise SignatureError(
            "MAT %s/%d used with arity %d"
            % (default.conclusion.name, declared, len(default.conclusion.args)))
    revised = ReasonTheory(
        reason_signatures=reason_sigs,
        mat_signatures=mat_sigs,
        defaults=theory.defaults + (default,),
        priority=theory.priority,
    )
    return revised, True


def add_priority(theory: ReasonTheory, lower: str, higher: str) -> tuple[ReasonTheory, bool]:
    """Add (lower, higher) to the priority order; returns (theory, added).

    Raises PriorityCycleError (leaving the theory untouched) if the pair
    would close a cycle; re-adding an existing pair is a flagged no-op.
    """
    ids = {d.id for d in theory.defaults}
    if lower not in ids or higher not in ids:
        raise SignatureError("unknown default id in priority pair (%s, %s)" % (lower, higher))
    if (lower, higher) in theory.priority.pairs:
        return theory, False
    relation = theory.priority.with_pair(lower, higher)
    revised = ReasonTheory(
        reason_signatures=theory.reason_signatures,
        mat_signatures=theory.mat_signatures,
        defaults=theory.defaults,
        priority=relation,
    )
    return revised, True
