"""First-order terms, substitutions and flat feature structures.

Constants are plain ``str`` values, variables are :class:`Var` and compound
terms are :class:`Compound`.  A leading uppercase letter (or underscore)
marks a variable when text is parsed; once parsed, the Python type decides.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union


@dataclass(frozen=True, slots=True, repr=False)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name

    __repr__ = __str__


@dataclass(frozen=True, slots=True, repr=False)
class Compound:
    functor: str
    args: tuple

    def __str__(self) -> str:
        return format_term(self)

    __repr__ = __str__


Term = Union[str, Var, Compound]
Substitution = Mapping[Var, Term]


class UnificationError(Exception):
    """Raised when two structures cannot be unified."""


def is_variable_name(name: str) -> bool:
    return bool(name) and (name[0].isupper() or name[0] == "_")


def make_term(name: str, *args: Term) -> Term:
    """Build a constant, variable or compound from a symbol name."""
    if args:
        return Compound(name, tuple(args))
    return Var(name) if is_variable_name(name) else name


def format_term(t: Term) -> str:
    if isinstance(t, Compound):
        return f"{t.functor}({','.join(format_term(a) for a in t.args)})"
    return str(t)


def term_variables(t) -> Iterator[Var]:
    """Yield variables of a term (or nested tuple of terms) left to right, with repeats."""
    if isinstance(t, Var):
        yield t
    elif isinstance(t, Compound):
        for a in t.args:
            yield from term_variables(a)
    elif isinstance(t, tuple):
        for a in t:
            yield from term_variables(a)


def unique_variables(t) -> list[Var]:
    return list(dict.fromkeys(term_variables(t)))


def is_ground(t) -> bool:
    return next(term_variables(t), None) is None


def walk(t: Term, s: Substitution) -> Term:
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


def resolve(t: Term, s: Substitution) -> Term:
    """Apply a triangular substitution all the way down."""
    t = walk(t, s)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(resolve(a, s) for a in t.args))
    return t


def occurs(v: Var, t: Term, s: Substitution) -> bool:
    t = walk(t, s)
    if t == v:
        return True
    if isinstance(t, Compound):
        return any(occurs(v, a, s) for a in t.args)
    return False


def unify(a: Term, b: Term, s: Substitution) -> dict[Var, Term] | None:
    """Unify two terms under ``s`` with occurs check.

    Returns an extended copy of ``s`` or ``None``.  When both sides are
    unbound variables, the left one is bound to the right one.
    """
    out = dict(s)
    return out if _unify_into(a, b, out) else None


def _unify_into(a: Term, b: Term, s: dict[Var, Term]) -> bool:
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x, y = walk(x, s), walk(y, s)
        if x == y:
            continue
        if isinstance(x, Var):
            if occurs(x, y, s):
                return False
            s[x] = y
        elif isinstance(y, Var):
            if occurs(y, x, s):
                return False
            s[y] = x
        elif isinstance(x, Compound) and isinstance(y, Compound):
            if x.functor != y.functor or len(x.args) != len(y.args):
                return False
            stack.extend(zip(x.args, y.args))
        else:
            return False
    return True


def unify_sequences(xs: Iterable[Term], ys: Iterable[Term], s: Substitution) -> dict[Var, Term] | None:
    xs, ys = tuple(xs), tuple(ys)
    if len(xs) != len(ys):
        return None
    return unify(Compound("", xs), Compound("", ys), s)


def apply_substitution(x, s: Substitution):
    """Apply ``s`` to a term, feature structure, or any tuple/list/formula of them."""
    if isinstance(x, (str, Var, Compound)):
        return resolve(x, s)
    if isinstance(x, FeatureStructure):
        return FeatureStructure.from_pairs((k, resolve(v, s)) for k, v in x.items)
    if isinstance(x, tuple):
        return tuple(apply_substitution(e, s) for e in x)
    if isinstance(x, list):
        return [apply_substitution(e, s) for e in x]
    substitute = getattr(x, "substitute", None)
    if substitute is not None:
        return substitute(s)
    raise TypeError(f"cannot substitute into {type(x).__name__}")


def compose(s1: Substitution, s2: Substitution) -> dict[Var, Term]:
    """Idempotent composition: applying the result equals applying s1 then s2."""
    out = {v: resolve(resolve(t, s1), s2) for v, t in s1.items()}
    for v, t in s2.items():
        out.setdefault(v, resolve(t, s2))
    return {v: t for v, t in out.items() if t != v}


def normalize(s: Substitution) -> dict[Var, Term]:
    """Turn a triangular substitution into an idempotent one."""
    return {v: resolve(v, s) for v in s if resolve(v, s) != v}


class FreshNames:
    """Deterministic source of fresh variable suffixes.

    Each call to :meth:`next` hands out a new integer; renaming every
    variable of one structure with the same suffix keeps sharing intact.
    """

    def __init__(self, start: int = 1) -> None:
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            return next(self._counter)


_default_fresh = FreshNames()


def base_name(v: Var) -> str:
    return v.name.split("_", 1)[0] if "_" in v.name[1:] else v.name


def rename_fresh(x, fresh: FreshNames | None = None, suffix: int | None = None):
    """Consistently rename every variable of ``x`` to a name unused so far."""
    if suffix is None:
        suffix = (fresh or _default_fresh).next()
    mapping = {v: Var(f"{base_name(v)}_{suffix}") for v in _collect_vars(x)}
    return apply_substitution(x, mapping) if mapping else x


def _collect_vars(x) -> list[Var]:
    if isinstance(x, FeatureStructure):
        return unique_variables(tuple(v for _, v in x.items))
    if isinstance(x, (str, Var, Compound, tuple, list)):
        return unique_variables(tuple(x) if isinstance(x, list) else x)
    variables = getattr(x, "variables", None)
    if variables is None:
        raise TypeError(f"cannot rename variables of {type(x).__name__}")
    return list(variables())


@dataclass(frozen=True, slots=True)
class FeatureStructure:
    """Flat attribute-value map; values are atoms or variables."""

    items: tuple[tuple[str, Term], ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Term]]) -> FeatureStructure:
        seen: dict[str, Term] = {}
        for k, v in pairs:
            if k in seen:
                raise ValueError(f"duplicate attribute {k!r}")
            seen[k] = v
        return cls(tuple(sorted(seen.items())))

    def get(self, key: str, default=None):
        for k, v in self.items:
            if k == key:
                return v
        return default

    def as_dict(self) -> dict[str, Term]:
        return dict(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __str__(self) -> str:
        return "[" + ", ".join(f"{k}: {format_term(v)}" for k, v in self.items) + "]"


EMPTY_FS = FeatureStructure()


def unify_features(
    a: FeatureStructure, b: FeatureStructure, binding: Substitution | None = None
) -> tuple[FeatureStructure, dict[Var, Term]]:
    """Unify two flat feature structures.

    Returns the merged structure (resolved under the new binding) and the
    extended binding.  Raises :class:`UnificationError` on an atomic clash.
    """
    s: Substitution = binding or {}
    merged = dict(a.items)
    for key, value in b.items:
        if key in merged:
            s2 = unify(merged[key], value, s)
            if s2 is None:
                raise UnificationError(
                    f"feature {key}: {format_term(resolve(merged[key], s))} "
                    f"clashes with {format_term(resolve(value, s))}"
                )
            s = s2
        else:
            merged[key] = value
    s = dict(s)
    return FeatureStructure(tuple(sorted((k, resolve(v, s)) for k, v in merged.items()))), s


def subsumes(general: FeatureStructure, specific: FeatureStructure) -> bool:
    """True when every attribute of ``general`` is matched by ``specific``.

    Variables in ``general`` may bind (consistently); variables in
    ``specific`` are treated as rigid.
    """
    s: dict[Var, Term] = {}
    spec = specific.as_dict()
    for key, value in general.items:
        if key not in spec:
            return False
        other = spec[key]
        if isinstance(value, Var):
            if s.setdefault(value, other) != other:
                return False
        elif value != other:
            return False
    return True
