"""Solver-agnostic catalog of variables, linear constraints and objective."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

INF = math.inf


class Var:
    __slots__ = ("index", "name", "family", "key", "lb", "ub", "integer")

    def __init__(self, index, name, family, key, lb, ub, integer):
        self.index = index
        self.name = name
        self.family = family
        self.key = key
        self.lb = lb
        self.ub = ub
        self.integer = integer

    def __repr__(self):
        return f"Var({self.name})"

    # arithmetic lifts to LinExpr
    def _e(self) -> "LinExpr":
        return LinExpr({self.index: 1.0})

    def __add__(self, other):
        return self._e() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._e() - other

    def __rsub__(self, other):
        return (-self._e()) + other

    def __mul__(self, c):
        return self._e() * c

    __rmul__ = __mul__

    def __neg__(self):
        return self._e() * -1.0


class LinExpr:
    """Sparse affine expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(x) -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Var):
            return LinExpr({x.index: 1.0})
        return LinExpr(None, float(x))

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def add(self, x, coef: float = 1.0) -> "LinExpr":
        """In-place ``self += coef * x``."""
        if isinstance(x, Var):
            self.terms[x.index] = self.terms.get(x.index, 0.0) + coef
        elif isinstance(x, LinExpr):
            t = self.terms
            for i, c in x.terms.items():
                t[i] = t.get(i, 0.0) + coef * c
            self.const += coef * x.const
        else:
            self.const += coef * float(x)
        return self

    def __add__(self, other):
        return self.copy().add(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().add(other, -1.0)

    def __rsub__(self, other):
        return (self * -1.0).add(other)

    def __mul__(self, c):
        c = float(c)
        return LinExpr({i: v * c for i, v in self.terms.items()}, self.const * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, x: Mapping[int, float]) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self):
        return f"LinExpr({len(self.terms)} terms, const={self.const:g})"


def lin_sum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out.add(it)
    return out


@dataclass(frozen=True)
class LinConstraint:
    name: str
    tag: str
    terms: tuple[tuple[int, float], ...]
    sense: str  # "<=", "==", ">="
    rhs: float

    def violation(self, x: Mapping[int, float]) -> float:
        lhs = sum(c * x[i] for i, c in self.terms)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


class DuplicateNameError(ValueError):
    pass


def _fmt_key(key) -> str:
    if not isinstance(key, tuple):
        key = (key,)
    return ",".join(str(k) for k in key)


@dataclass
class MilpModel:
    """Named variables, linear constraints and a minimisation objective."""

    name: str = "model"
    big_m: float = 1e4
    eps: float = 0.02
    variables: list[Var] = field(default_factory=list)
    constraints: list[LinConstraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_const: float = 0.0
    families: dict[str, bool] = field(default_factory=dict)  # family -> integer
    _index: dict[tuple, Var] = field(default_factory=dict, repr=False)
    _cnames: set[str] = field(default_factory=set, repr=False)

    # -- variables ---------------------------------------------------------
    def add_var(self, family: str, key=(), lb: float = 0.0, ub: float = INF,
                binary: bool = False, integer: bool = False) -> Var:
        if not isinstance(key, tuple):
            key = (key,)
        is_int = binary or integer
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        known = self.families.setdefault(family, is_int)
        if known != is_int:
            raise ValueError(f"family {family} mixes integer and continuous variables")
        if (family, key) in self._index:
            raise DuplicateNameError(f"variable {family}[{_fmt_key(key)}] already exists")
        name = f"{family}[{_fmt_key(key)}]" if key else family
        v = Var(len(self.variables), name, family, key, float(lb), float(ub), is_int)
        self.variables.append(v)
        self._index[(family, key)] = v
        return v

    def var(self, family: str, *key) -> Var:
        return self._index[(family, tuple(key))]

    def has_var(self, family: str, *key) -> bool:
        return (family, tuple(key)) in self._index

    def vars_of(self, family: str) -> Iterator[Var]:
        return (v for v in self.variables if v.family == family)

    # -- constraints -------------------------------------------------------
    def add_constr(self, tag: str, label: str, key, lhs, sense: str, rhs=0.0) -> LinConstraint | None:
        """Add ``lhs (sense) rhs``; both sides may be expressions.

        Constraint names are ``{tag}.{label}[{key}]``.  Constraints that reduce
        to constants are checked and dropped.
        """
        if sense not in ("<=", "==", ">="):
            raise ValueError(sense)
        expr = LinExpr.of(lhs) - rhs
        terms = tuple((i, c) for i, c in expr.terms.items() if c != 0.0)
        for _, c in terms:
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient in {tag}.{label}")
        name = f"{tag}.{label}[{_fmt_key(key)}]" if key != () else f"{tag}.{label}"
        if name in self._cnames:
            raise DuplicateNameError(f"constraint {name} already exists")
        if not terms:
            slack = -expr.const
            ok = {"<=": slack >= -1e-9, ">=": slack <= 1e-9, "==": abs(slack) <= 1e-9}[sense]
            if not ok:
                raise ValueError(f"constant constraint {name} is infeasible")
            return None
        self._cnames.add(name)
        con = LinConstraint(name, tag, terms, sense, -expr.const)
        self.constraints.append(con)
        return con

    # -- objective ---------------------------------------------------------
    def add_objective(self, expr, coef: float = 1.0) -> None:
        e = LinExpr.of(expr)
        for i, c in e.terms.items():
            self.objective[i] = self.objective.get(i, 0.0) + coef * c
        self.objective_const += coef * e.const

    def objective_value(self, x: Mapping[int, float]) -> float:
        return self.objective_const + sum(c * x[i] for i, c in self.objective.items())

    # -- evaluation helpers -----------------------------------------------
    def values_by_index(self, by_name: Mapping[str, float]) -> dict[int, float]:
        return {v.index: float(by_name.get(v.name, 0.0)) for v in self.variables}

    def max_violation(self, x: Mapping[int, float]) -> tuple[float, str | None]:
        worst, where = 0.0, None
        for con in self.constraints:
            viol = con.violation(x)
            if viol > worst:
                worst, where = viol, con.name
        for v in self.variables:
            val = x[v.index]
            viol = max(v.lb - val, val - v.ub, 0.0)
            if viol > worst:
                worst, where = viol, v.name
        return worst, where


@dataclass(frozen=True)
class ModelStats:
    n_vars: int
    n_binary: int
    n_constraints: int
    by_family: dict[str, int]
    by_tag: dict[str, int]


def model_stats(model: MilpModel) -> ModelStats:
    fam = Counter(v.family for v in model.variables)
    tags = Counter(c.tag for c in model.constraints)
    return ModelStats(
        n_vars=len(model.variables),
        n_binary=sum(1 for v in model.variables if v.integer),
        n_constraints=len(model.constraints),
        by_family=dict(sorted(fam.items())),
        by_tag=dict(sorted(tags.items())),
    )
