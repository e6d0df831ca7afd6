"""Sparse multivariate polynomials keyed by exponent vectors.

Coefficients are 64-bit floats.  Terms whose magnitude drops below
``PRUNE_TOL`` after arithmetic are discarded so that cancellation never
leaves phantom variable dependencies behind (they would add spurious edges
to the sparsity graph).
"""

from __future__ import annotations

import ast
import itertools
import math
import re
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

PRUNE_TOL = 1e-14


class PolynomialError(ValueError):
    """Dimension mismatch or malformed polynomial input."""


def grlex_key(alpha: Monomial) -> tuple:
    """Sort key for ascending graded-lexicographic order (x1 > x2 > ...)."""
    return (sum(alpha), alpha)


def monomials_up_to(num_vars: int, degree: int) -> list[Monomial]:
    """All exponent vectors of total degree <= ``degree``, ascending grlex."""
    if degree < 0:
        return []
    out: list[Monomial] = []
    for d in range(degree + 1):
        block = []
        for combo in itertools.combinations_with_replacement(range(num_vars), d):
            alpha = [0] * num_vars
            for i in combo:
                alpha[i] += 1
            block.append(tuple(alpha))
        block.sort()
        out.extend(block)
    return out


def count_monomials(num_vars: int, degree: int) -> int:
    return math.comb(num_vars + degree, degree) if degree >= 0 else 0


def _add_mono(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial in ``num_vars`` ambient variables."""

    def __init__(self, num_vars: int, terms: Mapping[Monomial, float] | None = None,
                 *, prune: float = PRUNE_TOL):
        if num_vars < 0:
            raise PolynomialError("num_vars must be nonnegative")
        clean: dict[Monomial, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != num_vars:
                raise PolynomialError(
                    f"exponent {alpha} has length {len(alpha)}, expected {num_vars}")
            if any(a < 0 for a in alpha):
                raise PolynomialError(f"negative exponent in {alpha}")
            c = float(c)
            if abs(c) > prune:
                clean[alpha] = clean.get(alpha, 0.0) + c
        self.num_vars = num_vars
        self._terms = {a: c for a, c in clean.items() if abs(c) > prune}

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, num_vars: int) -> Polynomial:
        return cls(num_vars)

    @classmethod
    def constant(cls, num_vars: int, value: float) -> Polynomial:
        return cls(num_vars, {(0,) * num_vars: value})

    @classmethod
    def variable(cls, num_vars: int, i: int) -> Polynomial:
        if not 0 <= i < num_vars:
            raise PolynomialError(f"variable index {i} out of range for {num_vars} vars")
        alpha = [0] * num_vars
        alpha[i] = 1
        return cls(num_vars, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coeff: float = 1.0) -> Polynomial:
        return cls(len(alpha), {tuple(alpha): coeff})

    # -- accessors --------------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return MappingProxyType(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(a) for a in self._terms), default=0)

    def coeff(self, alpha: Monomial) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def support(self) -> set[int]:
        """Indices of variables carrying a positive exponent in some term."""
        return {i for alpha in self._terms for i, a in enumerate(alpha) if a > 0}

    def sorted_terms(self, descending: bool = True) -> list[tuple[Monomial, float]]:
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]),
                      reverse=descending)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: Polynomial) -> None:
        if other.num_vars != self.num_vars:
            raise PolynomialError(
                f"num_vars mismatch: {self.num_vars} vs {other.num_vars}")

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.num_vars, float(other))
        return NotImplemented

    def __add__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for a, c in other._terms.items():
            out[a] = out.get(a, 0.0) + c
        return Polynomial(self.num_vars, out)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(self.num_vars, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.num_vars, {a: c * float(other) for a, c in self._terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            for b, d in other._terms.items():
                m = _add_mono(a, b)
                out[m] = out.get(m, 0.0) + c * d
        return Polynomial(self.num_vars, out)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> Polynomial:
        return self * (1.0 / float(scalar))

    def __pow__(self, k: int) -> Polynomial:
        if not isinstance(k, int) or k < 0:
            raise PolynomialError("only nonnegative integer powers are supported")
        result = Polynomial.constant(self.num_vars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.num_vars == other.num_vars and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.num_vars, frozenset(self._terms.items())))

    def almost_equal(self, other: Polynomial, tol: float = 1e-12) -> bool:
        return (self - other).max_abs_coeff() <= tol

    # -- calculus ---------------------------------------------------------

    def partial(self, i: int) -> Polynomial:
        if not 0 <= i < self.num_vars:
            raise PolynomialError(f"variable index {i} out of range for {self.num_vars} vars")
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            if a[i] == 0:
                continue
            b = list(a)
            b[i] -= 1
            b = tuple(b)
            out[b] = out.get(b, 0.0) + c * a[i]
        return Polynomial(self.num_vars, out)

    def gradient(self) -> list[Polynomial]:
        return [self.partial(i) for i in range(self.num_vars)]

    # -- evaluation -------------------------------------------------------

    @cached_property
    def _dense(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._terms:
            return np.zeros((0, self.num_vars), dtype=int), np.zeros(0)
        alphas, coeffs = zip(*self._terms.items())
        return np.array(alphas, dtype=int).reshape(-1, self.num_vars), np.array(coeffs)

    def __call__(self, x) -> float | np.ndarray:
        """Evaluate at one point (shape ``(n,)``) or a batch (shape ``(N, n)``)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.num_vars,):
            raise PolynomialError(
                f"point has dimension {x.shape[-1:]}, polynomial has {self.num_vars} vars")
        exps, coeffs = self._dense
        if coeffs.size == 0:
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
        if self.num_vars == 0:
            val = coeffs.sum()
            return float(val) if x.ndim == 1 else np.full(x.shape[0], val)
        pw = np.prod(x[..., None, :] ** exps, axis=-1)
        val = pw @ coeffs
        return float(val) if x.ndim == 1 else val

    def eval(self, x) -> float | np.ndarray:
        return self(x)

    # -- variable bookkeeping ---------------------------------------------

    def embed(self, positions: Sequence[int], num_vars: int) -> Polynomial:
        """Re-express in ``num_vars`` variables, sending local var i to ``positions[i]``."""
        if len(positions) != self.num_vars:
            raise PolynomialError("positions must list one target per variable")
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            b = [0] * num_vars
            for i, e in enumerate(a):
                b[positions[i]] += e
            out[tuple(b)] = out.get(tuple(b), 0.0) + c
        return Polynomial(num_vars, out)

    def restrict(self, keep: Sequence[int]) -> Polynomial:
        """Drop to the variables in ``keep`` (in that order); others must be absent."""
        index = {v: j for j, v in enumerate(keep)}
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            b = [0] * len(keep)
            for i, e in enumerate(a):
                if e == 0:
                    continue
                if i not in index:
                    raise PolynomialError(f"variable {i} occurs but is not kept")
                b[index[i]] = e
            out[tuple(b)] = out.get(tuple(b), 0.0) + c
        return Polynomial(len(keep), out)

    def substitute(self, i: int, value: float) -> Polynomial:
        """Fix variable ``i`` to ``value``; the variable stays in the ambient space."""
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            b = list(a)
            e = b[i]
            b[i] = 0
            b = tuple(b)
            out[b] = out.get(b, 0.0) + c * value ** e
        return Polynomial(self.num_vars, out)

    # -- text format ------------------------------------------------------

    def to_string(self, names: Sequence[str] | None = None, precision: int = 17) -> str:
        names = list(names) if names is not None else [f"x{i + 1}" for i in range(self.num_vars)]
        if not self._terms:
            return "0"
        parts: list[str] = []
        for alpha, c in self.sorted_terms(descending=True):
            factors = []
            for i, e in enumerate(alpha):
                if e == 1:
                    factors.append(names[i])
                elif e > 1:
                    factors.append(f"{names[i]}^{e}")
            mag = abs(c)
            num = format(mag, f".{precision}g")
            if factors and mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([num] + factors)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first_body = parts[0]
        text = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self) -> str:
        return f"Polynomial({self.num_vars}, {self.to_string(precision=6)!r})"

    def __str__(self) -> str:
        return self.to_string(precision=6)


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_polynomial(text: str, names: Sequence[str]) -> Polynomial:
    """Parse a monomial-sum expression such as ``"2*x1^2*x2 - 0.8*x3"``.

    Products, integer powers (``^`` or ``**``), parentheses, and unary signs
    are accepted; the result is fully expanded.
    """
    names = list(names)
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise PolynomialError(f"cannot parse polynomial {text!r}: {exc.msg}") from None

    def walk(node) -> Polynomial:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return Polynomial.constant(n, float(node.value))
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise PolynomialError(f"unknown variable {node.id!r} in {text!r}")
            return Polynomial.variable(n, index[node.id])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = walk(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exp = node.right
                if isinstance(exp, ast.UnaryOp) or not (
                        isinstance(exp, ast.Constant) and isinstance(exp.value, int)):
                    raise PolynomialError(f"non-integer exponent in {text!r}")
                return walk(node.left) ** exp.value
            left, right = walk(node.left), walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                if right.degree() != 0 or right.is_zero():
                    raise PolynomialError(f"division by non-constant in {text!r}")
                return left / right.coeff((0,) * n)
        raise PolynomialError(f"unsupported syntax in polynomial {text!r}")

    for nm in names:
        if not _NAME_RE.match(nm):
            raise PolynomialError(f"invalid variable name {nm!r}")
    return walk(tree)


class PolyVector:
    """Ordered tuple of polynomials sharing one ambient variable count."""

    def __init__(self, components: Iterable[Polynomial], num_vars: int | None = None):
        comps = tuple(components)
        if num_vars is None:
            if not comps:
                raise PolynomialError("empty PolyVector needs an explicit num_vars")
            num_vars = comps[0].num_vars
        for p in comps:
            if p.num_vars != num_vars:
                raise PolynomialError("all components must share num_vars")
        self.components = comps
        self.num_vars = num_vars

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyVector) and self.components == other.components \
            and self.num_vars == other.num_vars

    def degree(self) -> int:
        return max((p.degree() for p in self.components), default=0)

    @cached_property
    def _compiled(self) -> tuple[np.ndarray, np.ndarray]:
        monos = sorted({a for p in self.components for a in p.terms}, key=grlex_key)
        index = {a: j for j, a in enumerate(monos)}
        C = np.zeros((len(monos), len(self.components)))
        for c, p in enumerate(self.components):
            for a, v in p.terms.items():
                C[index[a], c] = v
        exps = np.array(monos, dtype=int).reshape(len(monos), self.num_vars)
        return exps, C

    def __call__(self, x) -> np.ndarray:
        """Evaluate all components at once; shared monomials are computed once."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.num_vars,):
            raise PolynomialError(
                f"point has dimension {x.shape[-1:]}, vector field has {self.num_vars} vars")
        exps, C = self._compiled
        flat = x.reshape(-1, self.num_vars)
        mono = np.ones((flat.shape[0], exps.shape[0]))
        for i in range(self.num_vars):
            col = exps[:, i]
            top = int(col.max(initial=0))
            if top == 0:
                continue
            pw = np.ones((flat.shape[0], top + 1))
            for e in range(1, top + 1):
                pw[:, e] = pw[:, e - 1] * flat[:, i]
            mono *= pw[:, col]
        out = mono @ C
        return out.reshape(x.shape[:-1] + (len(self.components),))


def lie_derivative(v: Polynomial, f: PolyVector, time_augmented: bool = False) -> Polynomial:
    """Return grad(v) . f, or dv/dt + grad_x(v) . f with time as variable 0.

    In time-augmented mode ``v`` lives on ``(t, x_1..x_n)`` while ``f`` is
    over ``x`` only.
    """
    n = len(f)
    if f.num_vars != n:
        raise PolynomialError("vector field must be square (n components over n vars)")
    if time_augmented:
        if v.num_vars != n + 1:
            raise PolynomialError(f"time-augmented v needs {n + 1} vars, has {v.num_vars}")
        lifted = [p.embed(range(1, n + 1), n + 1) for p in f]
        out = v.partial(0)
        for i, fi in enumerate(lifted):
            out = out + v.partial(i + 1) * fi
        return out
    if v.num_vars != n:
        raise PolynomialError(f"v has {v.num_vars} vars, vector field has {n}")
    out = Polynomial.zero(n)
    for i, fi in enumerate(f):
        out = out + v.partial(i) * fi
    return out
