"""
Exact symbolic engine over jet space.

Generators are `sympy` objects:

* jets: `sympy.Symbol` named `q`, `q_x`, `q_xx`, ... (time jets `q_t`, `q_xt` only exist transiently, they are eliminated through an `Evolution_Model`)
* the spectral parameter: `ETA`
* trigonometric generators: `sympy.sin(u)`, `sympy.cos(u)` of a potential `u`

Zero testing goes through `normalize`, a canonical reduced fraction of polynomials over the rationals.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
import re
import typing

import numpy
import sympy
from sympy.polys.polyerrors import BasePolynomialError

from . import common

log = logging.getLogger(__name__)

ETA = sympy.Symbol('eta')

_JET_NAME = re.compile(r'^([A-Za-z][A-Za-z0-9]*)(?:_(x*)(t*))?$')

DEFAULT_FIELDS = ('q', 'r', 'u')
DEFAULT_POTENTIALS = ('u',)


class Settings_Probe(common.Settings):
    """ Randomized soundness probe of the exact zero tests. """

    points = 20
    """
    Number of random jet points per expression.

    #### Default: `20`
    """

    low = 0.3
    """
    Lower bound of the uniformly sampled generator values.

    #### Default: `0.3`
    """

    high = 1.3
    """
    Upper bound of the uniformly sampled generator values.

    #### Default: `1.3`
    """

    zero_tolerance = 1e-9
    """
    Largest probe magnitude accepted for an expression that is exactly zero.

    #### Default: `1e-9`
    """

    nonzero_threshold = 1e-3
    """
    Some probe of a nonzero expression is expected to exceed this.

    #### Default: `1e-3`
    """

    def _validate(self):
        if not 0 < self.low < self.high:
            raise common.Config_Error(f"Probe range must satisfy 0 < low < high, got {self.low}, {self.high}")


def jet(field: str, order: int = 0, t_order: int = 0) -> sympy.Symbol:
    """ The generator of the `order`-th x-derivative of `field`. """
    if order < 0 or t_order < 0:
        raise ValueError(f"Negative jet order: {order}, {t_order}")
    suffix = 'x' * order + 't' * t_order
    return sympy.Symbol(field + '_' + suffix if suffix else field)


@functools.lru_cache(maxsize = None)
def split_jet(symbol: sympy.Symbol) -> typing.Optional[typing.Tuple[str, int, int]]:
    """ `(field, x_order, t_order)` of a jet symbol, `None` for anything else. """

    if symbol == ETA or not isinstance(symbol, sympy.Symbol):
        return None

    match = _JET_NAME.match(symbol.name)
    if not match:
        return None

    field, xs, ts = match.groups()
    if xs is None:
        return field, 0, 0

    if not xs and not ts:
        return None

    return field, len(xs), len(ts)


def _generator_key(generator):
    if isinstance(generator, sympy.Symbol):
        if generator == ETA:
            return (1, '', 0, 0)
        parts = split_jet(generator)
        if parts:
            return (0,) + parts
        return (3, generator.name, 0, 0)

    if isinstance(generator, (sympy.sin, sympy.cos)):
        return (2, str(generator.args[0]), 0 if isinstance(generator, sympy.sin) else 1, 0)

    return (4, sympy.srepr(generator), 0, 0)


def generators(e: sympy.Expr) -> typing.List[sympy.Expr]:
    """ Generators of `e` in the canonical order: jets by field then order, then `eta`, then trig. """

    trig = e.atoms(sympy.sin, sympy.cos)
    dummies = {item: sympy.Dummy() for item in trig}
    bare = e.xreplace(dummies).free_symbols - set(dummies.values())
    return sorted(bare | trig, key = _generator_key)


@dataclasses.dataclass(frozen = True)
class Evolution_Model:
    """
    The equation `q_t = E` in x-jets of `field` together with the jet relations needed to reduce on-shell.

    `constraints` entries are `(field, order, rhs)`: the jet `(field, order)` and all of its x-derivatives are replaced by `rhs` and its x-derivatives.
    `potential_dt` entries are `(potential, rhs)` and give `u_t` where it is local.
    """

    field: str
    evolution: typing.Optional[sympy.Expr] = None
    constraints: typing.Tuple[typing.Tuple[str, int, sympy.Expr], ...] = ()
    potentials: typing.Tuple[str, ...] = ()
    potential_dt: typing.Tuple[typing.Tuple[str, sympy.Expr], ...] = ()
    fields: typing.Tuple[str, ...] = ()
    name: str = ''

    def __post_init__(self):

        if self.evolution is not None:
            for symbol in self.evolution.free_symbols:
                parts = split_jet(symbol)
                if parts and parts[2]:
                    raise common.Model_Error(f"Evolution of {self.field} contains the time derivative {symbol}")

        constrained = {field for field, _, _ in self.constraints}
        if len(constrained) != len(self.constraints):
            raise common.Model_Error("At most one constraint per field")

        if self.field in constrained:
            raise common.Model_Error(f"The evolving field {self.field} cannot be constrained")

        for field, order, rhs in self.constraints:
            for symbol in rhs.free_symbols:
                parts = split_jet(symbol)
                if parts and (parts[0] in constrained or parts[2]):
                    raise common.Model_Error(f"Constraint for {jet(field, order)} is not reduced after one substitution pass: {symbol}")

    def constraint(self, field: str) -> typing.Optional[typing.Tuple[int, sympy.Expr]]:
        for name, order, rhs in self.constraints:
            if name == field:
                return order, rhs
        return None

    def time_rule(self, potential: str) -> typing.Optional[sympy.Expr]:
        for name, rhs in self.potential_dt:
            if name == potential:
                return rhs
        return None

    @property
    def known_fields(self) -> typing.Tuple[str, ...]:
        names = [self.field, *self.fields, *self.potentials, *(field for field, _, _ in self.constraints)]
        return tuple(dict.fromkeys(names))

    def with_evolution(self, evolution: sympy.Expr) -> 'Evolution_Model':
        return dataclasses.replace(self, evolution = sympy.sympify(evolution))

    def with_fields(self, *fields: str) -> 'Evolution_Model':
        return dataclasses.replace(self, fields = tuple(dict.fromkeys(self.fields + fields)))

    def potential_flow(self, potential: str) -> sympy.Expr:
        """ Right side of `u_xt = c*E`, available when the constraint reads `u_x = c*q`. """

        if self.evolution is None:
            raise common.Model_Error(f"Model {self.name!r} has no evolution expression")

        constraint = self.constraint(potential)
        if constraint is None or constraint[0] != 1:
            raise common.Model_Error(f"{potential} has no first order constraint in model {self.name!r}")

        factor = sympy.cancel(constraint[1] / jet(self.field))
        if factor.free_symbols:
            raise common.Model_Error(f"Constraint {jet(potential, 1)} = {to_text(constraint[1])} is not a constant multiple of {self.field}")

        return canonical(factor * self.evolution)


def _require_model(m: typing.Optional[Evolution_Model], what: str) -> Evolution_Model:
    if m is None:
        raise common.Algebra_Error(f"Eliminating {what} needs an evolution model")
    return m


@functools.lru_cache(maxsize = None)
def _dx_power(e: sympy.Expr, count: int, m: typing.Optional[Evolution_Model]) -> sympy.Expr:
    for _ in range(count):
        e = total_dx(e, m)
    return e


@functools.lru_cache(maxsize = None)
def prolongation(m: Evolution_Model, order: int) -> sympy.Expr:
    """ `D_x^order(E)`, the on-shell value of the jet `q_x...xt`. """

    if m.evolution is None:
        raise common.Model_Error(f"Model {m.name!r} lacks an evolution expression")

    if order == 0:
        return reduce(m.evolution, m)

    log.debug("Prolongation of %s to order %s", m.field, order)
    return sympy.expand(total_dx(prolongation(m, order - 1), m))


def _time_jet_value(m: typing.Optional[Evolution_Model], field: str, order: int, t_order: int) -> sympy.Expr:

    symbol = jet(field, order, t_order)
    m = _require_model(m, str(symbol))

    if t_order > 1:
        raise common.Algebra_Error(f"Only first time derivatives are eliminated: {symbol}")

    if field == m.field:
        return prolongation(m, order)

    constraint = m.constraint(field)
    if constraint is not None and order >= constraint[0]:
        base, rhs = constraint
        return _dx_power(total_dt_onshell(rhs, m), order - base, m)

    rule = m.time_rule(field)
    if rule is not None:
        return _dx_power(sympy.sympify(rule), order, m)

    raise common.Nonlocal_Error(f"{symbol} is not a local function of the jets of model {m.name!r}")


def reduce(e, m: typing.Optional[Evolution_Model] = None) -> sympy.Expr:
    """ Substitute the constraint map and eliminate time jets. One pass is complete. """

    e = sympy.sympify(e)

    replacements = {}
    for symbol in e.free_symbols:
        parts = split_jet(symbol)
        if parts is None:
            continue

        field, order, t_order = parts
        if t_order:
            replacements[symbol] = _time_jet_value(m, field, order, t_order)
            continue

        if m is None:
            continue

        constraint = m.constraint(field)
        if constraint is not None and order >= constraint[0]:
            replacements[symbol] = _dx_power(constraint[1], order - constraint[0], m)

    if not replacements:
        return e

    return e.xreplace(replacements)


def _dx_rate(symbol, rules) -> sympy.Expr:

    if rules and symbol in rules:
        return rules[symbol]

    if symbol == ETA:
        return sympy.S.Zero

    parts = split_jet(symbol)
    if parts is None:
        raise common.Algebra_Error(f"No x-derivative rule for {symbol}")

    field, order, t_order = parts
    return jet(field, order + 1, t_order)


def total_dx(e, m: typing.Optional[Evolution_Model] = None, rules: typing.Optional[typing.Mapping[sympy.Symbol, sympy.Expr]] = None) -> sympy.Expr:
    """
    Total x-derivative. `sin(u)` and `cos(u)` follow the chain rule through the jet `u_x`, which the constraint map then reduces.

    `rules` gives the x-derivatives of extra generators such as an angle `phi`.
    """

    e = reduce(e, m)

    terms = []
    for symbol in e.free_symbols:
        rate = _dx_rate(symbol, rules)
        if rate == 0:
            continue
        terms.append(sympy.diff(e, symbol) * rate)

    return reduce(sympy.Add(*terms), m)


def total_dt_onshell(e, m: Evolution_Model, rules: typing.Optional[typing.Mapping[sympy.Symbol, sympy.Expr]] = None) -> sympy.Expr:
    """ Total t-derivative with every time jet replaced through `q_t = E` and its prolongations. """

    e = reduce(e, m)

    terms = []
    for symbol in e.free_symbols:

        if rules and symbol in rules:
            rate = rules[symbol]
        elif symbol == ETA:
            continue
        else:
            parts = split_jet(symbol)
            if parts is None:
                raise common.Algebra_Error(f"No t-derivative rule for {symbol}")
            rate = _time_jet_value(m, parts[0], parts[1], parts[2] + 1)

        terms.append(sympy.diff(e, symbol) * rate)

    return reduce(sympy.Add(*terms), m)


def _reduce_trig(e: sympy.Expr) -> sympy.Expr:

    e = sympy.expand(e)
    if not e.has(sympy.cos):
        return e

    folded = e.replace(
        lambda item: item.is_Pow and isinstance(item.base, sympy.cos) and item.exp.is_Integer and item.exp > 1,
        lambda item: item.base ** (item.exp % 2) * (1 - sympy.sin(item.base.args[0]) ** 2) ** (item.exp // 2),
    )
    return sympy.expand(folded)


@dataclasses.dataclass(frozen = True)
class Normal_Form:
    """ Reduced fraction over the rationals with a monic (grlex) denominator and `cos` of degree at most one. """

    numerator: sympy.Poly
    denominator: sympy.Poly

    @property
    def is_zero(self) -> bool:
        return self.numerator.is_zero

    @property
    def expr(self) -> sympy.Expr:
        return self.numerator.as_expr() / self.denominator.as_expr()

    @property
    def gens(self):
        return self.numerator.gens

    def _parts(self, other) -> typing.Tuple[sympy.Expr, sympy.Expr, sympy.Expr, sympy.Expr]:
        if not isinstance(other, Normal_Form):
            other = normalize(other)
        return self.numerator.as_expr(), self.denominator.as_expr(), other.numerator.as_expr(), other.denominator.as_expr()

    def __add__(self, other) -> Normal_Form:
        a, b, c, d = self._parts(other)
        return normalize((a * d + c * b) / (b * d))

    def __sub__(self, other) -> Normal_Form:
        a, b, c, d = self._parts(other)
        return normalize((a * d - c * b) / (b * d))

    def __mul__(self, other) -> Normal_Form:
        a, b, c, d = self._parts(other)
        return normalize(a * c / (b * d))

    def __neg__(self) -> Normal_Form:
        return Normal_Form(-self.numerator, self.denominator)

    def same(self, other: Normal_Form) -> bool:
        """ Equality independent of the generator lists of the two polynomials. """
        return (self.numerator.as_expr(), self.denominator.as_expr()) == (other.numerator.as_expr(), other.denominator.as_expr())

    def __str__(self):
        return to_text(self.expr)


def normalize(e) -> Normal_Form:

    e = sympy.sympify(e)

    if e.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        raise common.Algebra_Error(f"Not a finite expression: {e}")

    try:
        num, den = sympy.fraction(sympy.cancel(sympy.together(e)))
        num, den = _reduce_trig(num), _reduce_trig(den)

        if den == 0:
            raise common.Algebra_Error(f"Division by zero in {to_text(e)}")

        # rationalize: multiply by the conjugate in each cos generator
        for cos in sorted(den.atoms(sympy.cos), key = _generator_key):
            a = den.coeff(cos, 0)
            b = den.coeff(cos, 1)
            num = _reduce_trig(num * (a - b * cos))
            den = _reduce_trig(a ** 2 - b ** 2 * cos ** 2)

            if den == 0:
                raise common.Algebra_Error(f"Division by zero in {to_text(e)}")

        num, den = sympy.fraction(sympy.cancel(num / den))
        num, den = _reduce_trig(num), _reduce_trig(den)

        gens = sorted(set(generators(num)) | set(generators(den)), key = _generator_key) or [ETA]

        num_poly = sympy.Poly(num, *gens, domain = 'QQ')
        den_poly = sympy.Poly(den, *gens, domain = 'QQ')

    except BasePolynomialError as error:
        raise common.Algebra_Error(f"Not a rational function of the generators: {e}") from error

    leading = den_poly.LC(order = 'grlex')
    if leading == 0:
        raise common.Algebra_Error(f"Division by zero in {to_text(e)}")

    return Normal_Form(num_poly.quo_ground(leading), den_poly.quo_ground(leading))


def canonical(e) -> sympy.Expr:
    """ The expression of the normal form, the shape every module stores. """
    return normalize(e).expr


def is_zero(e) -> bool:
    return normalize(e).is_zero


def is_zero_onshell(e, m: typing.Optional[Evolution_Model] = None) -> bool:
    """ Exact: constraint substitution and time elimination followed by the canonical zero test. """
    return normalize(reduce(e, m)).is_zero


def _eta_split(e) -> typing.Tuple[typing.Dict[int, sympy.Expr], int, sympy.Expr]:

    form = normalize(e)

    den_terms = sympy.Poly(form.denominator.as_expr(), ETA).terms()
    if len(den_terms) != 1:
        raise common.Laurent_Error(f"Not a finite Laurent polynomial in eta: {form}")

    (shift,), rest = den_terms[0]
    num_terms = {monom[0]: coeff for monom, coeff in sympy.Poly(form.numerator.as_expr(), ETA).terms() if coeff != 0}
    return num_terms, shift, rest


def laurent_eta(e, n_min: int, n_max: int) -> typing.List[sympy.Expr]:
    """ Coefficients of `eta^n` for `n_min <= n <= n_max`. """

    num_terms, shift, rest = _eta_split(e)
    return [canonical(num_terms.get(n + shift, 0) / rest) for n in range(n_min, n_max + 1)]


def eta_bounds(e) -> typing.Tuple[int, int]:
    """ Lowest and highest power of `eta` of a Laurent polynomial, `(0, 0)` for zero. """

    num_terms, shift, _ = _eta_split(e)
    if not num_terms:
        return 0, 0
    return min(num_terms) - shift, max(num_terms) - shift


@functools.lru_cache(maxsize = 1024)
def _lambdify(symbols: typing.Tuple[sympy.Symbol, ...], e: sympy.Expr, module: str):
    return sympy.lambdify(symbols, e, module)


def lambdify(symbols: typing.Sequence[sympy.Symbol], e, module = 'numpy'):
    return _lambdify(tuple(symbols), sympy.sympify(e), module)


def _as_symbol(key) -> sympy.Expr:
    if isinstance(key, str):
        return ETA if key == 'eta' else sympy.Symbol(key)
    return key


def evaluate(e, point: typing.Mapping[typing.Any, float]) -> float:
    """ Floating evaluation. Trig generators are evaluated from the value of their potential. """

    e = sympy.sympify(e)
    values = {_as_symbol(key): value for key, value in point.items()}

    symbols = sorted(e.free_symbols, key = _generator_key)
    missing = [symbol for symbol in symbols if symbol not in values]
    if missing:
        raise common.Evaluation_Error(f"Unassigned generators: {', '.join(map(str, missing))}")

    func = _lambdify(tuple(symbols), e, 'math')
    try:
        return float(func(*[values[symbol] for symbol in symbols]))
    except ZeroDivisionError as error:
        raise common.Evaluation_Error(f"Division by zero evaluating {to_text(e)}") from error
    except (ValueError, OverflowError, TypeError) as error:
        raise common.Evaluation_Error(f"Cannot evaluate {to_text(e)}: {error}") from error


def probe(e, settings: typing.Optional[Settings_Probe] = None, seed = 0) -> float:
    """ Largest magnitude of `e` at random generator values. """

    if settings is None:
        settings = Settings_Probe()

    e = sympy.sympify(e)
    symbols = sorted(e.free_symbols, key = _generator_key)

    rng = numpy.random.default_rng(seed)
    largest = 0.0
    for _ in range(settings.points):
        point = dict(zip(symbols, rng.uniform(settings.low, settings.high, len(symbols))))
        value = abs(evaluate(e, point))
        if not math.isfinite(value):
            raise common.Evaluation_Error(f"Non-finite probe value of {to_text(e)}")
        largest = max(largest, value)

    return largest


def to_text(e) -> str:
    """ Print in the model DSL grammar. """
    return sympy.sstr(sympy.sympify(e), order = 'grlex').replace('**', '^')


_TOKEN = re.compile(r'\s*(?:(?P<number>\d+(?:\.\d*)?|\.\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^(),\[\]]))')

_BINDING_POWER = {
    '+': 10,
    '-': 10,
    '*': 20,
    '/': 20,
    '^': 30,
    '**': 30,
}

_UNARY_BINDING_POWER = 25


class _Parser:
    """ Pratt parser of the model DSL. """

    def __init__(self, text: str, fields: typing.Collection[str], potentials: typing.Collection[str], model: typing.Optional[Evolution_Model]):
        self.text = text
        self.fields = set(fields)
        self.potentials = set(potentials)
        self.model = model
        self.tokens = self._tokenize(text)
        self.index = 0

    def error(self, message: str, position: int):
        return common.Parse_Error(message, position, self.text)

    def _tokenize(self, text: str):

        tokens = []
        position = 0
        length = len(text)

        while position < length:

            if text[position:].strip() == '':
                break

            match = _TOKEN.match(text, position)
            if not match:
                start = position + len(text[position:]) - len(text[position:].lstrip())
                raise self.error(f"Unexpected character {text[start]!r}", start)

            kind = match.lastgroup
            tokens.append((kind, match.group(kind), match.start(kind)))
            position = match.end()

        tokens.append(('end', None, length))
        return tokens

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        if token[0] != 'end':
            self.index += 1
        return token

    def expect(self, value: str):
        kind, text, position = self.advance()
        if kind != 'op' or text != value:
            raise self.error(f"Expected {value!r}", position)

    def left_binding_power(self, token):
        kind, text, _ = token
        if kind == 'op':
            return _BINDING_POWER.get(text, 0)
        return 0

    def parse(self) -> sympy.Expr:
        result = self.expression(0)
        kind, text, position = self.peek()
        if kind != 'end':
            raise self.error(f"Unexpected {text!r}", position)
        return result

    def expression(self, rbp: int) -> sympy.Expr:
        left = self.nud(self.advance())
        while rbp < self.left_binding_power(self.peek()):
            left = self.led(self.advance(), left)
        return left

    def nud(self, token) -> sympy.Expr:
        kind, text, position = token

        if kind == 'number':
            return sympy.Rational(text.rstrip('.') if text.endswith('.') else text)

        if kind == 'name':
            return self.name(text, position)

        if kind == 'op':
            if text == '-':
                return -self.expression(_UNARY_BINDING_POWER)
            if text == '+':
                return self.expression(_UNARY_BINDING_POWER)
            if text == '(':
                inner = self.expression(0)
                self.expect(')')
                return inner

        if kind == 'end':
            raise self.error("Unexpected end of input", position)

        raise self.error(f"Unexpected {text!r}", position)

    def led(self, token, left: sympy.Expr) -> sympy.Expr:
        kind, text, position = token

        if text == '+':
            return left + self.expression(10)

        if text == '-':
            return left - self.expression(10)

        if text == '*':
            return left * self.expression(20)

        if text == '/':
            right = self.expression(20)
            if right == 0:
                raise self.error("Division by zero", position)
            return left / right

        if text in ('^', '**'):
            exponent = self.expression(29)
            if not exponent.is_Integer:
                raise self.error("Exponent must be an integer", position)
            if left == 0 and exponent < 0:
                raise self.error("Division by zero", position)
            return left ** exponent

        raise self.error(f"Unexpected {text!r}", position)

    def name(self, text: str, position: int) -> sympy.Expr:

        if text == 'eta':
            return ETA

        if text in ('sin', 'cos'):
            self.expect('(')
            kind, argument, argument_position = self.advance()
            if kind != 'name' or argument not in self.potentials:
                raise self.error(f"Argument of {text} must be a potential name", argument_position)
            self.expect(')')
            function = sympy.sin if text == 'sin' else sympy.cos
            return function(sympy.Symbol(argument))

        if text == 'D':
            self.expect('[')
            kind, field, field_position = self.advance()
            if kind != 'name' or field not in self.fields:
                raise self.error(f"Unknown field {field!r}", field_position)
            self.expect(',')
            kind, order, order_position = self.advance()
            if kind != 'number' or not order.isdigit():
                raise self.error("Jet order must be a non-negative integer", order_position)
            self.expect(']')
            return jet(field, int(order))

        parts = split_jet(sympy.Symbol(text))
        if parts is None or parts[0] not in self.fields:
            raise self.error(f"Unknown generator {text!r}", position)

        if parts[2]:
            if self.model is None:
                raise self.error(f"Time derivative {text!r} needs a model", position)
            if parts[2] > 1:
                raise self.error(f"Only first time derivatives are supported: {text!r}", position)

        return jet(*parts)


def parse(text: str, model: typing.Optional[Evolution_Model] = None, fields: typing.Optional[typing.Iterable[str]] = None, potentials: typing.Optional[typing.Iterable[str]] = None) -> sympy.Expr:
    """
    Parse the model DSL.

    With a `model` the known names come from it and time jets (`q_t`, `q_xt`, `u_xt`) are eliminated on creation.
    """

    if model is None:
        known_fields = set(DEFAULT_FIELDS)
        known_potentials = set(DEFAULT_POTENTIALS)
    else:
        known_fields = set(model.known_fields)
        known_potentials = set(model.potentials)

    known_potentials |= set(potentials or ())
    known_fields |= set(fields or ()) | known_potentials

    result = _Parser(text, known_fields, known_potentials, model).parse()

    if model is not None:
        result = reduce(result, model)

    return result
