"""Pulse-sequence notation: lexer, parser, canonical printer, compiler, executor.

Sequence text is a list of items separated by ``-`` or ``;``::

    Rx(b,pi/3) - Gz - Rx(b,pi/4) - d(1/(2J)) - Rmy(b,pi/4) - Gz

Items:

* ``Rx(s,angle)``, ``Ry``, ``Rmx``, ``Rmy``: hard pulse on spin ``s`` (a or b)
  about +x, +y, -x, -y. ``Rmy(b,t)`` equals ``Ry(b,-t)``.
* ``d(expr)``: delay in seconds; ``J`` is the coupling in Hz, so ``1/(8J)`` is
  an eighth of the coupling period. Juxtaposition binds tighter than ``/``,
  hence ``1/2J`` reads as ``1/(2J)``.
* ``d(zrot:angle)``: delay long enough for the conditional generator
  2 pi J Iz to rotate by ``angle``, i.e. ``angle / (2 pi J)`` seconds.
* ``Gz``: gradient crusher.

Expressions use rational literals, ``pi`` (or ``π``), ``J`` and free symbols
bound at compile time. They are kept in an exact normal form (a sum of
monomials with Fraction coefficients), so printing is canonical.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Mapping, Union

import numpy as np

from nmrgeo.quantum import DensityOperator, Operator, State
from nmrgeo.spins import (
    NOISELESS,
    TWO_PI,
    Delay,
    FrameSpec,
    GradientCrusher,
    HardPulse,
    NoiseConfig,
    PulseEvent,
    SpinSystem,
    apply_crusher,
    apply_delay,
    apply_hard_pulse,
    delay_unitary,
    dephasing_mask,
    frame_hamiltonian,
    pulse_unitary,
)


class SequenceSyntaxError(ValueError):
    """Malformed sequence text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, text: str, position: int):
        self.message = message
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}\n  {text}\n  {' ' * position}^")


class CompileError(ValueError):
    pass


class NonUnitaryProgramError(ValueError):
    pass


# --------------------------------------------------------------------------- expressions

Monomial = tuple  # sorted tuple of (name, power), power != 0
MAX_EXPONENT = 30  # decimal exponent bound on literals


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    powers = dict(m1)
    for name, p in m2:
        powers[name] = powers.get(name, 0) + p
    return tuple(sorted((n, p) for n, p in powers.items() if p != 0))


@dataclass(frozen=True)
class Expr:
    """Exact sum of monomials in pi, J and free symbols."""

    terms: tuple = ()  # sorted ((monomial, Fraction), ...)

    @staticmethod
    def _build(acc: dict) -> Expr:
        return Expr(tuple(sorted((m, c) for m, c in acc.items() if c != 0)))

    @classmethod
    def const(cls, value) -> Expr:
        return cls._build({(): Fraction(value)})

    @classmethod
    def symbol(cls, name: str) -> Expr:
        return cls._build({((name, 1),): Fraction(1)})

    def __add__(self, other: Expr) -> Expr:
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, 0) + c
        return Expr._build(acc)

    def __neg__(self) -> Expr:
        return Expr(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other: Expr) -> Expr:
        return self + (-other)

    def __mul__(self, other: Expr) -> Expr:
        acc: dict = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                acc[m] = acc.get(m, 0) + c1 * c2
        return Expr._build(acc)

    def inverse(self) -> Expr:
        if len(self.terms) != 1:
            raise ZeroDivisionError("can only divide by a single nonzero term")
        m, c = self.terms[0]
        return Expr(((tuple((n, -p) for n, p in m), 1 / c),))

    def symbols(self) -> set:
        return {n for m, _ in self.terms for n, _ in m}

    def free_symbols(self) -> set:
        return self.symbols() - {"pi", "J"}

    def evaluate(self, bindings: Mapping[str, float] | None = None, j: float | None = None) -> float:
        env = {"pi": math.pi}
        if j is not None:
            env["J"] = j
        env.update(bindings or {})
        total = 0.0
        for m, c in self.terms:
            term = float(c)
            for name, p in m:
                if name not in env:
                    raise CompileError(f"unbound symbol {name!r}")
                term *= float(env[name]) ** p
            total += term
        return total

    def __str__(self) -> str:
        return format_expr(self)


def _term_text(mono: Monomial, coeff: Fraction) -> str:
    num_names = [n for n, p in mono for _ in range(p) if p > 0]
    den_names = [n for n, p in mono for _ in range(-p) if p < 0]
    num_parts = ([str(coeff.numerator)] if coeff.numerator != 1 or not num_names else []) + num_names
    num = "*".join(num_parts)
    den_parts = ([str(coeff.denominator)] if coeff.denominator != 1 else []) + den_names
    if not den_parts:
        return num
    if len(den_parts) == 2 and den_parts[1] == "J" and den_parts[0].isdigit():
        return f"{num}/({den_parts[0]}J)"
    if len(den_parts) == 1:
        return f"{num}/{den_parts[0]}"
    return f"{num}/({'*'.join(den_parts)})"


def format_expr(expr: Expr) -> str:
    if not expr.terms:
        return "0"
    out = []
    for i, (mono, coeff) in enumerate(expr.terms):
        body = _term_text(mono, abs(coeff))
        if i == 0:
            out.append(("-" if coeff < 0 else "") + body)
        else:
            out.append((" - " if coeff < 0 else " + ") + body)
    return "".join(out)


# --------------------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>π|[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/(),:;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | end
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SequenceSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# --------------------------------------------------------------------------- AST

AXES = {"x": 0.0, "y": math.pi / 2, "-x": math.pi, "-y": -math.pi / 2}
_PULSE_NAMES = {"Rx": "x", "Ry": "y", "Rmx": "-x", "Rmy": "-y"}
_PULSE_TEXT = {v: k for k, v in _PULSE_NAMES.items()}


@dataclass(frozen=True)
class PulseItem:
    spin: str
    axis: str
    angle: Expr


@dataclass(frozen=True)
class DelayItem:
    expr: Expr
    kind: str = "time"  # "time" (seconds, may use J) or "zrot" (target angle)


@dataclass(frozen=True)
class CrusherItem:
    pass


Item = Union[PulseItem, DelayItem, CrusherItem]


@dataclass(frozen=True)
class SequenceAST:
    items: tuple = ()

    def __add__(self, other: SequenceAST) -> SequenceAST:
        return SequenceAST(self.items + other.items)

    def __len__(self):
        return len(self.items)

    def free_symbols(self) -> set:
        out = set()
        for item in self.items:
            if isinstance(item, PulseItem):
                out |= item.angle.free_symbols()
            elif isinstance(item, DelayItem):
                out |= item.expr.free_symbols()
        return out


# --------------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise SequenceSyntaxError(message, self.text, tok.pos)

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("op", "ident"):
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    # sequence level

    def sequence(self) -> SequenceAST:
        items = []
        if self.tok.kind == "end":
            return SequenceAST(())
        items.append(self.item())
        while self.tok.kind == "op" and self.tok.text in "-;":
            self.advance()
            items.append(self.item())
        if self.tok.kind != "end":
            self.error(f"expected separator '-' or ';', found {self.tok.text!r}")
        return SequenceAST(tuple(items))

    def item(self) -> Item:
        tok = self.tok
        if tok.kind != "ident":
            self.error(f"expected a pulse, delay or Gz, found {tok.text or 'end of input'!r}")
        self.advance()
        if tok.text == "Gz":
            return CrusherItem()
        if tok.text in _PULSE_NAMES:
            self.expect("(")
            spin_tok = self.tok
            if spin_tok.kind != "ident" or spin_tok.text not in ("a", "b"):
                self.error(f"unknown spin label {spin_tok.text!r}; expected a or b")
            self.advance()
            self.expect(",")
            angle_tok = self.tok
            angle = self.expr()
            if "J" in angle.symbols():
                self.error("malformed angle expression: pulse angles cannot depend on J", angle_tok)
            self.expect(")")
            return PulseItem(spin_tok.text, _PULSE_NAMES[tok.text], angle)
        if tok.text == "d":
            self.expect("(")
            kind = "time"
            if self.tok.kind == "ident" and self.tok.text == "zrot":
                self.advance()
                self.expect(":")
                kind = "zrot"
            expr_tok = self.tok
            expr = self.expr()
            if kind == "zrot" and "J" in expr.symbols():
                self.error("malformed angle expression: zrot angles cannot depend on J", expr_tok)
            self.expect(")")
            return DelayItem(expr, kind)
        self.error(f"unknown sequence item {tok.text!r}", tok)

    # expression level

    def expr(self) -> Expr:
        value = self.term()
        # expr() only runs inside d(...) or R?(...), so '-' here is arithmetic
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Expr:
        value = self.juxtaposed()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op_tok = self.advance()
            rhs = self.juxtaposed()
            if op_tok.text == "*":
                value = value * rhs
            else:
                try:
                    value = value * rhs.inverse()
                except ZeroDivisionError:
                    self.error("malformed angle expression: division by zero or by a sum", op_tok)
        return value

    def juxtaposed(self) -> Expr:
        value = self.unary()
        while self.tok.kind in ("num", "ident") or (self.tok.kind == "op" and self.tok.text == "("):
            if self.tok.kind == "num":
                self.error("two numbers in a row")
            value = value * self.primary()
        return value

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            inner = self.unary()
            return -inner if op == "-" else inner
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            try:
                value = Decimal(tok.text)
            except InvalidOperation:
                self.error(f"bad number {tok.text!r}", tok)
            if value != 0 and abs(value.adjusted()) > MAX_EXPONENT:
                self.error(f"number {tok.text!r} out of range", tok)
            return Expr.const(Fraction(value))
        if tok.kind == "ident":
            self.advance()
            if tok.text in ("pi", "π"):
                return Expr.symbol("pi")
            if tok.text in ("zrot", "d", "Gz") or tok.text in _PULSE_NAMES:
                self.error(f"reserved word {tok.text!r} in expression", tok)
            return Expr.symbol(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            value = self.expr()
            self.expect(")")
            return value
        self.error(f"malformed expression near {tok.text or 'end of input'!r}")


def parse_sequence(text: str) -> SequenceAST:
    """Parse sequence text into a SequenceAST (left-to-right = time order)."""
    return _Parser(text).sequence()


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    value = p.expr()
    if p.tok.kind != "end":
        p.error(f"unexpected {p.tok.text!r}")
    return value


def strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def read_sequence_file(path) -> SequenceAST:
    """One sequence per UTF-8 file; ``#`` starts a line comment."""
    with open(path, encoding="utf-8") as fh:
        return parse_sequence(strip_comments(fh.read()))


def _item_text(item: Item) -> str:
    if isinstance(item, CrusherItem):
        return "Gz"
    if isinstance(item, PulseItem):
        return f"{_PULSE_TEXT[item.axis]}({item.spin},{format_expr(item.angle)})"
    prefix = "zrot:" if item.kind == "zrot" else ""
    return f"d({prefix}{format_expr(item.expr)})"


def pretty_print(ast: SequenceAST) -> str:
    return " - ".join(_item_text(item) for item in ast.items)


# --------------------------------------------------------------------------- compiler


@dataclass(frozen=True)
class CompiledProgram:
    events: tuple
    frame: FrameSpec
    total_duration: float = field(default=None)

    def __post_init__(self):
        total = sum(e.duration for e in self.events if isinstance(e, Delay))
        if self.total_duration is None:
            object.__setattr__(self, "total_duration", total)
        elif not math.isclose(self.total_duration, total, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("total_duration must equal the sum of delay durations")

    def __add__(self, other: CompiledProgram) -> CompiledProgram:
        if other.frame != self.frame:
            raise ValueError("cannot concatenate programs compiled in different frames")
        return CompiledProgram(self.events + other.events, self.frame)

    @property
    def has_crusher(self) -> bool:
        return any(isinstance(e, GradientCrusher) for e in self.events)


def _to_float_bindings(bindings) -> dict:
    out = {}
    for name, value in (bindings or {}).items():
        out[name] = parse_expr(value).evaluate() if isinstance(value, str) else float(value)
    return out


def compile_sequence(
    ast: SequenceAST | str,
    sys: SpinSystem,
    frame: FrameSpec,
    bindings: Mapping[str, float] | None = None,
) -> CompiledProgram:
    """Resolve every expression to numbers and durations to seconds."""
    if isinstance(ast, str):
        ast = parse_sequence(ast)
    env = _to_float_bindings(bindings)
    missing = ast.free_symbols() - set(env)
    if missing:
        raise CompileError(f"unbound symbols: {sorted(missing)}")
    events: list[PulseEvent] = []
    for item in ast.items:
        if isinstance(item, CrusherItem):
            events.append(GradientCrusher())
        elif isinstance(item, PulseItem):
            angle = item.angle.evaluate(env)
            try:
                events.append(HardPulse(item.spin, AXES[item.axis], angle))
            except ValueError as exc:
                raise CompileError(str(exc)) from None
        else:
            if item.kind == "zrot":
                duration = item.expr.evaluate(env) / (TWO_PI * sys.j_coupling)
            else:
                duration = item.expr.evaluate(env, j=sys.j_coupling)
            if duration < 0:
                raise CompileError(f"delay {format_expr(item.expr)} resolves to {duration} s < 0")
            events.append(Delay(duration))
    return CompiledProgram(tuple(events), frame)


# --------------------------------------------------------------------------- execution


def net_unitary(prog: CompiledProgram, sys: SpinSystem, noise: NoiseConfig = NOISELESS) -> Operator:
    """Ordered product of the event propagators (first event acts first)."""
    if prog.has_crusher:
        raise NonUnitaryProgramError(
            "program contains a gradient crusher; execute it on a DensityOperator with run_program"
        )
    h = frame_hamiltonian(sys, prog.frame)
    u = np.eye(4, dtype=complex)
    for event in prog.events:
        if isinstance(event, HardPulse):
            u = pulse_unitary(event, noise) @ u
        else:
            u = delay_unitary(h, event.duration) @ u
    return Operator(u, unitary=True)


def run_program(
    state: State,
    prog: CompiledProgram,
    sys: SpinSystem,
    noise: NoiseConfig = NOISELESS,
) -> State:
    """Execute a program event by event; crushers and T2 need a DensityOperator."""
    h = frame_hamiltonian(sys, prog.frame)
    for event in prog.events:
        if isinstance(event, HardPulse):
            state = apply_hard_pulse(state, event, noise)
        elif isinstance(event, Delay):
            state = apply_delay(state, event.duration, h, sys, noise)
        else:
            state = apply_crusher(state)
    return state


def program_channel(prog: CompiledProgram, sys: SpinSystem, noise: NoiseConfig = NOISELESS):
    """Two-spin channel rho -> rho' (numpy in, numpy out) for tomography routines."""

    def channel(rho: np.ndarray) -> np.ndarray:
        return run_matrix(np.asarray(rho, dtype=complex), prog, sys, noise)

    return channel


def run_matrix(
    m: np.ndarray, prog: CompiledProgram, sys: SpinSystem, noise: NoiseConfig = NOISELESS
) -> np.ndarray:
    """Apply the program's linear map to any 4x4 matrix, physical or not."""
    h = frame_hamiltonian(sys, prog.frame)
    for event in prog.events:
        if isinstance(event, HardPulse):
            u = pulse_unitary(event, noise)
            m = u @ m @ u.conj().T
        elif isinstance(event, Delay):
            u = delay_unitary(h, event.duration)
            m = u @ m @ u.conj().T
            if noise.dephasing and event.duration > 0:
                m = m * dephasing_mask(sys, event.duration)
        else:
            m = np.diag(np.diag(m))
    return m


# --------------------------------------------------------------------------- reference sequences

PREP_SEQUENCE = "Rx(b,pi/3) - Gz - Rx(b,pi/4) - d(1/(2J)) - Rmy(b,pi/4) - Gz"
"""Spatial-averaging preparation of the pseudo-pure |00>, on-resonance frame."""

INTERFEROMETER_SEQUENCE = (
    "Ry(b,-pi/2) - d(zrot:theta) - Ry(b,pi/2) - d(zrot:pi) - "
    "Ry(b,-pi/2) - d(zrot:theta) - Ry(b,pi/2)"
)
"""Conditional loop N-A-B-N on spin b; run in the conditional frame."""

INTERFEROMETER_LITERAL_SEQUENCE = (
    "Ry(b,-pi/2) - d(theta/(2J)) - Ry(b,pi/2) - d(pi/(2J)) - "
    "Ry(b,-pi/2) - d(theta/(2J)) - Ry(b,pi/2)"
)
"""Same loop with tau1 = theta/2J, tau2 = pi/2J taken literally as seconds.

Under the 2 pi J Iz generator these delays rotate by pi*theta and pi**2, so
the loop does not close; kept for comparison with the angle-targeted form.
"""

U1_SEQUENCE = "Rx(a,pi/4) - d(1/(8J)) - Rx(b,pi) - d(1/(8J)) - Rmx(b,pi) - Rx(a,pi/4)"
"""U1 = diag(-i, i) on spin a, spin b refocused; run in the offset-a frame."""

U2_SEQUENCE = "d(1/(8J)) - Rx(b,pi) - d(1/(8J)) - Rmx(b,pi) - Ry(a,pi/2)"
"""U2 = -i/sqrt2 [[1,1],[1,-1]] on spin a; run in the offset-a frame."""

REFERENCE_SEQUENCES = {
    "prep": PREP_SEQUENCE,
    "interferometer": INTERFEROMETER_SEQUENCE,
    "interferometer-literal": INTERFEROMETER_LITERAL_SEQUENCE,
    "u1": U1_SEQUENCE,
    "u2": U2_SEQUENCE,
}


def to_density(state: State) -> DensityOperator:
    return state if isinstance(state, DensityOperator) else state.projector()
