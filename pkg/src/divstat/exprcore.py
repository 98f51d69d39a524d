"""Scalar expression trees over chart coordinates.

Grammar (precedence low to high): ``+ -`` < ``* /`` < unary ``-`` < ``^``,
with ``^`` right-associative.  Functions: exp, log, sin, cos, sqrt, abs.
Differentiation is exact and symbolic; the only rewriting ever performed
is constant folding.  Evaluation outside the real domain of an operation
raises :class:`EvalDomainError` carrying the offending node -- it never
returns a silent NaN or infinity.
"""

import math

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Una",
    "Bin",
    "ExprError",
    "ParseError",
    "EvalDomainError",
    "parse",
    "evaluate",
]

_UNARY_OPS = ("neg", "exp", "log", "sin", "cos", "sqrt", "abs")
_BINARY_OPS = ("add", "sub", "mul", "div", "pow")

# printing precedence levels
_P_ADD, _P_MUL, _P_UNARY, _P_POW, _P_ATOM = 1, 2, 3, 4, 5


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Syntax or name error; `offset` is the 1-based byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
        self.reason = message


class EvalDomainError(ExprError):
    """Evaluation left the real domain; `node` is the failing sub-expression."""

    def __init__(self, node, reason, point=None):
        at = f" at {tuple(point)}" if point is not None else ""
        super().__init__(f"{reason} in '{node}'{at}")
        self.node = node
        self.reason = reason
        self.point = None if point is None else tuple(point)


class Expr:
    """Immutable expression node."""

    __slots__ = ("_fn",)

    prec = _P_ATOM

    def eval(self, x):
        """Evaluate at coordinate tuple `x`."""
        fn = getattr(self, "_fn", None)
        if fn is None:
            fn = _compile(self)
            object.__setattr__(self, "_fn", fn)
        return fn(x)

    def diff(self, i):
        """Exact partial derivative with respect to coordinate `i`."""
        raise NotImplementedError

    def _walk_eval(self, x):
        raise NotImplementedError


def evaluate(expr, x):
    """Evaluate `expr` at point `x` (sequence of floats)."""
    return expr.eval(x)


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", float(value))

    @property
    def prec(self):
        return _P_UNARY if self.value < 0 else _P_ATOM

    def diff(self, i):
        return Num(0.0)

    def _walk_eval(self, x):
        return self.value

    def __str__(self):
        return repr(self.value)

    def __repr__(self):
        return f"Num({self.value!r})"

    def __eq__(self, other):
        return type(other) is Num and other.value == self.value

    def __hash__(self):
        return hash(("num", self.value))


class Var(Expr):
    __slots__ = ("index", "name")

    def __init__(self, index, name=None):
        object.__setattr__(self, "index", int(index))
        object.__setattr__(self, "name", name if name is not None else f"x{index + 1}")

    def diff(self, i):
        return Num(1.0 if i == self.index else 0.0)

    def _walk_eval(self, x):
        return float(x[self.index])

    def __str__(self):
        # positional-style names are normalized so printing always encodes
        # the evaluation index; custom chart names print verbatim
        n = self.name
        if n[:1] == "x" and n[1:].isdigit() and int(n[1:]) != self.index + 1:
            return f"x{self.index + 1}"
        return n

    def __repr__(self):
        return f"Var({self.index}, {self.name!r})"

    def __eq__(self, other):
        return type(other) is Var and other.index == self.index and other.name == self.name

    def __hash__(self):
        return hash(("var", self.index, self.name))


class Una(Expr):
    __slots__ = ("op", "arg")

    @property
    def prec(self):
        # function applications print as atoms; only neg is an operator
        return _P_UNARY if self.op == "neg" else _P_ATOM

    def __init__(self, op, arg):
        if op not in _UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)

    def diff(self, i):
        f, op = self.arg, self.op
        df = f.diff(i)
        if op == "neg":
            return _una("neg", df)
        if op == "exp":
            return _bin("mul", _una("exp", f), df)
        if op == "log":
            return _bin("div", df, f)
        if op == "sin":
            return _bin("mul", _una("cos", f), df)
        if op == "cos":
            return _una("neg", _bin("mul", _una("sin", f), df))
        if op == "sqrt":
            return _bin("div", df, _bin("mul", Num(2.0), _una("sqrt", f)))
        # abs: sign(f) * f', undefined at f == 0 (the division reports it)
        return _bin("mul", _bin("div", f, _una("abs", f)), df)

    def _walk_eval(self, x):
        v = self.arg._walk_eval(x)
        if self.op == "neg":
            return -v
        return _apply_una(self.op, v, self, x)

    def __str__(self):
        if self.op == "neg":
            s = str(self.arg)
            if self.arg.prec < _P_UNARY:
                s = f"({s})"
            return f"-{s}"
        return f"{self.op}({self.arg})"

    def __repr__(self):
        return f"Una({self.op!r}, {self.arg!r})"

    def __eq__(self, other):
        return type(other) is Una and other.op == self.op and other.arg == self.arg

    def __hash__(self):
        return hash(("una", self.op, self.arg))


class Bin(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        if op not in _BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def prec(self):
        if self.op in ("add", "sub"):
            return _P_ADD
        if self.op in ("mul", "div"):
            return _P_MUL
        return _P_POW

    def diff(self, i):
        f, g, op = self.left, self.right, self.op
        if op == "add":
            return _bin("add", f.diff(i), g.diff(i))
        if op == "sub":
            return _bin("sub", f.diff(i), g.diff(i))
        if op == "mul":
            return _bin("add", _bin("mul", f.diff(i), g), _bin("mul", f, g.diff(i)))
        if op == "div":
            num = _bin("sub", _bin("mul", f.diff(i), g), _bin("mul", f, g.diff(i)))
            return _bin("div", num, _bin("mul", g, g))
        # pow
        if isinstance(g, Num):
            c = g.value
            step = _bin("mul", Num(c), _bin("pow", f, Num(c - 1.0)))
            return _bin("mul", step, f.diff(i))
        # general exponent: f^g * (g' log f + g f'/f)
        t1 = _bin("mul", g.diff(i), _una("log", f))
        t2 = _bin("mul", g, _bin("div", f.diff(i), f))
        return _bin("mul", self, _bin("add", t1, t2))

    def _walk_eval(self, x):
        a = self.left._walk_eval(x)
        b = self.right._walk_eval(x)
        return _apply_bin(self.op, a, b, self, x)

    def __str__(self):
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/", "pow": "^"}[self.op]
        p = self.prec
        ls, rs = str(self.left), str(self.right)
        if self.op == "pow":
            # right-associative: parenthesize the base at equal precedence
            if self.left.prec <= p:
                ls = f"({ls})"
            if self.right.prec < p:
                rs = f"({rs})"
        else:
            if self.left.prec < p:
                ls = f"({ls})"
            # left-associative: parenthesize the right operand at equal
            # precedence so the printed tree re-parses to the same shape
            if self.right.prec <= p:
                rs = f"({rs})"
        return f"{ls}{sym}{rs}"

    def __repr__(self):
        return f"Bin({self.op!r}, {self.left!r}, {self.right!r})"

    def __eq__(self, other):
        return (
            type(other) is Bin
            and other.op == self.op
            and other.left == self.left
            and other.right == self.right
        )

    def __hash__(self):
        return hash(("bin", self.op, self.left, self.right))


# evaluation guards; shared by the tree walker and compiled code


def _apply_una(op, v, node, x=None):
    try:
        if op == "exp":
            r = math.exp(v)
        elif op == "log":
            if v <= 0.0:
                raise EvalDomainError(node, "log of non-positive value", x)
            r = math.log(v)
        elif op == "sin":
            r = math.sin(v)
        elif op == "cos":
            r = math.cos(v)
        elif op == "sqrt":
            if v < 0.0:
                raise EvalDomainError(node, "sqrt of negative value", x)
            r = math.sqrt(v)
        else:
            r = abs(v)
    except OverflowError:
        raise EvalDomainError(node, "overflow", x) from None
    if not math.isfinite(r):
        raise EvalDomainError(node, "non-finite result", x)
    return r


def _apply_bin(op, a, b, node, x=None):
    try:
        if op == "add":
            r = a + b
        elif op == "sub":
            r = a - b
        elif op == "mul":
            r = a * b
        elif op == "div":
            if b == 0.0:
                raise EvalDomainError(node, "division by zero", x)
            r = a / b
        else:
            r = math.pow(a, b)
    except OverflowError:
        raise EvalDomainError(node, "overflow", x) from None
    except ValueError:
        raise EvalDomainError(node, "power outside real domain", x) from None
    if not math.isfinite(r):
        raise EvalDomainError(node, "overflow" if math.isinf(r) else "non-finite result", x)
    return r


# smart constructors: constant folding only


def _una(op, arg):
    if isinstance(arg, Num):
        try:
            return Num(-arg.value if op == "neg" else _apply_una(op, arg.value, arg))
        except EvalDomainError:
            pass
    return Una(op, arg)


def _bin(op, left, right):
    if isinstance(left, Num) and isinstance(right, Num):
        try:
            return Num(_apply_bin(op, left.value, right.value, left))
        except EvalDomainError:
            pass
    return Bin(op, left, right)


# compilation to a plain python callable; on any non-finite outcome the
# tree walker re-runs to report the offending node


def _compile(root):
    nodes = []
    parts = []

    def emit(e):
        if isinstance(e, Num):
            return repr(e.value)
        if isinstance(e, Var):
            return f"x[{e.index}]"
        nid = len(nodes)
        nodes.append(e)
        if isinstance(e, Una):
            a = emit(e.arg)
            if e.op == "neg":
                return f"(-{a})"
            if e.op == "abs":
                return f"abs({a})"
            return f"_u1(_{_UNARY_OPS.index(e.op)}, {a}, {nid})"
        a, b = emit(e.left), emit(e.right)
        if e.op == "add":
            return f"({a} + {b})"
        if e.op == "sub":
            return f"({a} - {b})"
        if e.op == "mul":
            return f"({a} * {b})"
        if e.op == "div":
            return f"_dv({a}, {b}, {nid})"
        return f"_pw({a}, {b}, {nid})"

    body = emit(root)
    src = f"def _raw(x):\n    return {body}\n"

    def _u1(fn, v, nid):
        try:
            return fn(v)
        except (ValueError, OverflowError):
            raise EvalDomainError(nodes[nid], "outside real domain") from None

    def _dv(a, b, nid):
        try:
            return a / b
        except ZeroDivisionError:
            raise EvalDomainError(nodes[nid], "division by zero") from None

    def _pw(a, b, nid):
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError):
            raise EvalDomainError(nodes[nid], "power outside real domain") from None

    ns = {"_u1": _u1, "_dv": _dv, "_pw": _pw, "abs": abs, "math": math}
    for k, op in enumerate(_UNARY_OPS):
        if op not in ("neg", "abs"):
            ns[f"_{k}"] = getattr(math, op)
    exec(src, ns)  # noqa: S102 - generated from a validated AST
    raw = ns["_raw"]

    def fn(x):
        try:
            v = raw(x)
        except EvalDomainError as err:
            raise EvalDomainError(err.node, err.reason, x) from None
        if math.isfinite(v):
            return v
        # locate the offending node with the guarded walker
        root._walk_eval(x)
        raise EvalDomainError(root, "non-finite result", x)

    return fn


# recursive-descent parser


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos  # 0-based byte offset


def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"bad number {text!r}", i + 1) from None
            toks.append(_Token("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Token("ident", src[i:j], i))
            i = j
            continue
        if c in "+-*/^()<>=&|!,":
            toks.append(_Token("op", c, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", i + 1)
    toks.append(_Token("eof", "", n))
    return toks


_FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs")


class _Parser:
    def __init__(self, src, coords):
        self.src = src
        self.coords = tuple(coords)
        self.toks = _tokenize(src)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self):
        t = self.toks[self.k]
        self.k += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok if tok is not None else self.peek()
        raise ParseError(msg, tok.pos + 1)

    def expect_op(self, text):
        t = self.peek()
        if t.kind == "op" and t.text == text:
            return self.take()
        self.fail(f"expected {text!r}")

    def parse_expr(self):
        return self.parse_add()

    def parse_add(self):
        e = self.parse_mul()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.take()
                rhs = self.parse_mul()
                e = _bin("add" if t.text == "+" else "sub", e, rhs)
            else:
                return e

    def parse_mul(self):
        e = self.parse_unary()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "*/":
                self.take()
                rhs = self.parse_unary()
                e = _bin("mul" if t.text == "*" else "div", e, rhs)
            else:
                return e

    def parse_unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return _una("neg", self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            return _bin("pow", base, self.parse_unary())
        return base

    def parse_atom(self):
        t = self.take()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if t.text not in _FUNCTIONS:
                    self.fail(f"unknown function {t.text!r}", t)
                self.take()
                arg = self.parse_expr()
                self.expect_op(")")
                return _una(t.text, arg)
            if t.text in self.coords:
                idx = self.coords.index(t.text)
                return Var(idx, t.text)
            self.fail(f"unknown identifier {t.text!r}", t)
        if t.kind == "op" and t.text == "(":
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if t.kind == "eof":
            self.fail("unexpected end of input", t)
        self.fail(f"unexpected token {t.text!r}", t)


def parse(src, coords):
    """Parse `src` over coordinate names `coords` into an Expr."""
    p = _Parser(src, coords)
    e = p.parse_expr()
    t = p.peek()
    if t.kind != "eof":
        p.fail(f"unexpected token {t.text!r}", t)
    return e
