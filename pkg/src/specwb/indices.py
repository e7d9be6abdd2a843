"""Band-math expressions and the named spectral-index catalog.

Expression grammar (whitespace ignored)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' factor)?
    base   := number | R<wl> | D1<wl> | D2<wl> | '(' expr ')'

`R800` is the reflectance at the band nearest 800 nm; `D1<wl>` and `D2<wl>`
are the first and second derivative at that band. The catalog below covers
widely used vegetation and soil indices; anything else is a one-line custom
expression away.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from specwb.errors import ExpressionError, SelectionError
from specwb.preprocess import derivative
from specwb.speclib import Speclib

__all__ = [
    "Num",
    "BandRef",
    "BinOp",
    "parse_index",
    "expr_to_string",
    "eval_index",
    "vegindex",
    "INDEX_CATALOG",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class BandRef:
    kind: str  # R, D1 or D2
    wavelength: float


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "IndexExpr"
    right: "IndexExpr"


IndexExpr = Union[Num, BandRef, BinOp]

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<band>(?:D1|D2|R)(?:\d+(?:\.\d+)?))"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(
                f"unknown token {text[bad]!r} at position {bad + 1}", position=bad + 1
            )
        if m.lastgroup == "band":
            tok = m.group("band")
            kind = "D1" if tok.startswith("D1") else "D2" if tok.startswith("D2") else "R"
            tokens.append(("band", (kind, float(tok[len(kind):])), m.start("band") + 1))
        elif m.lastgroup == "number":
            tokens.append(("number", float(m.group("number")), m.start("number") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("end", None, len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, value, pos = self.peek()
        what = "end of input" if kind == "end" else repr(value)
        raise ExpressionError(
            f"syntax error at position {pos}: expected {expected}, found {what}",
            position=pos,
        )

    def parse(self) -> IndexExpr:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("end of expression")
        return node

    def expr(self) -> IndexExpr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> IndexExpr:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> IndexExpr:
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = BinOp("^", node, self.factor())
        return node

    def base(self) -> IndexExpr:
        kind, value, pos = self.peek()
        if kind == "number":
            self.take()
            return Num(value)
        if kind == "band":
            self.take()
            return BandRef(*value)
        if kind == "op" and value == "(":
            self.take()
            node = self.expr()
            if not (self.peek()[0] == "op" and self.peek()[1] == ")"):
                self.fail("')'")
            self.take()
            return node
        self.fail("a number, band reference or '('")


def parse_index(text: str) -> IndexExpr:
    """Parse a band-math expression into its syntax tree."""
    return _Parser(text).parse()


def expr_to_string(expr: IndexExpr) -> str:
    """Fully parenthesized text form; reparsing it yields an identical tree."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, BandRef):
        return f"{expr.kind}{expr.wavelength:g}"
    return f"({expr_to_string(expr.left)} {expr.op} {expr_to_string(expr.right)})"


class _EvalContext:
    def __init__(self, s: Speclib):
        self.s = s
        self._derivs: dict[str, Speclib] = {}
        self.div_zero = 0

    def band_values(self, ref: BandRef) -> np.ndarray:
        if not self.s.grid.covers(ref.wavelength):
            raise ExpressionError(
                f"wavelength out of range: {ref.kind}{ref.wavelength:g} is outside "
                f"the grid [{self.s.wavelength[0]:g}, {self.s.wavelength[-1]:g}] nm"
            )
        if ref.kind == "R":
            source = self.s
        else:
            if ref.kind not in self._derivs:
                self._derivs[ref.kind] = derivative(self.s, order=int(ref.kind[1]))
            source = self._derivs[ref.kind]
        return source.values[:, self.s.grid.nearest_band(ref.wavelength)]


def _eval(expr: IndexExpr, ctx: _EvalContext):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, BandRef):
        return ctx.band_values(expr)
    left = _eval(expr.left, ctx)
    right = _eval(expr.right, ctx)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if expr.op == "^":
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.power(left, right)
    zero = np.asarray(right) == 0
    n_zero = int(np.count_nonzero(zero))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(zero, np.nan, left / np.where(zero, 1.0, right))
    if n_zero:
        ctx.div_zero += n_zero if np.ndim(zero) else ctx.s.n_spectra
    return out


def eval_index(expr: IndexExpr | str, s: Speclib) -> np.ndarray:
    """Evaluate an expression per spectrum; divisions by zero yield NaN."""
    if isinstance(expr, str):
        expr = parse_index(expr)
    ctx = _EvalContext(s)
    out = _eval(expr, ctx)
    if ctx.div_zero:
        warnings.warn(
            f"{ctx.div_zero} division(s) by zero evaluated to NaN", stacklevel=2
        )
    return np.broadcast_to(np.asarray(out, dtype=float), (s.n_spectra,)).copy()


INDEX_CATALOG: dict[str, str] = {
    "NDVI": "(R800-R680)/(R800+R680)",
    "SR": "R800/R680",
    "PRI": "(R531-R570)/(R531+R570)",
    "CAI": "0.5*(R2000+R2200)-R2100",
    "NDWI": "(R860-R1240)/(R860+R1240)",
    "GNDVI": "(R800-R550)/(R800+R550)",
    "EVI": "2.5*(R800-R670)/(R800+6*R670-7.5*R475+1)",
    "SAVI": "1.5*(R800-R670)/(R800+R670+0.5)",
    "OSAVI": "1.16*(R800-R670)/(R800+R670+0.16)",
    "MSI": "R1600/R820",
    "mNDVI705": "(R750-R705)/(R750+R705-2*R445)",
    "mSR705": "(R750-R445)/(R705-R445)",
    "MCARI": "((R700-R670)-0.2*(R700-R550))*(R700/R670)",
    "TCARI": "3*((R700-R670)-0.2*(R700-R550)*(R700/R670))",
    "TVI": "0.5*(120*(R750-R550)-200*(R670-R550))",
    "ZM": "R750/R710",
    "Vogelmann": "R740/R720",
    "Vogelmann2": "(R734-R747)/(R715+R726)",
    "GI": "R554/R677",
    "MTCI": "(R754-R709)/(R709-R681)",
    "PSRI": "(R678-R500)/R750",
    "SIPI": "(R800-R445)/(R800-R680)",
    "CRI1": "1/R510-1/R550",
    "CRI2": "1/R510-1/R700",
    "ARI": "1/R550-1/R700",
    "WBI": "R900/R970",
    "Datt": "(R850-R710)/(R850-R680)",
    "Carter": "R695/R420",
    "NPCI": "(R680-R430)/(R680+R430)",
    "Boochs": "D1703",
    "Boochs2": "D1720/D1700",
}


def vegindex(s: Speclib, name: str) -> np.ndarray:
    """Evaluate a cataloged index by name (case-insensitive)."""
    formula = INDEX_CATALOG.get(name)
    if formula is None:
        folded = {k.lower(): k for k in INDEX_CATALOG}
        if name.lower() in folded:
            formula = INDEX_CATALOG[folded[name.lower()]]
    if formula is None:
        raise SelectionError(
            f"unknown index {name!r}; available: {', '.join(sorted(INDEX_CATALOG))}"
        )
    return eval_index(formula, s)
