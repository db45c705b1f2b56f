"""Printed appendix terms as fixtures for the generated term list.

Fixture file grammar (``data/appendix_terms.txt``), one term per line,
fields separated by ``|``; ``#`` starts a comment::

    tag | family | couplings | sign | factors | probe | target | field | status

``family``
    ``U2``         operator-level block ``Tr_f(U2 rho0)`` (probe still an operator word)
    ``TrAF.U2``    probe traced as well
    ``TrAF.U1U1``  traced sandwich block ``Tr_A Tr_f(U1 rho0 U1^dag)``
``couplings``  ``AA``, ``AB``, ``BA`` or ``BB`` (order of the printed lambdas)
``sign``       sign printed in front of the block, ``+`` or ``-``
``factors``    space separated, e.g. ``J[-,+;A,B;1]``, ``J*[+,-;-A,A;j]``, ``I[+;B;j]``, ``I*[-;A;1]``;
               mode ``1`` is the coherent mode, ``j`` a vacuum mode
``probe``      ``U2``: operator word such as ``A+ A-`` (``-`` for none);
               traced families: printed symbol ``eta``, ``beta``, ``gamma``, ``gamma*`` or ``1``
``target``     ``left/right`` target words, e.g. ``B+/``, ``/B-``, ``B+/B-``, ``/``
``field``      ``conj_alpha^2``, ``abs_alpha^2``, ``1+abs_alpha^2``, ``alpha^2``, ``conj_alpha``, ``alpha``, ``1``
``status``     ``ok`` (exactly one generated match), ``absent`` (no generated term, e.g.
               a nilpotent word), or ``typo: key=value, key=value`` giving the corrected fields

Printed probe symbols are read with the appendix's own trace rules:
``eta = <s+ s->``, ``beta = <s- s+>``, ``gamma* = <s+>``, ``gamma = <s->``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable

from .dyson import OperatorTerm, expand_terms

PAPER_PROBE = {"eta": ("A+", "A-"), "beta": ("A-", "A+"), "gamma*": ("A+",), "gamma": ("A-",), "1": ()}
_WORD_TO_SYMBOL = {v: k for k, v in PAPER_PROBE.items()}
_COHERENT_CLASS = {
    (): "1",
    ("a",): "alpha",
    ("c",): "conj_alpha",
    ("c", "a"): "abs_alpha^2",
    ("a", "c"): "1+abs_alpha^2",
    ("a", "a"): "alpha^2",
    ("c", "c"): "conj_alpha^2",
}
_VACUUM_CLASS = {(): "1", ("a", "c"): "1"}
_FAMILY = {"U2": "U2", "TrAF.U2": "U2", "TrAF.U1U1": "U1U1"}
FIELDS = ("family", "couplings", "sign", "factors", "probe", "target", "field")


@dataclass(frozen=True)
class Description:
    family: str
    couplings: str
    sign: str
    factors: tuple[str, ...]  # sorted
    probe: str
    target: str
    field: str


@dataclass(frozen=True)
class PrintedTermFixture:
    tag: str
    printed: Description
    status: str  # "ok", "absent", "typo"
    corrections: tuple[tuple[str, str], ...] = ()
    line: int = 0

    @property
    def corrected(self) -> Description:
        return _apply(self.printed, dict(self.corrections))


def _apply(desc: Description, changes: dict[str, str]) -> Description:
    kw = {}
    for k, v in changes.items():
        if k not in FIELDS:
            raise ValueError(f"unknown fixture field {k!r}")
        kw[k] = tuple(sorted(v.split())) if k == "factors" else v.strip()
    return replace(desc, **kw)


def _word(text: str) -> str:
    text = text.strip()
    return "" if text in ("", "-") else " ".join(text.split())


def parse_line(line: str, lineno: int = 0) -> PrintedTermFixture | None:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    parts = [p.strip() for p in body.split("|")]
    if len(parts) != 9:
        raise ValueError(f"line {lineno}: expected 9 fields, got {len(parts)}")
    tag, family, couplings, sign, factors, probe, target, field_, status = parts
    if family not in _FAMILY:
        raise ValueError(f"line {lineno}: unknown family {family!r}")
    left, _, right = target.partition("/")
    desc = Description(
        family, couplings, sign, tuple(sorted(factors.split())),
        _word(probe) if family == "U2" else probe, f"{_word(left)}/{_word(right)}", field_,
    )
    corrections: tuple = ()
    if status.startswith("typo"):
        _, _, rest = status.partition(":")
        pairs = []
        for item in re.split(r",\s*(?=[a-z]+=)", rest):
            k, _, v = item.partition("=")
            pairs.append((k.strip(), v.strip()))
        corrections = tuple(pairs)
        status = "typo"
        _apply(desc, dict(corrections))  # validate keys early
    elif status not in ("ok", "absent"):
        raise ValueError(f"line {lineno}: unknown status {status!r}")
    return PrintedTermFixture(tag, desc, status, corrections, lineno)


def load_fixtures(text: str | None = None) -> list[PrintedTermFixture]:
    if text is None:
        text = resources.files("relgate").joinpath("data/appendix_terms.txt").read_text(encoding="utf-8")
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        fx = parse_line(line, n)
        if fx is not None:
            out.append(fx)
    return out


def describe(term: OperatorTerm, mode: str, family: str) -> Description | None:
    """How ``term`` in a coherent (``mode="1"``) or vacuum (``"j"``) mode
    would be printed in ``family``; ``None`` if it vanishes there."""
    if _FAMILY[family] != term.family:
        return None
    fw = term.traced_word("f")
    field_ = (_COHERENT_CLASS if mode == "1" else _VACUUM_CLASS).get(fw)
    if field_ is None:
        return None
    if family == "U2":
        probe = " ".join(term.word("A", "left"))
    else:
        probe = _WORD_TO_SYMBOL.get(term.traced_word("A"))
        if probe is None:
            return None
    target = f"{' '.join(term.word('B', 'left'))}/{' '.join(term.word('B', 'right'))}"
    sign = "+" if complex(term.prefactor).real > 0 else "-"
    factors = tuple(sorted(str(f).replace(";j]", f";{mode}]") for f in term.factors))
    return Description(family, "".join(term.couplings), sign, factors, probe, target, field_)


def _index(terms: Iterable[OperatorTerm]) -> dict[Description, list[OperatorTerm]]:
    idx: dict[Description, list[OperatorTerm]] = {}
    for t in terms:
        for fam in _FAMILY:
            for mode in ("1", "j"):
                d = describe(t, mode, fam)
                if d is not None:
                    idx.setdefault(d, []).append(t)
    return idx


@dataclass
class ReconciliationReport:
    matched: list[str]
    absent: list[str]
    reconciled: list[str]
    unreconciled: list[tuple[str, str]]

    @property
    def ok(self) -> bool:
        return not self.unreconciled

    @property
    def total(self) -> int:
        return len(self.matched) + len(self.absent) + len(self.reconciled) + len(self.unreconciled)

    def summary(self) -> str:
        lines = [
            f"fixtures: {self.total}",
            f"matched: {len(self.matched)}",
            f"absent (nilpotent): {len(self.absent)}",
            f"typos reconciled: {len(self.reconciled)}",
            f"unreconciled: {len(self.unreconciled)}",
        ]
        lines += [f"  {tag}: {why}" for tag, why in self.unreconciled]
        return "\n".join(lines)


def check_against_generated(
    fixtures: Iterable[PrintedTermFixture] | None = None, terms: Iterable[OperatorTerm] | None = None
) -> ReconciliationReport:
    """Match each printed term against the generated second-order list."""
    fixtures = load_fixtures() if fixtures is None else list(fixtures)
    idx = _index(expand_terms(2) if terms is None else terms)
    rep = ReconciliationReport([], [], [], [])
    for fx in fixtures:
        n_printed = len(idx.get(fx.printed, []))
        if fx.status == "ok":
            if n_printed == 1:
                rep.matched.append(fx.tag)
            else:
                rep.unreconciled.append((fx.tag, f"expected one generated match, found {n_printed}"))
        elif fx.status == "absent":
            if n_printed == 0:
                rep.absent.append(fx.tag)
            else:
                rep.unreconciled.append((fx.tag, f"marked absent but {n_printed} generated terms match"))
        else:
            n_fixed = len(idx.get(fx.corrected, []))
            if n_printed == 0 and n_fixed == 1:
                rep.reconciled.append(fx.tag)
            else:
                rep.unreconciled.append((fx.tag, f"typo claim not confirmed (printed matches {n_printed}, corrected matches {n_fixed})"))
    return rep
