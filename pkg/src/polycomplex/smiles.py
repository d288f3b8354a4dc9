"""SMILES parsing into a molecular graph and an atom inventory.

Covers the organic subset (``B C N O P S F Cl Br I``, aromatic ``b c n o p s``),
bracket atoms with isotope/charge/explicit H, the bond symbols ``- = # $ :``,
branches, ring closures (``1``-``9`` and ``%nn``) and dot-disconnected
components.  Stereo marks (``/ \\ @ @@``) are accepted and dropped.

Aromaticity is taken literally from the input (lowercase atom = aromatic); no
ring perception is done.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator

from . import elements
from .elements import ElementRecord


class SmilesError(ValueError):
    """Structured parse error; ``position`` is a 0-based index into the input."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class EmptyInput(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


class UnclosedBracket(SmilesError):
    pass


class DanglingBranch(SmilesError):
    pass


class UnmatchedRingClosure(SmilesError):
    pass


class DanglingBond(SmilesError):
    pass


class UnknownElement(SmilesError, elements.UnknownElement):
    pass


class ValenceOverflow(SmilesError):
    pass


class ChargeError(SmilesError):
    """Formal charge leaves an atom with a negative electron count."""


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    QUADRUPLE = 4
    AROMATIC = 5

    @property
    def valence_contribution(self) -> int:
        return 1 if self is BondOrder.AROMATIC else int(self)


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    "$": BondOrder.QUADRUPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}

_ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "H"}
_AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as", "te"}

# allowed valences of the organic subset, lowest first
VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

_BRACKET_RE = re.compile(
    r"""
    (?P<isotope>\d+)?
    (?P<symbol>se|as|te|[bcnops]|[A-Z][a-z]?|\*)
    (?P<chiral>@(?:@|TH[12]|AL[12]|SP[123]|TB\d\d?|OH\d\d?)?)?
    (?P<hcount>H\d*)?
    (?P<charge>\++|-+|[+-]\d+)?
    (?::(?P<cls>\d+))?
    """,
    re.VERBOSE | re.ASCII,
)


@dataclass(frozen=True, slots=True)
class Atom:
    symbol: str
    isotope: int | None = None
    charge: int = 0
    aromatic: bool = False
    hcount: int | None = None  # explicit H count; None for organic-subset atoms
    bracket: bool = False


@dataclass(frozen=True, slots=True)
class Bond:
    a: int
    b: int
    order: BondOrder


@dataclass
class MolecularGraph:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)
    smiles: str = ""

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self) -> list[list[tuple[int, BondOrder]]]:
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return adj

    def implicit_hydrogens(self) -> list[int]:
        """Hydrogen count carried by each heavy atom (implicit or bracket-explicit)."""
        bond_sums = [0] * len(self.atoms)
        for bond in self.bonds:
            bond_sums[bond.a] += bond.order.valence_contribution
            bond_sums[bond.b] += bond.order.valence_contribution
        return [_hydrogens_for(atom, s, i) for i, (atom, s) in enumerate(zip(self.atoms, bond_sums))]


def _hydrogens_for(atom: Atom, bond_sum: int, index: int) -> int:
    if atom.bracket:
        return atom.hcount or 0
    allowed = VALENCES[atom.symbol]
    if bond_sum > allowed[-1]:
        raise ValenceOverflow(
            f"atom {index} ({atom.symbol}) has bond order sum {bond_sum}, "
            f"above every allowed valence {allowed}"
        )
    if atom.aromatic:
        # one valence unit goes to the delocalised pi bond
        return max(allowed[0] - bond_sum - 1, 0)
    for valence in allowed:
        if valence >= bond_sum:
            return valence - bond_sum
    raise AssertionError("unreachable")


_DIGITS = frozenset("0123456789")


def _is_digits(text: str) -> bool:
    return bool(text) and all(c in _DIGITS for c in text)


def _parse_bracket(body: str, position: int) -> Atom:
    m = _BRACKET_RE.fullmatch(body)
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom [{body}]", position)
    raw = m["symbol"]
    if raw == "*":
        raise UnknownElement("wildcard atom '*' has no element", position)
    aromatic = raw[0].islower()
    if aromatic and raw not in _AROMATIC_BRACKET:
        raise UnknownElement(f"{raw!r} cannot be aromatic", position)
    symbol = raw.capitalize()
    if not elements.is_element(symbol):
        raise UnknownElement(f"unknown element {raw!r}", position)
    isotope = int(m["isotope"]) if m["isotope"] else None
    if isotope is not None and isotope < elements.atomic_number(symbol):
        raise SmilesSyntaxError(f"mass number {isotope} below atomic number of {symbol}", position)
    hcount = 0
    if m["hcount"]:
        hcount = int(m["hcount"][1:] or 1)
    charge = 0
    if m["charge"]:
        text = m["charge"]
        sign = 1 if text[0] == "+" else -1
        charge = sign * (int(text[1:]) if _is_digits(text[1:]) else len(text))
    return Atom(symbol, isotope, charge, aromatic, hcount, bracket=True)


def _organic_at(s: str, i: int) -> tuple[str, int] | None:
    two = s[i : i + 2]
    if two in ("Cl", "Br"):
        return two, 2
    ch = s[i]
    if ch in _ORGANIC or ch in _AROMATIC_ORGANIC:
        return ch, 1
    return None


def parse(smiles: str | bytes) -> MolecularGraph:
    """Parse a SMILES string.

    Raises a :class:`SmilesError` subclass on malformed input; never anything
    else for arbitrary strings.
    """
    if isinstance(smiles, (bytes, bytearray)):
        smiles = bytes(smiles).decode("latin-1")
    s = smiles.strip()
    if not s:
        raise EmptyInput("empty SMILES string")

    graph = MolecularGraph(smiles=s)
    atoms = graph.atoms
    bonded: dict[tuple[int, int], BondOrder] = {}
    prev: int | None = None
    pending: tuple[BondOrder, int] | None = None  # explicit bond symbol and its position
    branches: list[tuple[int, int]] = []  # (anchor atom, position of '(')
    rings: dict[int, tuple[int, BondOrder | None, int]] = {}
    last_token = ""

    def add_bond(a: int, b: int, order: BondOrder | None, pos: int) -> None:
        if a == b:
            raise SmilesSyntaxError("ring closure bonds an atom to itself", pos)
        key = (min(a, b), max(a, b))
        if key in bonded:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}", pos)
        if order is None:
            both_aromatic = atoms[a].aromatic and atoms[b].aromatic
            order = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
        bonded[key] = order
        graph.bonds.append(Bond(a, b, order))

    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        start = i
        if ch == "[":
            j = s.find("]", i + 1)
            if j < 0:
                raise UnclosedBracket("'[' without matching ']'", i)
            atom = _parse_bracket(s[i + 1 : j], i)
            i = j + 1
        elif (hit := _organic_at(s, i)) is not None:
            symbol, width = hit
            atom = Atom(symbol.capitalize(), aromatic=symbol.islower())
            i += width
        else:
            atom = None

        if atom is not None:
            idx = len(atoms)
            atoms.append(atom)
            if prev is not None:
                add_bond(prev, idx, pending[0] if pending else None, start)
            elif pending is not None:
                raise DanglingBond("bond symbol with no atom before it", pending[1])
            pending = None
            prev = idx
            last_token = "atom"
            continue

        if ch in _BOND_SYMBOLS:
            if prev is None:
                raise DanglingBond(f"bond {ch!r} has no preceding atom", i)
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", i)
            pending = (_BOND_SYMBOLS[ch], i)
            last_token = "bond"
            i += 1
        elif ch == "(":
            if prev is None:
                raise DanglingBranch("branch opened with no anchor atom", i)
            if pending is not None:
                raise DanglingBond("bond symbol before '('", pending[1])
            branches.append((prev, i))
            last_token = "open"
            i += 1
        elif ch == ")":
            if not branches:
                raise DanglingBranch("')' without matching '('", i)
            if pending is not None:
                raise DanglingBond("bond symbol before ')'", pending[1])
            if last_token == "open":
                raise DanglingBranch("empty branch '()'", i)
            prev = branches.pop()[0]
            last_token = "close"
            i += 1
        elif ch in _DIGITS or ch == "%":
            if ch == "%":
                digits = s[i + 1 : i + 3]
                if len(digits) != 2 or not _is_digits(digits):
                    raise SmilesSyntaxError("'%' must be followed by two digits", i)
                num, width = int(digits), 3
            else:
                num, width = int(ch), 1
            if prev is None or last_token not in ("atom", "ring", "bond", "close"):
                raise UnmatchedRingClosure(f"ring bond {num} has no atom to attach to", i)
            order = pending[0] if pending else None
            if num in rings:
                other, other_order, _ = rings.pop(num)
                if order is not None and other_order is not None and order != other_order:
                    raise SmilesSyntaxError(f"conflicting bond orders on ring closure {num}", i)
                add_bond(other, prev, order if order is not None else other_order, i)
            else:
                rings[num] = (prev, order, i)
            pending = None
            last_token = "ring"
            i += width
        elif ch == ".":
            if prev is None or pending is not None:
                raise DanglingBond("'.' must separate two complete components", i)
            prev = None
            last_token = "dot"
            i += 1
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", i)

    if pending is not None:
        raise DanglingBond("SMILES ends with a bond symbol", pending[1])
    if branches:
        raise DanglingBranch("unclosed '('", branches[-1][1])
    if rings:
        num, (_, _, pos) = next(iter(rings.items()))
        raise UnmatchedRingClosure(f"ring bond {num} is never closed", pos)
    if last_token == "dot":
        raise DanglingBond("SMILES ends with '.'", n - 1)
    return graph


def _inventory_key(record: ElementRecord) -> tuple[int, int, int]:
    return (record.atomic_number, record.isotope or 0, record.charge)


@dataclass(frozen=True)
class AtomInventory:
    """Composition of a system as ``(ElementRecord, count)`` pairs.

    Entries are sorted by (atomic number, isotope, charge), so two SMILES of
    the same molecule give equal inventories regardless of atom order.
    """

    entries: tuple[tuple[ElementRecord, int], ...]

    @classmethod
    def from_records(cls, records) -> "AtomInventory":
        counts = Counter(records)
        return cls(tuple(sorted(counts.items(), key=lambda kv: _inventory_key(kv[0]))))

    @property
    def total(self) -> int:
        return sum(count for _, count in self.entries)

    def __iter__(self) -> Iterator[tuple[ElementRecord, int]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def expand(self) -> list[ElementRecord]:
        """One record per atom, in inventory order."""
        return [record for record, count in self.entries for _ in range(count)]

    def as_dict(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for record, count in self.entries:
            label = record.symbol if record.isotope is None else f"{record.isotope}{record.symbol}"
            if record.charge:
                label += f"{record.charge:+d}"
            out[label] = out.get(label, 0) + count
        return out

    def formula(self) -> str:
        """Hill-order formula, isotopes and charges folded into the element."""
        counts: Counter[str] = Counter()
        for record, count in self.entries:
            counts[record.symbol] += count
        order = sorted(counts, key=lambda s: (s != "C", s != "H" or "C" not in counts, s))
        return "".join(f"{s}{counts[s] if counts[s] > 1 else ''}" for s in order)


def atom_inventory(graph: MolecularGraph, include_hydrogens: bool = True) -> AtomInventory:
    """Count the atoms of a parsed molecule, adding implicit hydrogens.

    Bracket atoms contribute exactly their written H count.  With
    ``include_hydrogens=False`` only the explicitly written atoms are counted.
    """
    try:
        records = [elements.lookup(a.symbol, a.isotope, a.charge) for a in graph.atoms]
    except elements.ElementError as exc:
        raise ChargeError(str(exc)) from exc
    if include_hydrogens:
        hydrogen = elements.lookup("H")
        for count in graph.implicit_hydrogens():
            records.extend([hydrogen] * count)
    return AtomInventory.from_records(records)


def inventory_from_smiles(smiles: str, include_hydrogens: bool = True) -> AtomInventory:
    return atom_inventory(parse(smiles), include_hydrogens)
