"""Periodic-table lookup: element symbol -> proton/neutron/electron counts.

The table in ``data/elements.csv`` lists, for every element H..Og, the atomic
number and the neutron count of its most abundant natural isotope (or of the
longest-lived isotope for elements with no stable nuclide).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


class ElementError(ValueError):
    """Base class for element lookup failures."""


class UnknownElement(ElementError):
    pass


class InvalidIsotope(ElementError):
    pass


class NegativeElectrons(ElementError):
    pass


@dataclass(frozen=True, slots=True)
class ElementRecord:
    """Particle counts for one (possibly charged or isotope-labelled) atom.

    Attributes:
        symbol: Element symbol, canonical capitalisation ("C", "Cl").
        atomic_number: Proton count Z.
        neutron_count: Neutrons N.
        electron_count: Electrons E (Z minus the formal charge).
        isotope: Mass number when it differs from the default isotope, else None.
        charge: Formal charge.
    """

    symbol: str
    atomic_number: int
    neutron_count: int
    electron_count: int
    isotope: int | None = None
    charge: int = 0

    @property
    def protons(self) -> int:
        return self.atomic_number

    @property
    def mass_number(self) -> int:
        return self.atomic_number + self.neutron_count

    def counts(self) -> tuple[int, int, int]:
        """Return ``(P, N, E)``."""
        return self.atomic_number, self.neutron_count, self.electron_count


@lru_cache(maxsize=1)
def _table() -> dict[str, tuple[int, int]]:
    text = resources.files("polycomplex").joinpath("data/elements.csv").read_text()
    table = {}
    for row in csv.DictReader(text.splitlines()):
        table[row["symbol"]] = (int(row["Z"]), int(row["default_neutrons"]))
    return table


def symbols() -> list[str]:
    """All known element symbols ordered by atomic number."""
    return sorted(_table(), key=lambda s: _table()[s][0])


def is_element(symbol: str) -> bool:
    return symbol in _table()


def atomic_number(symbol: str) -> int:
    try:
        return _table()[symbol][0]
    except KeyError:
        raise UnknownElement(f"unknown element symbol {symbol!r}") from None


def lookup(symbol: str, isotope: int | None = None, charge: int = 0) -> ElementRecord:
    """Resolve an element symbol to its particle counts.

    ``isotope`` is a mass number; when omitted the default isotope from the
    vendored table is used.  ``charge`` removes (positive) or adds (negative)
    electrons.
    """
    try:
        z, default_n = _table()[symbol]
    except KeyError:
        raise UnknownElement(f"unknown element symbol {symbol!r}") from None
    if isotope is not None:
        if isotope < z:
            raise InvalidIsotope(f"mass number {isotope} is below Z={z} for {symbol}")
        neutrons = isotope - z
        if neutrons == default_n:
            # the default nuclide written explicitly is the same atom
            isotope = None
    else:
        neutrons = default_n
    electrons = z - charge
    if electrons < 0:
        raise NegativeElectrons(f"charge {charge:+d} leaves {symbol} with {electrons} electrons")
    return ElementRecord(symbol, z, neutrons, electrons, isotope, charge)
