"""Phase-field fracture evolutions by alternating minimization on P1 elements."""

__version__ = "0.1.0"
