"""Empirical measures, couplings, interpolation, moments, Wasserstein
distances.

Only uniform empirical measures with equal atom counts are supported: every
construction used here pairs N atoms with N atoms, for which the optimal
transport problem is an assignment problem and all integrals are finite sums.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from fractions import Fraction

from .errors import UnsupportedError, ValidationError
from .poly import parse_rational


def _as_point(coords):
    return tuple(
        c if isinstance(c, (Fraction, float)) else parse_rational(c) for c in coords
    )


class EmpiricalMeasure:
    """Uniform average of N Dirac masses at points in R^e."""

    __slots__ = ("atoms", "dim", "_moments")

    def __init__(self, atoms):
        atoms = [_as_point(a) for a in atoms]
        if not atoms:
            raise ValidationError("empirical measure needs at least one atom")
        dim = len(atoms[0])
        if any(len(a) != dim for a in atoms):
            raise ValidationError("atoms of mixed dimension")
        self.atoms = tuple(atoms)
        self.dim = dim
        self._moments = {}

    @property
    def n_atoms(self):
        return len(self.atoms)

    def moment(self, exps):
        """(1/N) * sum over atoms of the monomial with exponents `exps`."""
        exps = tuple(exps)
        cached = self._moments.get(exps)
        if cached is None:
            total = 0
            for atom in self.atoms:
                factor = Fraction(1)
                for c, e in zip(atom, exps):
                    if e:
                        factor = factor * c**e
                total = total + factor
            cached = total * Fraction(1, len(self.atoms))
            self._moments[exps] = cached
        return cached

    def key(self):
        """Multiset of atoms, for marginal comparisons."""
        return tuple(sorted(self.atoms))

    def __eq__(self, other):
        return isinstance(other, EmpiricalMeasure) and self.key() == other.key()

    def __repr__(self):
        return f"EmpiricalMeasure({len(self.atoms)} atoms in R^{self.dim})"


class Coupling:
    """Uniform measure on N point pairs (x_i, y_i) in R^e + R^e.

    The marginals are the empirical measures of the two columns.
    """

    __slots__ = ("pairs", "dim")

    def __init__(self, pairs):
        pairs = [(_as_point(x), _as_point(y)) for x, y in pairs]
        if not pairs:
            raise ValidationError("coupling needs at least one pair")
        dim = len(pairs[0][0])
        if any(len(x) != dim or len(y) != dim for x, y in pairs):
            raise ValidationError("pairs of mixed dimension")
        self.pairs = tuple(pairs)
        self.dim = dim

    @property
    def n_atoms(self):
        return len(self.pairs)

    def left(self):
        return EmpiricalMeasure([x for x, _ in self.pairs])

    def right(self):
        return EmpiricalMeasure([y for _, y in self.pairs])

    def gaps(self):
        """Displacements y_i - x_i."""
        return [tuple(b - a for a, b in zip(x, y)) for x, y in self.pairs]

    def to_json(self):
        return [[[str(c) for c in x], [str(c) for c in y]] for x, y in self.pairs]

    @classmethod
    def from_json(cls, data):
        return cls([(x, y) for x, y in data])

    def __repr__(self):
        return f"Coupling({len(self.pairs)} pairs in R^{self.dim})"


def pair_coupling(x, y):
    """Diagonal coupling of two point lists: pair x_j with y_j."""
    if len(x) != len(y):
        raise ValidationError("point lists of different length")
    return Coupling([(_as_point(a), _as_point(b)) for a, b in zip(x, y)])


def interpolate(coupling, xi):
    """Pushforward of the coupling under x + xi*(y - x)."""
    xi = parse_rational(xi) if not isinstance(xi, float) else xi
    if xi < 0 or xi > 1:
        raise ValidationError("interpolation parameter outside [0, 1]")
    atoms = [
        tuple(a + xi * (b - a) for a, b in zip(x, y)) for x, y in coupling.pairs
    ]
    return EmpiricalMeasure(atoms)


def _gap_sq(x, y):
    return sum((b - a) ** 2 for a, b in zip(x, y))


def coupling_moment(coupling, p, exact=False):
    """(1/N) * sum of |y_i - x_i|^p, Euclidean norm.

    With exact=True the result is a Fraction; this requires p even or
    dimension 1 (odd powers of Euclidean norms are irrational in general).
    """
    n = coupling.n_atoms
    if exact:
        if p % 2 == 0:
            total = sum(_gap_sq(x, y) ** (p // 2) for x, y in coupling.pairs)
            return Fraction(total, n)
        if coupling.dim == 1:
            total = sum(abs(y[0] - x[0]) ** p for x, y in coupling.pairs)
            return Fraction(total, n)
        raise UnsupportedError(
            "odd-power moments of multi-dimensional gaps are irrational; "
            "use float mode"
        )
    total = sum(float(_gap_sq(x, y)) ** (p / 2) for x, y in coupling.pairs)
    return total / n


def _sorted_1d_distance(mu, nu, q):
    xs = sorted(float(a[0]) for a in mu.atoms)
    ys = sorted(float(b[0]) for b in nu.atoms)
    total = sum(abs(a - b) ** q for a, b in zip(xs, ys))
    return (total / len(xs)) ** (1.0 / q)


def _assignment_distance(mu, nu, q):
    from scipy.optimize import linear_sum_assignment

    cost = [
        [float(_gap_sq(a, b)) ** (q / 2) for b in nu.atoms] for a in mu.atoms
    ]
    rows, cols = linear_sum_assignment(cost)
    total = sum(cost[r][c] for r, c in zip(rows, cols))
    return (total / len(mu.atoms)) ** (1.0 / q)


def _brute_distance(mu, nu, q):
    n = mu.n_atoms
    best = None
    for perm in itertools.permutations(range(n)):
        total = sum(
            float(_gap_sq(mu.atoms[i], nu.atoms[perm[i]])) ** (q / 2)
            for i in range(n)
        )
        best = total if best is None else min(best, total)
    return (best / n) ** (1.0 / q)


def wasserstein(mu, nu, q=1):
    """Order-q Wasserstein distance between equal-size empirical measures.

    For uniform measures on N atoms each, the optimum over couplings is
    attained at a permutation, so this is an exact assignment problem. In
    dimension 1 a sort-based shortcut is used and cross-checked against the
    assignment solver.
    """
    if q not in (1, 2):
        raise ValidationError("q must be 1 or 2")
    if mu.n_atoms != nu.n_atoms:
        raise UnsupportedError("unequal atom counts are out of scope")
    if mu.dim != nu.dim:
        raise ValidationError("dimension mismatch")
    value = _assignment_distance(mu, nu, q)
    if mu.dim == 1:
        shortcut = _sorted_1d_distance(mu, nu, q)
        if not math.isclose(value, shortcut, rel_tol=1e-9, abs_tol=1e-12):
            raise AssertionError(
                f"assignment solver ({value}) disagrees with sorted matching "
                f"({shortcut})"
            )
        value = shortcut
    return value


def load_points(path):
    """Point set from CSV (one point per row) or JSON (array of arrays)."""
    text = open(path).read()
    if str(path).endswith(".json") or text.lstrip().startswith("["):
        return [_as_point(row) for row in json.loads(text)]
    rows = [r for r in csv.reader(text.splitlines()) if r]
    return [_as_point(row) for row in rows]


def save_points(path, points):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for p in points:
            writer.writerow([str(c) for c in p])


def load_coupling(path):
    return Coupling.from_json(json.load(open(path)))


def save_coupling(path, coupling):
    json.dump(coupling.to_json(), open(path, "w"))
