"""Cylindrical polynomial measure functionals and their iterated derivatives.

A functional is f(x0, mu) = int ... int k(x0, u_1, ..., u_p) dmu(u_1) ... dmu(u_p)
for a polynomial kernel k (the spatial argument x0 is optional). On empirical
measures every integral is a finite sum, so all derivative identities are
evaluated with zero truncation error.

Differentiating with respect to the measure inserts a Dirac mass: it pins one
still-integrated kernel slot to a fresh free variable and differentiates that
slot, summed over all choices of slot. Differentiating in a free variable (or
in x0) differentiates the slot already pinned to it. A derivative indexed by a
tagged sequence is therefore a sum of terms, each term recording which kernel
slot each free variable pins and which slot each tensor direction hit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError
from .poly import MPoly, Tensor, format_rational, parse_rational
from .tagged import TaggedSeq, as_tagged


class MomentView:
    """Duck-typed empirical measure over atoms with generic scalar
    coordinates (Fractions, floats, path or symbolic polynomials).

    Provides the `moment` interface the evaluators integrate against.
    """

    __slots__ = ("atoms", "dim", "_moments")

    def __init__(self, atoms, dim=None):
        self.atoms = [tuple(a) for a in atoms]
        self.dim = dim if dim is not None else len(self.atoms[0])
        self._moments = {}

    @property
    def n_atoms(self):
        return len(self.atoms)

    def moment(self, exps):
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


class PolyKernel:
    """Polynomial kernel k: (R^e)^(arity [+ spatial]) -> R^d.

    Scalar variables are laid out slot-major: the spatial slot first when
    present, then the integrated slots 1..arity, each contributing e
    coordinates.
    """

    __slots__ = ("e", "d", "arity", "has_spatial", "components")

    def __init__(self, e, d, arity, has_spatial, components):
        self.e = e
        self.d = d
        self.arity = arity
        self.has_spatial = bool(has_spatial)
        nvars = (arity + self.has_spatial) * e
        components = tuple(components)
        if len(components) != d:
            raise ValidationError("one polynomial per output component required")
        for comp in components:
            if comp.nvars != nvars:
                raise ValidationError("component variable count mismatch")
        self.components = components

    @property
    def nvars(self):
        return (self.arity + self.has_spatial) * self.e

    @property
    def n_slots(self):
        return self.arity + self.has_spatial

    def slot_offset(self, slot):
        """First variable index of a slot (slot 0 is spatial when present)."""
        if self.has_spatial:
            return slot * self.e
        if slot == 0:
            raise ValidationError("kernel has no spatial slot")
        return (slot - 1) * self.e

    def slots(self):
        start = 0 if self.has_spatial else 1
        return range(start, self.arity + 1)

    def degree(self):
        return max(c.degree() for c in self.components)

    def add(self, other):
        if (self.e, self.d, self.arity, self.has_spatial) != (
            other.e,
            other.d,
            other.arity,
            other.has_spatial,
        ):
            raise ValidationError("kernel shapes differ")
        return PolyKernel(
            self.e,
            self.d,
            self.arity,
            self.has_spatial,
            [a + b for a, b in zip(self.components, other.components)],
        )

    def to_json(self):
        terms = []
        for out, comp in enumerate(self.components):
            for exps in sorted(comp.terms):
                rows = [
                    list(exps[i * self.e : (i + 1) * self.e])
                    for i in range(self.n_slots)
                ]
                terms.append(
                    {
                        "out": out,
                        "coeff": format_rational(comp.terms[exps]),
                        "exps": rows,
                    }
                )
        return {
            "e": self.e,
            "d": self.d,
            "arity": self.arity,
            "spatial": self.has_spatial,
            "terms": terms,
        }

    @classmethod
    def from_json(cls, data):
        e, d, arity = data["e"], data["d"], data["arity"]
        spatial = data["spatial"]
        nvars = (arity + bool(spatial)) * e
        comps = [dict() for _ in range(d)]
        for term in data["terms"]:
            rows = term["exps"]
            if len(rows) != arity + bool(spatial):
                raise ValidationError("exponent matrix has wrong row count")
            flat = tuple(int(x) for row in rows for x in row)
            if len(flat) != nvars or any(x < 0 for x in flat):
                raise ValidationError("bad exponent matrix")
            out = term["out"]
            comps[out][flat] = comps[out].get(flat, Fraction(0)) + parse_rational(
                term["coeff"]
            )
        return cls(e, d, arity, spatial, [MPoly(nvars, c) for c in comps])

    def __repr__(self):
        return (
            f"PolyKernel(e={self.e}, d={self.d}, arity={self.arity}, "
            f"spatial={self.has_spatial})"
        )


class PolyFunctional:
    """A kernel integrated against the measure in every non-spatial slot."""

    __slots__ = ("kernel",)

    def __init__(self, kernel):
        self.kernel = kernel

    @property
    def has_spatial(self):
        return self.kernel.has_spatial

    def __add__(self, other):
        return PolyFunctional(self.kernel.add(other.kernel))

    def eval(self, x0, mu):
        """f(x0, mu) as a length-d vector of scalars."""
        k = self.kernel
        slot_values = {}
        if k.has_spatial:
            if x0 is None:
                raise ValidationError("functional has a spatial argument")
            slot_values[0] = tuple(x0)
        elif x0 is not None:
            raise ValidationError("functional has no spatial argument")
        return [
            _eval_poly_slots(k, comp, slot_values, mu) for comp in k.components
        ]

    def to_json(self):
        return self.kernel.to_json()

    @classmethod
    def from_json(cls, data):
        return cls(PolyKernel.from_json(data))

    def __repr__(self):
        return f"PolyFunctional({self.kernel!r})"


def _eval_poly_slots(kernel, poly, slot_values, measure):
    """Evaluate a kernel-variable polynomial; slots absent from
    `slot_values` are integrated against `measure`.

    Per monomial, the integration over independent slots factorizes into a
    product of per-slot moments, so cost is linear in the atom count.
    """
    e = kernel.e
    total = 0
    for exps, coeff in poly.terms.items():
        factor = coeff
        for slot in kernel.slots():
            off = kernel.slot_offset(slot)
            row = exps[off : off + e]
            if not any(row):
                continue
            vals = slot_values.get(slot)
            if vals is None:
                if measure is None:
                    raise ValidationError("integrated slot without a measure")
                factor = factor * measure.moment(row)
            else:
                for c, p in zip(vals, row):
                    if p:
                        factor = factor * c**p
        total = total + factor
    return total


@dataclass(frozen=True)
class DerivTerm:
    """One term of an iterated derivative.

    pins: kernel slot assigned to each free variable 1..m (in order); every
          remaining non-spatial slot stays integrated.
    dirs: the kernel slot each tensor direction differentiated (slot 0 is the
          spatial argument).
    """

    pins: tuple
    dirs: tuple


class DerivTermSum:
    """The derivative of a functional indexed by a tagged sequence, as a sum
    of slot-assignment terms over the shared kernel."""

    __slots__ = ("functional", "seq", "terms", "_dcache")

    def __init__(self, functional, seq, terms):
        self.functional = functional
        self.seq = seq
        self.terms = tuple(terms)
        self._dcache = {}

    @property
    def kernel(self):
        return self.functional.kernel

    @property
    def order(self):
        return len(self.seq)

    @property
    def n_free(self):
        return self.seq.m

    def deriv_poly(self, out, term, coords):
        """The kernel component differentiated once per direction, direction
        p acting on coordinate coords[p] of slot term.dirs[p]."""
        kernel = self.kernel
        pairs = tuple(
            sorted(
                kernel.slot_offset(slot) + c for slot, c in zip(term.dirs, coords)
            )
        )
        key = (out, pairs)
        poly = self._dcache.get(key)
        if poly is None:
            poly = kernel.components[out]
            for var in pairs:
                poly = poly.diff(var)
            self._dcache[key] = poly
        return poly

    def __repr__(self):
        return (
            f"DerivTermSum(seq={self.seq.values}, {len(self.terms)} terms, "
            f"kernel={self.kernel!r})"
        )


def lions_derivative(f, a):
    """Symbolic mixed derivative of `f` indexed by the tagged sequence `a`.

    Built letter by letter: 0 differentiates the spatial argument, a repeated
    positive value differentiates the slot pinned to that free variable, and
    a new value pins each still-integrated slot in turn (one term per choice)
    and differentiates it.
    """
    a = as_tagged(a)
    kernel = f.kernel
    if any(v == 0 for v in a.values) and not kernel.has_spatial:
        raise ValidationError(
            "sequence contains spatial letters but the functional has no "
            "spatial argument"
        )
    terms = [DerivTerm((), ())]
    running_max = 0
    for letter in a.values:
        new_terms = []
        if letter == 0:
            for t in terms:
                new_terms.append(DerivTerm(t.pins, t.dirs + (0,)))
        elif letter <= running_max:
            for t in terms:
                new_terms.append(DerivTerm(t.pins, t.dirs + (t.pins[letter - 1],)))
        else:
            running_max = letter
            for t in terms:
                used = set(t.pins)
                for slot in range(1, kernel.arity + 1):
                    if slot not in used:
                        new_terms.append(
                            DerivTerm(t.pins + (slot,), t.dirs + (slot,))
                        )
        terms = new_terms
        if not terms:
            break
    return DerivTermSum(f, a, terms)


def _slot_values_for(ts, term, x0, free):
    kernel = ts.kernel
    slot_values = {}
    if kernel.has_spatial:
        slot_values[0] = tuple(x0)
    for j, slot in enumerate(term.pins):
        slot_values[slot] = tuple(free[j])
    return slot_values


def eval_derivative(ts, x0, mu, free):
    """Evaluate a derivative at (x0, mu, free variables).

    Returns a tensor of shape (d, e, ..., e) with one e-axis per tensor
    direction (i.e. per letter of the indexing sequence). Exact when the
    inputs are rational.
    """
    kernel = ts.kernel
    if kernel.has_spatial and x0 is None:
        raise ValidationError("missing spatial argument")
    if not kernel.has_spatial and x0 is not None:
        raise ValidationError("functional has no spatial argument")
    if len(free) != ts.n_free:
        raise ValidationError(
            f"expected {ts.n_free} free points, got {len(free)}"
        )
    if mu is None or mu.n_atoms < 1:
        raise ValidationError("empirical measure required")
    e, d, n = kernel.e, kernel.d, ts.order
    out = Tensor((d,) + (e,) * n)
    for term in ts.terms:
        slot_values = _slot_values_for(ts, term, x0, free)
        for comp in range(d):
            for coords in itertools.product(range(e), repeat=n):
                poly = ts.deriv_poly(comp, term, coords)
                if not poly:
                    continue
                val = _eval_poly_slots(kernel, poly, slot_values, mu)
                idx = (comp,) + coords
                out[idx] = out[idx] + val
    return out


def eval_derivative_brute(ts, x0, mu, free):
    """Reference evaluator: integrated slots summed by explicit nested loops
    over atom assignments. Used to cross-check the factorized path."""
    kernel = ts.kernel
    e, d, n = kernel.e, kernel.d, ts.order
    out = Tensor((d,) + (e,) * n)
    for term in ts.terms:
        base_values = _slot_values_for(ts, term, x0, free)
        int_slots = [
            s for s in range(1, kernel.arity + 1) if s not in term.pins
        ]
        scale = Fraction(1, mu.n_atoms ** len(int_slots))
        for assign in itertools.product(mu.atoms, repeat=len(int_slots)):
            slot_values = dict(base_values)
            for slot, atom in zip(int_slots, assign):
                slot_values[slot] = tuple(atom)
            flat = []
            for s in kernel.slots():
                flat.extend(slot_values[s])
            for comp in range(d):
                for coords in itertools.product(range(e), repeat=n):
                    poly = ts.deriv_poly(comp, term, coords)
                    if not poly:
                        continue
                    idx = (comp,) + coords
                    out[idx] = out[idx] + scale * poly.eval(flat)
    return out


def contract_derivative(ts, x0, mu, free, direction_vectors):
    """Evaluate and contract tensor directions against given vectors.

    direction_vectors has one entry per direction: a length-e vector, or None
    to leave that direction uncontracted. Returns a tensor of shape
    (d, e, ..., e) with one axis per uncontracted direction.
    """
    kernel = ts.kernel
    e, d, n = kernel.e, kernel.d, ts.order
    free_dirs = [p for p, v in enumerate(direction_vectors) if v is None]
    out = Tensor((d,) + (e,) * len(free_dirs))
    for term in ts.terms:
        slot_values = _slot_values_for(ts, term, x0, free)
        for coords in itertools.product(range(e), repeat=n):
            weight = Fraction(1)
            zero = False
            for p, vec in enumerate(direction_vectors):
                if vec is None:
                    continue
                w = vec[coords[p]]
                if not w:
                    zero = True
                    break
                weight = weight * w
            if zero:
                continue
            for comp in range(d):
                poly = ts.deriv_poly(comp, term, coords)
                if not poly:
                    continue
                val = _eval_poly_slots(kernel, poly, slot_values, mu)
                idx = (comp,) + tuple(coords[p] for p in free_dirs)
                out[idx] = out[idx] + val * weight
    return out


def normalize_box(box, e):
    """Accept (lo, hi) or a per-coordinate list of (lo, hi) pairs."""
    if len(box) == 2 and not hasattr(box[0], "__len__"):
        box = [box] * e
    box = [(float(lo), float(hi)) for lo, hi in box]
    if len(box) != e:
        raise ValidationError(f"box must have {e} coordinate intervals")
    for lo, hi in box:
        if not lo < hi:
            raise ValidationError("degenerate box interval")
    return box


@dataclass(frozen=True)
class NormValue:
    """A certified upper bound together with its grid estimate.

    `value` = `grid` + `slack`; the slack covers whatever the grid missed
    (computed from a coefficient-wise interval bound, so `value` is a true
    supremum bound on the box).
    """

    value: float
    grid: float
    slack: float


@dataclass(frozen=True)
class NormEstimates:
    """Box-restricted norms of one derivative: the sup norm and the
    Lipschitz constants in the spatial argument, the measure, and each free
    variable. All values are certified upper bounds on the box."""

    sup: NormValue
    lip_spatial: NormValue | None
    lip_measure: NormValue
    lip_free: tuple


def _combined_polys(ts):
    """For each (output, direction coordinates): the joint polynomial in
    (x0, free variables, integration variables) whose expectation over
    independent box-supported integration variables is the derivative.

    Keeping the terms in one polynomial preserves cancellations in the sup
    bound."""
    kernel = ts.kernel
    e = kernel.e
    m = ts.n_free
    spatial = 1 if kernel.has_spatial else 0
    nvars_g = (spatial + m + kernel.arity) * e

    def g_offset(kind, index):
        # kind: "x0" | free j (1-based) | integrated slot s (1-based)
        if kind == "x0":
            return 0
        if kind == "free":
            return (spatial + index - 1) * e
        return (spatial + m + index - 1) * e

    out = {}
    for comp in range(kernel.d):
        for coords in itertools.product(range(e), repeat=ts.order):
            total = MPoly.zero(nvars_g)
            for term in ts.terms:
                poly = ts.deriv_poly(comp, term, coords)
                if not poly:
                    continue
                mapping = [0] * kernel.nvars
                for slot in kernel.slots():
                    off = kernel.slot_offset(slot)
                    if slot == 0:
                        dst = g_offset("x0", 0)
                    elif slot in term.pins:
                        dst = g_offset("free", term.pins.index(slot) + 1)
                    else:
                        dst = g_offset("int", slot)
                    for c in range(e):
                        mapping[off + c] = dst + c
                total = total + poly.map_vars(nvars_g, mapping)
            out[(comp, coords)] = total
    return out, nvars_g


def _crude_sup(poly, var_bounds):
    """Certified sup of |poly| on the box: sum of |coeff| * prod bound^exp."""
    total = 0.0
    for exps, coeff in poly.terms.items():
        factor = abs(float(coeff))
        for b, p in zip(var_bounds, exps):
            if p:
                factor *= b**p
        total += factor
    return total


def _grid_points(box_scalar, nvars, samples, budget=2048):
    """Deterministic mesh over the scalar variables, capped in size."""
    samples = max(2, samples)
    while samples > 2 and samples**nvars > budget:
        samples -= 1
    if samples**nvars > budget:
        return []
    axes = []
    for lo, hi in box_scalar:
        axes.append([lo + (hi - lo) * i / (samples - 1) for i in range(samples)])
    return itertools.product(*axes)


def _bound_termsum(ts, box, samples):
    """Certified Frobenius sup of a derivative over box-supported arguments
    and measures, plus a grid estimate."""
    polys, nvars_g = _combined_polys(ts)
    e = ts.kernel.e
    box_scalar = (box * (nvars_g // e))[:nvars_g]
    var_bounds = [max(abs(lo), abs(hi)) for lo, hi in box_scalar]
    certified_sq = 0.0
    for poly in polys.values():
        certified_sq += _crude_sup(poly, var_bounds) ** 2
    certified = math.sqrt(certified_sq)
    grid = 0.0
    entries = [p for p in polys.values() if p]
    if entries:
        budget = max(1, 2048 // len(entries))
        for point in _grid_points(box_scalar, nvars_g, samples, budget=budget):
            point = list(point)
            sq = sum(float(p.eval(point)) ** 2 for p in entries)
            grid = max(grid, math.sqrt(sq))
    grid = min(grid, certified)
    return NormValue(value=certified, grid=grid, slack=certified - grid)


def norms_on_box(ts, box, samples=5):
    """Box-restricted sup and Lipschitz estimates of a derivative.

    The sup norm is over spatial/free arguments in the box and measures
    supported in the box; each Lipschitz constant is the sup of the
    corresponding next derivative (exact for polynomials by the mean value
    theorem on the convex box). Values are certified upper bounds; the grid
    figure and its slack are reported alongside.
    """
    kernel = ts.kernel
    box = normalize_box(box, kernel.e)
    f = ts.functional
    sup = _bound_termsum(ts, box, samples)

    def next_norm(letter):
        seq = TaggedSeq(ts.seq.values + (letter,))
        return _bound_termsum(lions_derivative(f, seq), box, samples)

    lip_spatial = next_norm(0) if kernel.has_spatial else None
    m = ts.n_free
    lip_measure = next_norm(m + 1)
    lip_free = tuple(next_norm(j) for j in range(1, m + 1))
    return NormEstimates(
        sup=sup,
        lip_spatial=lip_spatial,
        lip_measure=lip_measure,
        lip_free=lip_free,
    )
