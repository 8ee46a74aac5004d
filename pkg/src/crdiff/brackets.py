"""Bracket-generation diagnostics and line-integral smoothness conditions.

Numerically verifies the two hypotheses the probabilistic smoothness
results rest on: that the frame fields together with their iterated
brackets span the tangent space, and that the recursive functionals
attached to a 1-form do not all vanish.  Differentiation is analytic
where the model supplies jacobians and central finite differences
elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .models import ModelDescriptor
from .observables import OneForm

__all__ = [
    "VectorField",
    "frame_vector_field",
    "lie_bracket",
    "BracketTable",
    "span_rank",
    "directional_derivative",
    "phi_functional",
    "smoothness_condition",
    "apply_generator",
    "index_label",
]

FD_STEP = 1e-5
RANK_EPS = 1e-8
PHI_THRESHOLD = 1e-8


def index_label(a: int) -> str:
    """Human-readable frame label: 0 -> T, 2 -> 2, -2 -> 2* (conjugate)."""
    if a == 0:
        return "T"
    return str(a) if a > 0 else f"{-a}*"


def directional_derivative(
    f: Callable[[np.ndarray], complex], x: np.ndarray, direction: np.ndarray,
    h: float = FD_STEP,
) -> complex:
    """Central-difference derivative of a scalar along a complex vector."""
    x = np.asarray(x, dtype=float)
    total = 0.0 + 0.0j
    for j in range(x.shape[-1]):
        d = direction[..., j]
        if d == 0:
            continue
        e = np.zeros_like(x)
        e[j] = h
        total += d * (f(x + e) - f(x - e)) / (2.0 * h)
    return complex(total)


@dataclass(frozen=True)
class VectorField:
    """A complex vector field on the chart with optional analytic jacobian."""

    comps: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "W"

    def at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.comps(np.asarray(x, dtype=float)), dtype=complex)

    def jacobian(self, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
        """d_j W^k as [..., k, j]; finite differences unless analytic."""
        if self.jac is not None:
            return np.asarray(self.jac(x), dtype=complex)
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        cols = []
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            cols.append((self.at(x + e) - self.at(x - e)) / (2.0 * h))
        return np.stack(cols, axis=-1)

    def apply(self, f: Callable[[np.ndarray], complex], x: np.ndarray,
              h: float = FD_STEP) -> complex:
        """Derivation of a scalar function: (W f)(x)."""
        return directional_derivative(f, x, self.at(x), h=h)

    def bracket(self, other: "VectorField") -> "VectorField":
        def comps(x: np.ndarray) -> np.ndarray:
            jw = other.jacobian(x)
            jv = self.jacobian(x)
            return np.einsum("...kj,...j->...k", jw, self.at(x)) - np.einsum(
                "...kj,...j->...k", jv, other.at(x)
            )

        return VectorField(comps=comps, name=f"[{self.name},{other.name}]")


def frame_vector_field(m: ModelDescriptor, a: int) -> VectorField:
    """The frame field with signed index a as a VectorField."""
    jac = None
    if a != 0 and m.frame_jacobian is not None:

        def jac(x: np.ndarray) -> np.ndarray:
            full = m.frame_jacobian(x)[..., abs(a) - 1]
            return full if a > 0 else np.conj(full)

    return VectorField(
        comps=lambda x: m.frame_field(a, x), jac=jac, name=index_label(a)
    )


def lie_bracket(m: ModelDescriptor, a: int, b: int, x: np.ndarray) -> np.ndarray:
    """[Z_a, Z_b] at x from coefficient jacobians (signed frame indices)."""
    m.require_inside(x)
    return frame_vector_field(m, a).bracket(frame_vector_field(m, b)).at(x)


# ---------------------------------------------------------------------------
# span of fields and iterated brackets


@dataclass
class BracketTable:
    """Fields and iterated brackets at a point with their real span."""

    x: np.ndarray
    tags: list[tuple[int, ...]]
    vectors: np.ndarray          # (count, D) complex
    singular_values: np.ndarray  # descending
    rank: int
    rank_eps: float

    def full(self, dim: int) -> bool:
        return self.rank == dim


def _bracket_generations(m: ModelDescriptor, max_order: int):
    """Tagged vector fields: frame fields, then nested brackets by order."""
    alphabet = list(range(1, m.n + 1)) + list(range(-1, -m.n - 1, -1))
    fields = {(a,): frame_vector_field(m, a) for a in range(1, m.n + 1)}
    yield from fields.items()
    if max_order < 2:
        return
    # second order: one bracket per unordered pair, conjugate pairs skipped
    level = {}
    for i, a in enumerate(alphabet):
        for b in alphabet[i + 1 :]:
            conj_tag = tuple(sorted((-a, -b), key=alphabet.index))
            if conj_tag in level:
                continue
            level[(a, b)] = frame_vector_field(m, a).bracket(frame_vector_field(m, b))
    yield from level.items()
    for _order in range(3, max_order + 1):
        nxt = {}
        for tag, fld in level.items():
            for a in alphabet:
                nxt[(a,) + tag] = frame_vector_field(m, a).bracket(fld)
        yield from nxt.items()
        level = nxt


def span_rank(m: ModelDescriptor, x: np.ndarray, max_order: int,
              rank_eps: float = RANK_EPS) -> BracketTable:
    """Real span of Re/Im frame fields and brackets up to max_order.

    Rank counts singular values above rank_eps times the largest one, a
    threshold separating genuine degeneracy from finite-difference noise.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    x = np.asarray(x, dtype=float)
    tags, vecs = [], []
    for tag, fld in _bracket_generations(m, max_order):
        tags.append(tag)
        vecs.append(fld.at(x))
    vectors = np.stack(vecs, axis=0)
    real_cols = np.concatenate([vectors.real, vectors.imag], axis=0).T
    sv = np.linalg.svd(real_cols, compute_uv=False)
    rank = int(np.sum(sv > rank_eps * sv[0])) if sv.size and sv[0] > 0 else 0
    return BracketTable(
        x=x, tags=tags, vectors=vectors,
        singular_values=sv, rank=rank, rank_eps=rank_eps,
    )


# ---------------------------------------------------------------------------
# recursive smoothness functionals for line integrals


def _frame_comp(m: ModelDescriptor, form: OneForm, a: int, x: np.ndarray) -> complex:
    return complex(np.einsum("k,k->", form.comps(x), m.frame_field(a, x)))


def _frame_comp_derivative(
    m: ModelDescriptor, form: OneForm, a: int, x: np.ndarray,
    direction: np.ndarray, h: float,
) -> complex:
    """Derivative of x -> Xi(Z_a)(x) along a complex direction.

    Uses the product-rule with analytic jacobians when both the form and
    the frame supply them, otherwise falls back to finite differences.
    """
    if form.chart_jacobian is not None and (a == 0 or m.frame_jacobian is not None):
        comps = form.comps(x)
        cjac = np.asarray(form.chart_jacobian(x), dtype=complex)  # [k, j]
        fld = m.frame_field(a, x)
        fjac = frame_vector_field(m, a).jacobian(x)               # [k, j]
        grad = np.einsum("kj,k->j", cjac, fld) + np.einsum("k,kj->j", comps, fjac)
        return complex(np.einsum("j,j->", direction, grad))
    return directional_derivative(lambda y: _frame_comp(m, form, a, y), x, direction, h=h)


def _nested_bracket(m: ModelDescriptor, indices: Sequence[int]) -> VectorField:
    """[Z_{i0}, [Z_{i1}, [... Z_{ik}]]] for a sequence of signed indices."""
    fld = frame_vector_field(m, indices[-1])
    for a in reversed(indices[:-1]):
        fld = frame_vector_field(m, a).bracket(fld)
    return fld


def phi_functional(
    m: ModelDescriptor, form: OneForm, indices: Sequence[int], x: np.ndarray,
    h: float = FD_STEP,
) -> complex:
    """Recursive functional whose nonvanishing certifies a smooth density.

    Base case is the frame pairing; the recursive step differentiates the
    tail functional along the head field and subtracts the nested bracket
    of the tail applied to the head pairing.  For two indices the bracket
    degenerates to the single tail field (literal reading of the
    recursion; see the decisions ledger).
    """
    indices = tuple(int(a) for a in indices)
    if len(indices) == 0:
        raise ValueError("need at least one frame index")
    if any(a == 0 for a in indices):
        raise ValueError("indices range over the frame and its conjugates, not T")
    m.require_inside(x)
    x = np.asarray(x, dtype=float)
    if len(indices) == 1:
        return _frame_comp(m, form, indices[0], x)
    head, tail = indices[0], indices[1:]
    if len(tail) == 1:
        term1 = _frame_comp_derivative(
            m, form, tail[0], x, m.frame_field(head, x), h=h
        )
    else:
        term1 = directional_derivative(
            lambda y: phi_functional(m, form, tail, y, h=h),
            x, m.frame_field(head, x), h=h,
        )
    bracket_dir = _nested_bracket(m, tail).at(x)
    term2 = _frame_comp_derivative(m, form, head, x, bracket_dir, h=h)
    return term1 - term2


def smoothness_condition(
    m: ModelDescriptor, form: OneForm, x: np.ndarray, max_order: int,
    threshold: float = PHI_THRESHOLD, h: float = FD_STEP,
) -> tuple[bool, tuple[int, ...] | None, complex]:
    """Breadth-first search for a nonvanishing recursive functional.

    Multi-indices are scanned by increasing length and lexicographically
    within a length, over the alphabet [1..n, 1*..n*], so witnesses are
    reproducible.  Returns (satisfied, witness, value).
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    alphabet = list(range(1, m.n + 1)) + list(range(-1, -m.n - 1, -1))
    stack = [(a,) for a in alphabet]
    for _order in range(1, max_order + 1):
        for idx in stack:
            val = phi_functional(m, form, idx, x, h=h)
            if abs(val) > threshold:
                return True, idx, val
        stack = [idx + (a,) for idx in stack for a in alphabet]
    return False, None, 0.0j


# ---------------------------------------------------------------------------
# the local generator, used as a harmonicity oracle


def apply_generator(m: ModelDescriptor, f: Callable[[np.ndarray], complex],
                    x: np.ndarray, h: float = FD_STEP) -> complex:
    """Apply the diffusion generator to a scalar function at a point.

    Local representation: half the sum of the symmetrized second frame
    derivatives minus the Christoffel drift.  Intended as a numerical
    oracle for harmonicity checks, not a performance path.
    """
    x = np.asarray(x, dtype=float)
    n = m.n
    total = 0.0 + 0.0j
    for a in range(1, n + 1):
        za = frame_vector_field(m, a)
        zab = frame_vector_field(m, -a)
        total += za.apply(lambda y: zab.apply(f, y, h=h), x, h=h)
        total += zab.apply(lambda y: za.apply(f, y, h=h), x, h=h)
    gam = m.christoffel(x)
    drift = 0.0 + 0.0j
    for a in range(1, n + 1):
        c_a = complex(sum(gam[n + b, b - 1, a - 1] for b in range(1, n + 1)))
        drift += c_a * frame_vector_field(m, a).apply(f, x, h=h)
        drift += np.conj(c_a) * frame_vector_field(m, -a).apply(f, x, h=h)
    return 0.5 * (total - drift)
