"""Sparse Fourier-Walsh representation of Boolean target functions.

A target f : {-1,+1}^d -> R is stored as a finite map from coordinate
subsets S to real coefficients, f(x) = sum_S c_S * prod_{i in S} x_i.
Coordinates are 1-indexed in every user-facing interface; subsets are kept
as sorted tuples so the term map has canonical, exactly comparable keys.

Juntas are constructed either directly from Fourier terms or from a value
table over the support, converted by the exact fast Walsh transform.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Subset = tuple[int, ...]

# Engineering cap on support size: exact transforms/enumerations are O(k 2^k).
MAX_SUPPORT = 20


def _canonical_subset(subset: Iterable[int], dim: int) -> Subset:
    s = tuple(sorted(int(i) for i in subset))
    if len(set(s)) != len(s):
        raise ValueError(f"subset {subset!r} has repeated coordinates")
    if s and (s[0] < 1 or s[-1] > dim):
        raise ValueError(f"subset {subset!r} not contained in [1, {dim}]")
    return s


def support_patterns(k: int) -> np.ndarray:
    """All sign patterns of {-1,+1}^k as a (2^k, k) int8 array.

    Row order is lexicographic with -1 < +1 and the first coordinate most
    significant, matching the table convention of `make_junta_from_table`.
    """
    if k < 0 or k > MAX_SUPPORT:
        raise ValueError(f"support size {k} outside [0, {MAX_SUPPORT}]")
    m = np.arange(2**k, dtype=np.int64)
    bits = (m[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass(frozen=True)
class BooleanFunction:
    """Target function given by its Fourier-Walsh expansion.

    `terms` maps sorted 1-indexed coordinate tuples to nonzero coefficients.
    `support` is the union of all term subsets (sorted). Instances are
    immutable and safe to share across workers.
    """

    dim: int
    terms: Mapping[Subset, float]
    support: Subset = field(init=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        canon: dict[Subset, float] = {}
        covered: set[int] = set()
        for subset, coeff in self.terms.items():
            s = _canonical_subset(subset, self.dim)
            c = float(coeff)
            if not np.isfinite(c):
                raise ValueError(f"coefficient for {s} is not finite: {coeff}")
            if s in canon:
                raise ValueError(f"duplicate subset {s} in terms")
            if c != 0.0:
                canon[s] = c
                covered.update(s)
        object.__setattr__(self, "terms", canon)
        object.__setattr__(self, "support", tuple(sorted(covered)))
        if len(self.support) > MAX_SUPPORT:
            raise ValueError(
                f"support size {len(self.support)} exceeds cap {MAX_SUPPORT}"
            )
        # 0-based index arrays per term, precomputed for evaluation speed.
        idx = {s: np.asarray(s, dtype=np.intp) - 1 for s in canon}
        object.__setattr__(self, "_idx", idx)

    @property
    def support_size(self) -> int:
        return len(self.support)

    def eval(self, x: Sequence[float] | np.ndarray) -> float:
        """Evaluate f at a single point of {-1,+1}^d."""
        x = np.asarray(x)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dim},)")
        total = 0.0
        for s, c in self.terms.items():
            total += c * float(np.prod(x[self._idx[s]]))
        return total

    def eval_many(self, xs: np.ndarray) -> np.ndarray:
        """Evaluate f on a batch of points, shape (n, d) -> (n,)."""
        xs = np.asarray(xs)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"batch has shape {xs.shape}, expected (n, {self.dim})")
        out = np.zeros(xs.shape[0])
        for s, c in self.terms.items():
            out += c * np.prod(xs[:, self._idx[s]], axis=1)
        return out

    def influence(self, i: int) -> float:
        """Influence of coordinate i: sum of squared coefficients of subsets containing i."""
        i = int(i)
        if not 1 <= i <= self.dim:
            raise ValueError(f"coordinate {i} outside [1, {self.dim}]")
        return sum(c * c for s, c in self.terms.items() if i in s)

    def min_support_influence(self) -> float:
        """tau = min over the declared support of the influence."""
        if not self.support:
            raise ValueError("function has empty support")
        return min(self.influence(i) for i in self.support)

    def apply_permutation(self, perm: Sequence[int]) -> "BooleanFunction":
        """Return f composed with the coordinate action x -> (x_{perm(i)})_i.

        `perm` lists perm(1), ..., perm(d) (1-indexed). Each term subset A
        maps to {perm(i) : i in A}, so eval(f.apply_permutation(p), x)
        equals eval(f, (x_{perm(i)})_i).
        """
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(1, self.dim + 1)):
            raise ValueError("perm is not a bijection of [1, d]")
        new_terms = {}
        for s, c in self.terms.items():
            new_terms[tuple(sorted(perm[i - 1] for i in s))] = c
        return BooleanFunction(self.dim, new_terms)

    def support_table(self) -> np.ndarray:
        """Values of f on all 2^k support patterns (off-support coords at +1).

        Order matches `support_patterns(k)` over the sorted support.
        """
        k = self.support_size
        pats = support_patterns(k)
        pos = {coord: j for j, coord in enumerate(self.support)}
        out = np.zeros(2**k)
        for s, c in self.terms.items():
            cols = [pos[i] for i in s]
            out += c * np.prod(pats[:, cols], axis=1) if cols else c
        return out

    def parseval_mass(self) -> float:
        """Sum of squared Fourier coefficients (= uniform second moment)."""
        return sum(c * c for c in self.terms.values())


def make_parity(dim: int, support: Iterable[int]) -> BooleanFunction:
    """Parity of the coordinates in `support`: a single Fourier term with coefficient 1."""
    s = _canonical_subset(support, dim)
    if not s:
        raise ValueError("parity support must be nonempty")
    return BooleanFunction(dim, {s: 1.0})


def _walsh_coefficients(table: np.ndarray, k: int) -> np.ndarray:
    """Exact O(k 2^k) Walsh transform of a value table over {-1,+1}^k.

    Returns an array of shape (2,)*k where index 1 along axis j selects
    subsets containing the j-th support coordinate.
    """
    coeff = np.array(table, dtype=float).reshape((2,) * k)
    for ax in range(k):
        lo = np.take(coeff, 0, axis=ax)  # s_ax = -1
        hi = np.take(coeff, 1, axis=ax)  # s_ax = +1
        coeff = np.stack([(hi + lo) / 2.0, (hi - lo) / 2.0], axis=ax)
    return coeff


def make_junta_from_table(
    dim: int, support: Sequence[int], table: Sequence[float]
) -> BooleanFunction:
    """Junta defined by its value table on the support coordinates.

    `table` holds 2^k values in lexicographic order of support patterns with
    -1 < +1 per coordinate and the first listed support coordinate most
    significant. Coefficients come from the exact Walsh transform; the
    declared support of the result is the set of coordinates the table
    actually depends on.
    """
    support = [int(i) for i in support]
    if len(set(support)) != len(support):
        raise ValueError("support has repeated coordinates")
    k = len(support)
    if k > MAX_SUPPORT:
        raise ValueError(f"support size {k} exceeds cap {MAX_SUPPORT}")
    for i in support:
        if not 1 <= i <= dim:
            raise ValueError(f"support coordinate {i} outside [1, {dim}]")
    table = np.asarray(table, dtype=float)
    if table.shape != (2**k,):
        raise ValueError(f"table has length {table.size}, expected {2 ** k}")
    coeff = _walsh_coefficients(table, k)
    terms: dict[Subset, float] = {}
    for bits in np.ndindex(*([2] * k)):
        c = float(coeff[bits])
        if c != 0.0:
            subset = tuple(sorted(support[j] for j in range(k) if bits[j]))
            terms[subset] = c
    return BooleanFunction(dim, terms)


def from_fourier(dim: int, terms: Iterable[tuple[Iterable[int], float]]) -> BooleanFunction:
    """Build a function from (subset, coefficient) pairs."""
    d: dict[Subset, float] = {}
    for subset, coeff in terms:
        s = _canonical_subset(subset, dim)
        if s in d:
            raise ValueError(f"duplicate subset {s}")
        d[s] = float(coeff)
    return BooleanFunction(dim, d)


def seven_junta(dim: int = 50) -> BooleanFunction:
    """The 7-junta (1/2) x1..x5 (1 + x6 + x7 - x6 x7) used in the experiments."""
    base = tuple(range(1, 6))
    return from_fourier(
        dim,
        [
            (base, 0.5),
            (base + (6,), 0.5),
            (base + (7,), 0.5),
            (base + (6, 7), -0.5),
        ],
    )


def function_to_spec(f: BooleanFunction) -> dict:
    """JSON-able description of f in the function specification format."""
    return {
        "dim": f.dim,
        "fourier": [{"subset": list(s), "coeff": c} for s, c in sorted(f.terms.items())],
    }


def function_from_spec(spec: Mapping) -> BooleanFunction:
    """Parse a function specification dict (see README for the schema)."""
    allowed = {"dim", "parity_support", "junta", "fourier"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown function spec keys: {sorted(unknown)}")
    if "dim" not in spec:
        raise ValueError("function spec missing 'dim'")
    dim = int(spec["dim"])
    kinds = [key for key in ("parity_support", "junta", "fourier") if key in spec]
    if len(kinds) != 1:
        raise ValueError(
            "function spec needs exactly one of parity_support/junta/fourier"
        )
    kind = kinds[0]
    if kind == "parity_support":
        return make_parity(dim, spec["parity_support"])
    if kind == "junta":
        junta = spec["junta"]
        unknown = set(junta) - {"support", "table"}
        if unknown:
            raise ValueError(f"unknown junta keys: {sorted(unknown)}")
        return make_junta_from_table(dim, junta["support"], junta["table"])
    return from_fourier(dim, [(t["subset"], t["coeff"]) for t in spec["fourier"]])


def load_function_spec(path) -> BooleanFunction:
    """Load a function specification from a UTF-8 JSON file."""
    with open(path, encoding="utf-8") as fh:
        return function_from_spec(json.load(fh))
