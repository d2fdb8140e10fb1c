"""
Finitely supported multi-indices and ordered index sets.

A multi-index stores only its nonzero entries as (position, value) pairs
with positions counted from 1. Index sets are kept in a fixed order: total
degree ascending, then reverse-lexicographic on the dense entries, so
(1, 0) comes before (0, 1).
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from ..errors import IndexSetError


@dataclass(frozen=True)
class MultiIndex:
    support: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        previous = 0
        for position, value in self.support:
            if position <= previous:
                raise IndexSetError(f"positions must be increasing and >= 1, got {self.support}")
            if value <= 0:
                raise IndexSetError(f"stored values must be positive, got {self.support}")
            previous = position

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> "MultiIndex":
        if any(int(v) < 0 for v in values):
            raise IndexSetError(f"negative entry in {tuple(values)}")
        return cls(tuple((m, int(v)) for m, v in enumerate(values, start=1) if int(v) > 0))

    @classmethod
    def unit(cls, m: int) -> "MultiIndex":
        return cls(((m, 1),))

    def __getitem__(self, m: int) -> int:
        for position, value in self.support:
            if position == m:
                return value
        return 0

    @property
    def degree(self) -> int:
        return sum(value for _, value in self.support)

    @property
    def max_position(self) -> int:
        return self.support[-1][0] if self.support else 0

    @property
    def is_zero(self) -> bool:
        return not self.support

    def dense(self, length: Optional[int] = None) -> Tuple[int, ...]:
        length = self.max_position if length is None else length
        if length < self.max_position:
            raise IndexSetError(f"cannot pad {self} to {length} entries")
        values = [0] * length
        for position, value in self.support:
            values[position - 1] = value
        return tuple(values)

    def shifted(self, m: int, step: int) -> Optional["MultiIndex"]:
        """self + step * unit(m), or None if an entry would become negative."""
        if m < 1:
            raise IndexSetError(f"parameter positions start at 1, got {m}")
        value = self[m] + step
        if value < 0:
            return None
        entries = dict(self.support)
        if value == 0:
            entries.pop(m, None)
        else:
            entries[m] = value
        return MultiIndex(tuple(sorted(entries.items())))

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        return self.degree, tuple(-v for v in self.dense())

    def __str__(self) -> str:
        return "(" + " ".join(str(v) for v in self.dense(max(self.max_position, 1))) + ")"


ZERO = MultiIndex()


class MultiIndexSet:
    """
    Ordered set of distinct multi-indices.

    Args:
        indices: the members, in any order
        require_zero: the zero index must be a member (Galerkin index sets);
            neighborhoods are built with require_zero=False

    Raises:
        IndexSetError: on duplicates or a missing zero index
    """

    def __init__(self, indices: Iterable[MultiIndex], require_zero: bool = True):
        members = list(indices)
        if len(set(members)) != len(members):
            raise IndexSetError("duplicate multi-indices")
        self._indices: Tuple[MultiIndex, ...] = tuple(sorted(members, key=MultiIndex.sort_key))
        if require_zero and (not self._indices or not self._indices[0].is_zero):
            raise IndexSetError("index set must contain the zero index")
        self._position: Dict[MultiIndex, int] = {nu: j for j, nu in enumerate(self._indices)}

    @classmethod
    def from_dense(cls, rows: Iterable[Sequence[int]], require_zero: bool = True) -> "MultiIndexSet":
        return cls([MultiIndex.from_dense(row) for row in rows], require_zero)

    @classmethod
    def initial(cls) -> "MultiIndexSet":
        """{0, unit(1)}."""
        return cls([ZERO, MultiIndex.unit(1)])

    def __len__(self) -> int:
        return len(self._indices)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._indices)

    def __getitem__(self, j: int) -> MultiIndex:
        return self._indices[j]

    def __contains__(self, nu: MultiIndex) -> bool:
        return nu in self._position

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndexSet) and self._indices == other._indices

    def __hash__(self) -> int:
        return hash(self._indices)

    def __repr__(self) -> str:
        return f"MultiIndexSet({[str(nu) for nu in self._indices]})"

    @property
    def size(self) -> int:
        return len(self._indices)

    @property
    def active_parameters(self) -> int:
        return max((nu.max_position for nu in self._indices), default=0)

    @property
    def max_degree(self) -> int:
        return max((nu.degree for nu in self._indices), default=0)

    def position(self, nu: MultiIndex) -> int:
        try:
            return self._position[nu]
        except KeyError:
            raise IndexSetError(f"{nu} is not in the index set") from None

    def union(self, extra: Iterable[MultiIndex]) -> "MultiIndexSet":
        merged = set(self._indices) | set(extra)
        return MultiIndexSet(merged, require_zero=bool(self._indices) and self._indices[0].is_zero)

    def max_value(self, m: int) -> int:
        return max((nu[m] for nu in self._indices), default=0)

    def table_lines(self, width: Optional[int] = None) -> List[str]:
        """One "(v1 v2 ...)" line per index, padded to `width` entries."""
        width = max(width or self.active_parameters, 1)
        return ["(" + " ".join(str(v) for v in nu.dense(width)) + ")" for nu in self._indices]


def neighborhood(index_set: MultiIndexSet, extra: int = 1) -> MultiIndexSet:
    """
    Candidate enrichment indices around an index set.

    All mu +- unit(m) with mu in the set and 1 <= m <= M + extra (M the
    number of active parameters) that are not already members.
    """
    if extra < 1:
        raise IndexSetError(f"the number of extra parameters must be >= 1, got {extra}")
    limit = index_set.active_parameters + extra
    candidates = set()
    for mu in index_set:
        for m in range(1, limit + 1):
            for step in (1, -1):
                nu = mu.shifted(m, step)
                if nu is not None and nu not in index_set:
                    candidates.add(nu)
    return MultiIndexSet(candidates, require_zero=False)
