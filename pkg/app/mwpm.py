"""Exact minimum-weight perfect-matching decoder for the toric code.

Matching is solved by dynamic programming over defect subsets, which is exact
and fast enough for the defect counts seen at d <= 7 and p <= 0.2.
"""

import logging
from collections.abc import Sequence
from functools import cache

from app.errors import MatchingError, MatchingLimitError
from app.toric_code import PauliType, ToricState, apply_chain, h_index, is_logical_error, measure_syndrome, v_index

logger = logging.getLogger(__name__)

DEFAULT_MATCHING_LIMIT = 20

Coordinate = tuple[int, int]


def torus_distance(a: Coordinate, b: Coordinate, d: int) -> int:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return min(dr, d - dr) + min(dc, d - dc)


def min_weight_matching(
    defects: Sequence[Coordinate], d: int, limit: int = DEFAULT_MATCHING_LIMIT
) -> list[tuple[Coordinate, Coordinate]]:
    """Minimum total torus distance pairing of defects.

    Among optimal pairings the lexicographically smallest one (in defect index
    order, each pair led by its lower index) is returned.
    """
    n = len(defects)
    if n % 2:
        raise MatchingError(f"{n} defects cannot be perfectly matched; syndrome parity is broken upstream")
    if n > limit:
        raise MatchingLimitError(
            f"{n} defects exceed the matching limit of {limit}; raise matching_limit or lower the error rate"
        )
    weight = [[torus_distance(a, b, d) for b in defects] for a in defects]

    @cache
    def best(mask: int) -> int:
        if mask == 0:
            return 0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        return min(weight[i][j] + best(rest & ~(1 << j)) for j in range(n) if rest >> j & 1)

    pairs = []
    mask = (1 << n) - 1
    while mask:
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        target = best(mask)
        j = next(j for j in range(n) if rest >> j & 1 and weight[i][j] + best(rest & ~(1 << j)) == target)
        pairs.append((defects[i], defects[j]))
        mask = rest & ~(1 << j)
    return pairs


def _steps(start: int, stop: int, d: int) -> list[int]:
    """Unit moves from start to stop along one periodic axis: the shorter way, the non-wrapping way on ties."""
    forward = (stop - start) % d
    backward = d - forward if forward else 0
    if forward < backward or (forward == backward and stop > start):
        return [1] * forward
    return [-1] * backward


def plaquette_path(a: Coordinate, b: Coordinate, d: int) -> list[int]:
    """Edges of an X chain whose plaquette boundary is {a, b}: rows first, then columns."""
    (r, c), edges = a, []
    for step in _steps(a[0], b[0], d):
        edges.append(h_index(d, r + 1, c) if step > 0 else h_index(d, r, c))
        r = (r + step) % d
    for step in _steps(a[1], b[1], d):
        edges.append(v_index(d, r, c + 1) if step > 0 else v_index(d, r, c))
        c = (c + step) % d
    return edges


def star_path(a: Coordinate, b: Coordinate, d: int) -> list[int]:
    """Edges of a Z chain whose star boundary is {a, b}: rows first, then columns."""
    (r, c), edges = a, []
    for step in _steps(a[0], b[0], d):
        edges.append(v_index(d, r, c) if step > 0 else v_index(d, r - 1, c))
        r = (r + step) % d
    for step in _steps(a[1], b[1], d):
        edges.append(h_index(d, r, c) if step > 0 else h_index(d, r, c - 1))
        c = (c + step) % d
    return edges


def mwpm_correct(state: ToricState, limit: int = DEFAULT_MATCHING_LIMIT) -> ToricState:
    """Apply X along matched plaquette pairs and Z along matched star pairs."""
    d = state.d
    syndrome = measure_syndrome(state)
    for a, b in min_weight_matching(syndrome.plaquette_defects(), d, limit):
        state = apply_chain(state, plaquette_path(a, b, d), PauliType.X)
    for a, b in min_weight_matching(syndrome.star_defects(), d, limit):
        state = apply_chain(state, star_path(a, b, d), PauliType.Z)
    return state


def mwpm_decode(state: ToricState, limit: int = DEFAULT_MATCHING_LIMIT, overlimit_as_loss: bool = False) -> bool:
    """True when the matching correction leaves no logical error."""
    try:
        corrected = mwpm_correct(state, limit)
    except MatchingLimitError as e:
        if not overlimit_as_loss:
            raise
        logger.warning(f"counting game as lost: {e}")
        return False
    return not is_logical_error(corrected)
