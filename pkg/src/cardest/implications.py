"""Phase-2: derive new partial estimates from existing ones.

Two mechanisms: deterministic implications (src/trg incidence implies
vertex and edge membership, a value predicate implies key presence), and
implication assumptions, where within a pattern scope the most selective
estimate is assumed to imply the rest.
"""

from __future__ import annotations

from typing import Iterable

from .query import (
    Constraint,
    ConstraintKind,
    DATA_KINDS,
    PROP_KINDS,
    PartialEstimate,
    QueryPattern,
    constraint_set_key,
    implied_closure,
)

_TRIGGER_KINDS = frozenset(
    {ConstraintKind.SRC, ConstraintKind.TRG, ConstraintKind.PROP_VALUE}
)

CONSTRAINT_CLASSES = {
    "pv": frozenset({ConstraintKind.PROP_VALUE}),
    "p": PROP_KINDS,
    "a": frozenset(ConstraintKind),
}

PATTERN_CLASSES = ("id", "ep")


def add_implied_closures(
    pes: Iterable[PartialEstimate], q: QueryPattern
) -> list[PartialEstimate]:
    """For every estimate containing a src/trg or value predicate, derive
    the estimate over its implied closure at the same selectivity.

    The implied constraints hold whenever the original ones do, so the
    selectivity carries over exactly.  Returns only estimates whose
    constraint sets are not already present.
    """
    present = {pe.key() for pe in pes}
    out: list[PartialEstimate] = []
    for pe in pes:
        if not any(c.kind in _TRIGGER_KINDS for c in pe.constraints):
            continue
        closed = implied_closure(pe.constraints, q)
        if closed == pe.constraints:
            continue
        key = constraint_set_key(closed)
        if key in present:
            continue
        present.add(key)
        out.append(PartialEstimate(closed, pe.selectivity, pe.provenance))
    return out


def add_implication_unions(
    pes: Iterable[PartialEstimate],
    q: QueryPattern,
    pattern_class: str,
    constraint_class: str,
) -> list[PartialEstimate]:
    """Implication-assumption estimates.

    For every pattern instance of `pattern_class` ('id': each query id;
    'ep': each query edge with its endpoints), collect the estimates
    whose constraints all belong to `constraint_class` ('pv' value
    predicates, 'p' property constraints, 'a' all kinds) and whose ids
    fall inside the instance.  With at least two of them, the one with
    the lowest selectivity is assumed to imply the union of them all.
    """
    if pattern_class not in PATTERN_CLASSES:
        raise ValueError(f"unknown pattern class: {pattern_class!r}")
    allowed = CONSTRAINT_CLASSES.get(constraint_class)
    if allowed is None:
        raise ValueError(f"unknown constraint class: {constraint_class!r}")

    if pattern_class == "id":
        instances = [frozenset({i}) for i in sorted(q.ids)]
    else:
        instances = []
        for e in sorted(q.edges):
            s, t = q.endpoints[e]
            instances.append(frozenset({e, s, t}))

    pes = list(pes)
    present = {pe.key() for pe in pes}
    tag = f"ip({pattern_class},{constraint_class})"
    out: list[PartialEstimate] = []
    for ids in instances:
        group = [
            pe
            for pe in pes
            if pe.id_set <= ids and all(c.kind in allowed for c in pe.constraints)
        ]
        if len(group) < 2:
            continue
        union = frozenset().union(*(pe.constraints for pe in group))
        # lowest selectivity wins; ties prefer the more informative
        # implicant, then the canonical key
        chosen = min(group, key=lambda pe: (pe.selectivity, -len(pe.constraints), pe.key()))
        key = constraint_set_key(union)
        if key in present:
            continue
        present.add(key)
        out.append(PartialEstimate(union, chosen.selectivity, tag))
    return out
