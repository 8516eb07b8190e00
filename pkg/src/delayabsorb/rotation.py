"""Aircraft rotation reconstruction from tail-number sequencing."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ingest import FlightRecord, minutes_between

OVERNIGHT_MIN = 300


@dataclass(frozen=True)
class RotationLink:
    prev_leg: FlightRecord
    curr_leg: FlightRecord
    sched_turnaround_min: int
    actual_turnaround_min: int
    prev_delay_min: int
    overnight: bool

    @property
    def airport(self) -> str:
        return self.curr_leg.origin

    @property
    def carrier(self) -> str:
        return self.curr_leg.carrier

    @property
    def dep_delay_min(self) -> int:
        return self.curr_leg.dep_delay_min

    @property
    def infeasible_schedule(self) -> bool:
        return self.sched_turnaround_min <= 0

    def identity(self) -> tuple:
        return (_leg_id(self.prev_leg), _leg_id(self.curr_leg), self.sched_turnaround_min,
                self.actual_turnaround_min, self.prev_delay_min, self.overnight)


@dataclass
class ChainResult:
    links: list[RotationLink]
    unchained: int
    duplicate_departures: int = 0

    def __iter__(self):
        return iter((self.links, self.unchained))


def _leg_id(f: FlightRecord) -> tuple:
    return (f.row, f.key)


def _sort_key(f: FlightRecord) -> tuple:
    return (f.flight_date, f.sched_dep, f.row)


def make_link(prev: FlightRecord, curr: FlightRecord, overnight_min: int = OVERNIGHT_MIN) -> RotationLink:
    ground = minutes_between(prev.actual_arr, curr.actual_dep)
    return RotationLink(
        prev_leg=prev,
        curr_leg=curr,
        sched_turnaround_min=minutes_between(prev.sched_arr, curr.sched_dep),
        actual_turnaround_min=ground,
        prev_delay_min=minutes_between(prev.sched_arr, prev.actual_arr),
        overnight=ground > overnight_min,
    )


def _by_tail(flights: Iterable[FlightRecord]) -> dict[str, list[FlightRecord]]:
    groups: dict[str, list[FlightRecord]] = defaultdict(list)
    for f in flights:
        if f.tail_number is None or f.actual_arr is None or f.actual_dep is None:
            raise ValueError(f"flight {f.key} is not cleaned (tail and actual times required)")
        groups[f.tail_number].append(f)
    return groups


def chain_rotations(flights: Sequence[FlightRecord], overnight_min: int = OVERNIGHT_MIN) -> ChainResult:
    """Link every flight to its previous leg flown by the same aircraft.

    The previous leg is the latest earlier flight of the tail (by date, then
    scheduled departure, then file order) that arrived at this flight's
    origin before its scheduled departure. Links come out grouped by tail in
    lexicographic order, chronological within a tail.
    """
    links: list[RotationLink] = []
    unchained = dupes = 0
    groups = _by_tail(flights)
    for tail in sorted(groups):
        legs = sorted(groups[tail], key=_sort_key)
        arrivals: dict[str, list[FlightRecord]] = defaultdict(list)
        seen_dep = set()
        for leg in legs:
            if leg.sched_dep in seen_dep:
                dupes += 1
            seen_dep.add(leg.sched_dep)
            prev = None
            for cand in reversed(arrivals.get(leg.origin, ())):
                if cand.actual_arr < leg.sched_dep:
                    prev = cand
                    break
            if prev is None:
                unchained += 1
            else:
                links.append(make_link(prev, leg, overnight_min))
            arrivals[leg.dest].append(leg)
    return ChainResult(links, unchained, dupes)


def brute_force_links(flights: Sequence[FlightRecord], overnight_min: int = OVERNIGHT_MIN) -> list[RotationLink]:
    """Quadratic reference: for every flight scan all flights for a predecessor."""
    out = []
    for f in flights:
        best = None
        for g in flights:
            if (g.tail_number == f.tail_number and _sort_key(g) < _sort_key(f)
                    and g.dest == f.origin and g.actual_arr < f.sched_dep):
                if best is None or _sort_key(g) > _sort_key(best):
                    best = g
        if best is not None:
            out.append(make_link(best, f, overnight_min))
    return out


def verify_chain(flights: Sequence[FlightRecord], links: Iterable[RotationLink],
                 overnight_min: int = OVERNIGHT_MIN) -> bool:
    """True iff ``links`` equal the brute-force predecessor definition."""
    got = sorted(link.identity() for link in links)
    want = sorted(link.identity() for link in brute_force_links(flights, overnight_min))
    return got == want


LINK_COLUMNS = ["tail", "prev_flight", "curr_flight", "sched_turnaround_min",
                "actual_turnaround_min", "prev_delay_min", "overnight"]


def write_links_csv(links: Iterable[RotationLink], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LINK_COLUMNS)
        for link in links:
            w.writerow([link.curr_leg.tail_number, link.prev_leg.key, link.curr_leg.key,
                        link.sched_turnaround_min, link.actual_turnaround_min,
                        link.prev_delay_min, int(link.overnight)])
