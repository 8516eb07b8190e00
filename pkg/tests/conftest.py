import dataclasses
import datetime as dt
import random

import pytest

from delayabsorb.ingest import FLIGHT_COLUMNS, FlightRecord, time_block
from delayabsorb.synth import SynthConfig, generate_network, write_network

D0 = dt.date(2023, 6, 1)


def at(hhmm: str, day: dt.date = D0) -> dt.datetime:
    return dt.datetime.combine(day, dt.time(int(hhmm[:2]), int(hhmm[2:])))


def flight(tail="N1", origin="AAA", dest="BBB", sd="0800", sa="0900", ad=None, aa=None, *, carrier="DL",
           day=D0, row=0, distance=500.0, **kw) -> FlightRecord:
    """Operated flight with HHMM shorthands; actual times default to on-time."""
    sched_dep, sched_arr = at(sd, day), at(sa, day)
    if sched_arr < sched_dep:
        sched_arr += dt.timedelta(days=1)
    actual_dep = at(ad, day) if ad else sched_dep
    actual_arr = at(aa, day) if aa else sched_arr
    if actual_arr < actual_dep:
        actual_arr += dt.timedelta(days=1)
    fields = dict(flight_date=day, carrier=carrier, tail_number=tail, origin=origin, dest=dest,
                  sched_dep=sched_dep, sched_arr=sched_arr, actual_dep=actual_dep, actual_arr=actual_arr,
                  dep_delay_min=int((actual_dep - sched_dep).total_seconds() // 60), distance=distance,
                  cancelled=False, diverted=False, day_of_week=day.isoweekday(),
                  dep_time_block=time_block(sched_dep), row=row)
    fields.update(kw)
    return FlightRecord(**fields)


def bts_row(**over) -> dict:
    row = {"FlightDate": "2023-06-01", "Operating_Airline": "DL", "Tail_Number": "N123DL", "Origin": "ATL",
           "Dest": "BOS", "CRSDepTime": "0830", "CRSArrTime": "1100", "DepTime": "0845", "ArrTime": "1110",
           "DepDelay": "15", "Distance": "946", "Cancelled": "0", "Diverted": "0", "DayOfWeek": "4",
           "DepTimeBlk": "0800-0859"}
    row.update(over)
    return row


def write_bts(path, rows, columns=None):
    import csv
    columns = columns or FLIGHT_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def random_flights(rng: random.Random, n: int, n_tails=12, airports=("AAA", "BBB", "CCC", "DDD")):
    out = []
    for i in range(n):
        dep = dt.datetime(2023, 6, 1, 5) + dt.timedelta(minutes=rng.randrange(0, 3 * 24 * 60))
        block = rng.randrange(40, 300)
        delay = rng.randrange(-10, 120)
        o, d = rng.sample(airports, 2)
        f = flight(f"N{rng.randrange(n_tails)}", o, d, row=i)
        out.append(dataclasses.replace(
            f, flight_date=dep.date(), sched_dep=dep, sched_arr=dep + dt.timedelta(minutes=block),
            actual_dep=dep + dt.timedelta(minutes=delay),
            actual_arr=dep + dt.timedelta(minutes=delay + block + rng.randrange(-15, 15)),
            dep_delay_min=delay))
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_network():
    return generate_network(SynthConfig(n_tails=60, legs_per_tail=8, seed=3))


@pytest.fixture(scope="session")
def small_network_dir(tmp_path_factory, small_network):
    d = tmp_path_factory.mktemp("synth_small")
    write_network(small_network, d)
    return d
