"""Deterministic TPC-H-shaped data: customer, orders and lineitem.

Row counts: customer 150,000 x SF, orders 1,500,000 x SF, and 1 to 7
lineitems per order (about 6,000,000 x SF). Dates fall in 1992-01-01 ..
1998-12-31, quantities in 1..50, discounts in 0.00..0.10 by 0.01, foreign
keys uniform. The same (seed, scale) always yields the same bytes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .columnar import Batch, Column, Table, write_csv
from .columnar.batch import DEFAULT_BATCH_ROWS
from .dtypes import DATE32, DECIMAL, INT64, STRING, Field, Schema, date_to_days

GENERATOR_VERSION = 1
MONEY = DECIMAL(15, 2)

CUSTOMER = Schema((
    Field("c_custkey", INT64, False),
    Field("c_name", STRING, False),
    Field("c_nationkey", INT64, False),
    Field("c_acctbal", MONEY, False),
    Field("c_mktsegment", STRING, False),
))
ORDERS = Schema((
    Field("o_orderkey", INT64, False),
    Field("o_custkey", INT64, False),
    Field("o_orderstatus", STRING, False),
    Field("o_totalprice", MONEY, False),
    Field("o_orderdate", DATE32, False),
    Field("o_orderpriority", STRING, False),
    Field("o_shippriority", INT64, False),
))
LINEITEM = Schema((
    Field("l_orderkey", INT64, False),
    Field("l_partkey", INT64, False),
    Field("l_suppkey", INT64, False),
    Field("l_linenumber", INT64, False),
    Field("l_quantity", MONEY, False),
    Field("l_extendedprice", MONEY, False),
    Field("l_discount", MONEY, False),
    Field("l_tax", MONEY, False),
    Field("l_returnflag", STRING, False),
    Field("l_linestatus", STRING, False),
    Field("l_shipdate", DATE32, False),
    Field("l_commitdate", DATE32, False),
    Field("l_receiptdate", DATE32, False),
    Field("l_shipmode", STRING, False),
))
SCHEMAS = {"customer": CUSTOMER, "orders": ORDERS, "lineitem": LINEITEM}

SEGMENTS = np.array(["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"], dtype=object)
PRIORITIES = np.array(["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"], dtype=object)
SHIPMODES = np.array(["AIR", "FOB", "MAIL", "RAIL", "REG AIR", "SHIP", "TRUCK"], dtype=object)
START_DAY = date_to_days("1992-01-01")
END_DAY = date_to_days("1998-12-31")
CURRENT_DAY = date_to_days("1995-06-17")


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    scale: float = 0.01

    def rows(self, base: int) -> int:
        return max(1, int(round(base * self.scale)))


def _strings(values) -> Column:
    return Column.from_strings(list(values))


def _col(dtype, values) -> Column:
    return Column.from_numpy(dtype, np.ascontiguousarray(values, dtype=dtype.numpy_dtype))


def generate(spec: GenSpec, batch_rows: int = DEFAULT_BATCH_ROWS) -> dict:
    """name -> Table for customer, orders and lineitem."""
    if spec.scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n_cust = spec.rows(150_000)
    n_ord = spec.rows(1_500_000)

    custkey = np.arange(1, n_cust + 1, dtype=np.int64)
    customer = Batch([
        _col(INT64, custkey),
        _strings(f"Customer#{k:09d}" for k in custkey.tolist()),
        _col(INT64, rng.integers(0, 25, n_cust)),
        _col(MONEY, rng.integers(-99_999, 999_999, n_cust, endpoint=True)),
        _strings(SEGMENTS[rng.integers(0, len(SEGMENTS), n_cust)]),
    ])

    orderkey = np.arange(1, n_ord + 1, dtype=np.int64)
    # as in TPC-H, customers whose key is a multiple of 3 place no orders
    ordering = custkey[custkey % 3 != 0] if n_cust >= 3 else custkey
    o_cust = ordering[rng.integers(0, len(ordering), n_ord)]
    o_date = rng.integers(START_DAY, END_DAY - 151, n_ord, endpoint=True)
    o_prio = PRIORITIES[rng.integers(0, len(PRIORITIES), n_ord)]
    lines = rng.integers(1, 8, n_ord)  # 1..7 per order

    n_li = int(lines.sum())
    l_order_idx = np.repeat(np.arange(n_ord), lines)
    starts = np.cumsum(lines) - lines
    l_linenumber = np.arange(n_li) - np.repeat(starts, lines) + 1
    l_partkey = rng.integers(1, max(2, spec.rows(200_000)) + 1, n_li)
    l_suppkey = rng.integers(1, max(2, spec.rows(10_000)) + 1, n_li)
    qty = rng.integers(1, 51, n_li)
    part_price = 90_000 + (l_partkey // 10) % 20_001 + 100 * (l_partkey % 1_000)  # cents
    ext = qty * part_price
    disc = rng.integers(0, 11, n_li)  # hundredths
    tax = rng.integers(0, 9, n_li)
    ship = o_date[l_order_idx] + rng.integers(1, 122, n_li)
    commit = o_date[l_order_idx] + rng.integers(30, 91, n_li)
    receipt = ship + rng.integers(1, 31, n_li)
    flag_ra = np.where(rng.integers(0, 2, n_li) == 0, "R", "A").astype(object)
    returnflag = np.where(receipt <= CURRENT_DAY, flag_ra, "N").astype(object)
    linestatus = np.where(ship > CURRENT_DAY, "O", "F").astype(object)
    shipmode = SHIPMODES[rng.integers(0, len(SHIPMODES), n_li)]

    # order status and total price summarize the order's lines
    open_line = (linestatus == "O").astype(np.int64)
    n_open = np.add.reduceat(open_line, starts)
    status = np.where(n_open == lines, "O", np.where(n_open == 0, "F", "P")).astype(object)
    line_total = ext * (100 + tax) * (100 - disc)  # scale 6
    total = (np.add.reduceat(line_total, starts) + 5_000) // 10_000  # back to cents

    orders = Batch([
        _col(INT64, orderkey),
        _col(INT64, o_cust),
        _strings(status),
        _col(MONEY, total),
        _col(DATE32, o_date),
        _strings(o_prio),
        _col(INT64, np.zeros(n_ord, dtype=np.int64)),
    ])
    lineitem = Batch([
        _col(INT64, orderkey[l_order_idx]),
        _col(INT64, l_partkey),
        _col(INT64, l_suppkey),
        _col(INT64, l_linenumber),
        _col(MONEY, qty * 100),
        _col(MONEY, ext),
        _col(MONEY, disc),
        _col(MONEY, tax),
        _strings(returnflag),
        _strings(linestatus),
        _col(DATE32, ship),
        _col(DATE32, commit),
        _col(DATE32, receipt),
        _strings(shipmode),
    ])
    return {
        "customer": Table.from_batch("customer", CUSTOMER, customer, batch_rows),
        "orders": Table.from_batch("orders", ORDERS, orders, batch_rows),
        "lineitem": Table.from_batch("lineitem", LINEITEM, lineitem, batch_rows),
    }


def write_tables(tables: dict, out_dir) -> dict:
    """Write ``<name>.csv`` (with header) and ``<name>.schema.json``; returns paths."""
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, t in tables.items():
        csv_path = out / f"{name}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            write_csv(t, f, header=True)
        (out / f"{name}.schema.json").write_text(json.dumps(t.schema.to_json(), indent=2) + "\n")
        paths[name] = csv_path
    return paths
