"""Bundled datasets and query workloads.

Three schemas ship with the package: a small HR schema for the three-query
running example, a star schema shaped like the retail benchmark family
(date_dim, item, store, store_sales), and the 30-column synthetic table.
"""

from __future__ import annotations

import random

import numpy as np

from .engine import Relation, generate_synthetic
from .plan import DataType, Schema
from .sql import optimize_single, parse

I, F, S = DataType.INT64, DataType.FLOAT64, DataType.UTF8

RUNNING_SCHEMAS = {
    "employees": Schema.of(("id", I), ("name", S), ("dep", I), ("age", I), ("gender", S)),
    "departments": Schema.of(("dept_id", I), ("dept_name", S), ("location", S)),
    "salaries": Schema.of(("emp_id", I), ("salary", I), ("from_date", I)),
    "titles": Schema.of(("emp_id", I), ("title", S), ("title_from", I), ("title_to", I)),
}

# `from`/`to` are reserved words, hence title_from/title_to
RUNNING_SQL = {
    "q1": """SELECT name, dept_name, salary
FROM employees, departments, salaries
WHERE dep = dept_id
  AND id = emp_id
  AND gender = 'F'
  AND location = 'us'
  AND salary > 20000
ORDER BY salary DESC""",
    "q2": """SELECT name, dept_name, title, title_to
FROM departments, employees, titles
WHERE dep = dept_id
  AND id = emp_id
  AND gender = 'F'
  AND location = 'us'
  AND title_from >= 2010""",
    "q3": """SELECT id, name, salary, from_date
FROM employees, salaries
WHERE id = emp_id
  AND age > 30
  AND salary > 30000""",
}

STAR_SCHEMAS = {
    "date_dim": Schema.of(("d_date_sk", I), ("d_year", I), ("d_moy", I), ("d_dom", I),
                          ("d_day_name", S)),
    "item": Schema.of(("i_item_sk", I), ("i_brand_id", I), ("i_brand", S), ("i_category", S),
                      ("i_manufact_id", I), ("i_manager_id", I), ("i_current_price", F)),
    "store": Schema.of(("s_store_sk", I), ("s_store_id", S), ("s_store_name", S),
                       ("s_state", S), ("s_gmt_offset", I)),
    "store_sales": Schema.of(("ss_sold_date_sk", I), ("ss_item_sk", I), ("ss_store_sk", I),
                             ("ss_quantity", I), ("ss_sales_price", F),
                             ("ss_ext_sales_price", F)),
}

_DAYS = ["Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"]
_WORDS = ["able", "bar", "cally", "ese", "ought", "pri", "anti", "n st", "eing", "ation"]


def _words(rng, n: int, count: int = 2) -> list[str]:
    return ["".join(_WORDS[j] for j in rng.integers(0, len(_WORDS), size=count)) for _ in range(n)]


def running_tables(employees: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    n_dept = max(4, employees // 50)
    emp = Relation(RUNNING_SCHEMAS["employees"], {
        "id": np.arange(1, employees + 1),
        "name": [f"emp{i:05d}" for i in range(1, employees + 1)],
        "dep": rng.integers(1, n_dept + 1, size=employees),
        "age": rng.integers(20, 66, size=employees),
        "gender": rng.choice(["F", "M"], size=employees).tolist(),
    })
    dept = Relation(RUNNING_SCHEMAS["departments"], {
        "dept_id": np.arange(1, n_dept + 1),
        "dept_name": [f"dept{i:03d}" for i in range(1, n_dept + 1)],
        "location": rng.choice(["us", "eu", "apac"], size=n_dept).tolist(),
    })
    n_sal = employees * 3
    sal = Relation(RUNNING_SCHEMAS["salaries"], {
        "emp_id": rng.integers(1, employees + 1, size=n_sal),
        "salary": rng.integers(10000, 120001, size=n_sal),
        "from_date": rng.integers(1995, 2021, size=n_sal),
    })
    n_tit = employees * 2
    start = rng.integers(2000, 2021, size=n_tit)
    tit = Relation(RUNNING_SCHEMAS["titles"], {
        "emp_id": rng.integers(1, employees + 1, size=n_tit),
        "title": rng.choice(["engineer", "senior engineer", "manager", "staff"], size=n_tit).tolist(),
        "title_from": start,
        "title_to": start + rng.integers(1, 6, size=n_tit),
    })
    return {"employees": emp, "departments": dept, "salaries": sal, "titles": tit}


def star_tables(sales: int = 20000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    years = np.arange(1998, 2003)
    n_days = len(years) * 12 * 28
    d_year = np.repeat(years, 12 * 28)
    d_moy = np.tile(np.repeat(np.arange(1, 13), 28), len(years))
    d_dom = np.tile(np.arange(1, 29), len(years) * 12)
    date = Relation(STAR_SCHEMAS["date_dim"], {
        "d_date_sk": np.arange(1, n_days + 1), "d_year": d_year, "d_moy": d_moy, "d_dom": d_dom,
        "d_day_name": [_DAYS[i % 7] for i in range(n_days)],
    })
    n_items = 400
    brand_id = rng.integers(1, 41, size=n_items)
    item = Relation(STAR_SCHEMAS["item"], {
        "i_item_sk": np.arange(1, n_items + 1),
        "i_brand_id": brand_id,
        "i_brand": [f"brand#{b}" for b in brand_id],
        "i_category": rng.choice(["Books", "Music", "Home", "Sports", "Shoes"], size=n_items).tolist(),
        "i_manufact_id": rng.integers(1, 201, size=n_items),
        "i_manager_id": rng.integers(1, 101, size=n_items),
        "i_current_price": np.round(rng.uniform(0.5, 100, size=n_items), 2),
    })
    n_stores = 12
    store = Relation(STAR_SCHEMAS["store"], {
        "s_store_sk": np.arange(1, n_stores + 1),
        "s_store_id": [f"S{i:04d}" for i in range(1, n_stores + 1)],
        "s_store_name": _words(rng, n_stores),
        "s_state": rng.choice(["TN", "GA", "CA", "NY"], size=n_stores).tolist(),
        "s_gmt_offset": rng.choice([-5, -6, -8], size=n_stores),
    })
    qty = rng.integers(1, 101, size=sales)
    price = np.round(rng.uniform(1, 200, size=sales), 2)
    ss = Relation(STAR_SCHEMAS["store_sales"], {
        "ss_sold_date_sk": rng.integers(1, n_days + 1, size=sales),
        "ss_item_sk": rng.integers(1, n_items + 1, size=sales),
        "ss_store_sk": rng.integers(1, n_stores + 1, size=sales),
        "ss_quantity": qty, "ss_sales_price": price, "ss_ext_sales_price": np.round(qty * price, 2),
    })
    return {"date_dim": date, "item": item, "store": store, "store_sales": ss}


def _q43(offset: int, year: int) -> str:
    days = ", ".join(
        f"SUM(CASE WHEN d_day_name = '{d}' THEN ss_sales_price ELSE NULL END) {d[:3].lower()}_sales"
        for d in _DAYS)
    return f"""SELECT s_store_name, s_store_id, {days}
FROM date_dim, store_sales, store
WHERE d_date_sk = ss_sold_date_sk AND s_store_sk = ss_store_sk
  AND s_gmt_offset = {offset} AND d_year = {year}
GROUP BY s_store_name, s_store_id
ORDER BY s_store_name, s_store_id LIMIT 100"""


# twenty analytic queries; the star-schema ones follow the Q3/Q43/Q55 shapes
POOL_SQL = {
    "p01": """SELECT d_year, i_brand_id, i_brand, SUM(ss_ext_sales_price) AS sum_agg
FROM date_dim, store_sales, item
WHERE d_date_sk = ss_sold_date_sk AND ss_item_sk = i_item_sk
  AND i_manufact_id = 128 AND d_moy = 11
GROUP BY d_year, i_brand, i_brand_id
ORDER BY d_year, sum_agg DESC, i_brand_id LIMIT 100""",
    "p02": """SELECT d_year, i_brand_id, i_brand, SUM(ss_ext_sales_price) AS sum_agg
FROM date_dim, store_sales, item
WHERE d_date_sk = ss_sold_date_sk AND ss_item_sk = i_item_sk
  AND i_manufact_id = 77 AND d_moy = 12
GROUP BY d_year, i_brand, i_brand_id
ORDER BY d_year, sum_agg DESC, i_brand_id LIMIT 100""",
    "p03": """SELECT i_brand_id, i_brand, SUM(ss_ext_sales_price) ext_price
FROM date_dim, store_sales, item
WHERE d_date_sk = ss_sold_date_sk AND ss_item_sk = i_item_sk
  AND i_manager_id = 28 AND d_moy = 11 AND d_year = 1999
GROUP BY i_brand, i_brand_id
ORDER BY ext_price DESC, i_brand_id LIMIT 100""",
    "p04": """SELECT i_brand_id, i_brand, SUM(ss_ext_sales_price) ext_price
FROM date_dim, store_sales, item
WHERE d_date_sk = ss_sold_date_sk AND ss_item_sk = i_item_sk
  AND i_manager_id = 36 AND d_moy = 12 AND d_year = 2001
GROUP BY i_brand, i_brand_id
ORDER BY ext_price DESC, i_brand_id LIMIT 100""",
    "p05": _q43(-5, 2000),
    "p06": _q43(-6, 2001),
    "p07": """SELECT i_category, SUM(ss_ext_sales_price) revenue, COUNT(*) cnt
FROM date_dim, store_sales, item
WHERE d_date_sk = ss_sold_date_sk AND ss_item_sk = i_item_sk
  AND d_year = 2000 AND d_moy <= 6
GROUP BY i_category ORDER BY revenue DESC""",
    "p08": """SELECT s_state, SUM(ss_quantity) qty
FROM store_sales, store
WHERE ss_store_sk = s_store_sk AND s_gmt_offset = -5
GROUP BY s_state ORDER BY s_state""",
    "p09": """SELECT d_moy, SUM(ss_sales_price) sales
FROM date_dim, store_sales
WHERE d_date_sk = ss_sold_date_sk AND d_year = 1999
GROUP BY d_moy ORDER BY d_moy""",
    "p10": """SELECT d_moy, MAX(ss_sales_price) top_price
FROM date_dim, store_sales
WHERE d_date_sk = ss_sold_date_sk AND d_year = 2002
GROUP BY d_moy ORDER BY d_moy""",
    "p11": """SELECT i_brand, MIN(i_current_price) lo, MAX(i_current_price) hi
FROM item WHERE i_category = 'Books' OR i_category = 'Music'
GROUP BY i_brand ORDER BY i_brand""",
    "p12": """SELECT i_item_sk, i_brand, i_current_price
FROM item WHERE i_current_price > 90 ORDER BY i_current_price DESC LIMIT 20""",
    "p13": """SELECT ss_item_sk, ss_quantity, ss_sales_price
FROM store_sales WHERE ss_quantity > 95 AND ss_sales_price > 150""",
    "p14": """SELECT ss_store_sk, SUM(ss_ext_sales_price) total
FROM store_sales WHERE ss_quantity >= 90
GROUP BY ss_store_sk ORDER BY ss_store_sk""",
    "p15": """SELECT n_1, d_1, s_1 FROM synthetic WHERE n_1 <= 100""",
    "p16": """SELECT n_1, n_2, d_2 FROM synthetic WHERE n_1 > 900""",
    "p17": """SELECT n_2, SUM(d_1) total FROM synthetic WHERE n_2 < 500
GROUP BY n_2 ORDER BY n_2 LIMIT 50""",
    "p18": """SELECT n_3, s_2 FROM synthetic WHERE n_3 < 1000 AND d_3 > 0.5""",
    "p19": """SELECT COUNT(*) cnt, MAX(d_4) mx FROM synthetic WHERE n_1 > 500 AND n_2 < 5000""",
    "p20": """SELECT s_store_name, SUM(ss_sales_price) sales
FROM date_dim, store_sales, store
WHERE d_date_sk = ss_sold_date_sk AND s_store_sk = ss_store_sk
  AND d_year = 2000 AND d_moy = 1
GROUP BY s_store_name ORDER BY s_store_name""",
}


def pool_tables(sales: int = 20000, synthetic_rows: int = 5000, seed: int = 0) -> dict:
    tables = star_tables(sales, seed)
    tables["synthetic"] = generate_synthetic(synthetic_rows, seed)
    return tables


def plan_queries(sql: dict, catalog) -> list:
    """Parse and locally optimize each (query id -> SQL) entry, in key order."""
    return [optimize_single(parse(text, catalog, qid), catalog) for qid, text in sql.items()]


# ---------------------------------------------------------------------------
# Random workloads for the equivalence suite

def random_tables(rng: random.Random, min_rows: int = 100, max_rows: int = 10000) -> dict:
    """Three tables with disjoint column prefixes and joinable key columns."""
    nrng = np.random.default_rng(rng.randrange(2**32))
    tables = {}
    for p in ("a", "b", "c"):
        n = rng.randint(min_rows, max_rows)
        keys = max(2, n // rng.choice([1, 2, 5, 10]))
        schema = Schema.of((f"{p}_k", I), (f"{p}_x", I), (f"{p}_y", F), (f"{p}_s", S))
        tables[f"t{p}"] = Relation(schema, {
            f"{p}_k": nrng.integers(1, keys + 1, size=n),
            f"{p}_x": nrng.integers(0, 100, size=n),
            f"{p}_y": np.round(nrng.uniform(0, 1, size=n), 3),
            f"{p}_s": nrng.choice(["red", "green", "blue", "cyan"], size=n).tolist(),
        })
    return tables


def _pred(rng: random.Random, p: str) -> str:
    kind = rng.randrange(4)
    if kind == 0:
        return f"{p}_x {rng.choice(['<', '<=', '>', '>='])} {rng.randrange(100)}"
    if kind == 1:
        return f"{p}_y {rng.choice(['<', '>'])} {rng.choice([0.1, 0.25, 0.5, 0.75, 0.9])}"
    if kind == 2:
        return f"{p}_s = '{rng.choice(['red', 'green', 'blue', 'cyan'])}'"
    return f"({p}_x < {rng.randrange(50)} OR {p}_s = '{rng.choice(['red', 'blue'])}')"


def random_query(rng: random.Random) -> str:
    prefixes = rng.sample(["a", "b", "c"], rng.choice([1, 1, 2, 2, 3]))
    cols = [f"{p}_{c}" for p in prefixes for c in ("k", "x", "y", "s")]
    where = [f"{p}_k = {q}_k" for p, q in zip(prefixes, prefixes[1:])]
    for p in prefixes:
        if rng.random() < 0.8:
            where.append(_pred(rng, p))
    tables = ", ".join(f"t{p}" for p in prefixes)
    if rng.random() < 0.3:
        g = rng.choice([c for c in cols if c.endswith(("_x", "_s"))])
        v = rng.choice([c for c in cols if c.endswith(("_x", "_y"))])
        sel = f"{g}, COUNT(*) n, SUM({v}) total, MIN({v}) lo"
        tail = f" GROUP BY {g}"
        if rng.random() < 0.5:
            tail += f" ORDER BY total DESC LIMIT {rng.randint(1, 20)}"
    else:
        picked = rng.sample(cols, rng.randint(1, min(4, len(cols))))
        sel = ", ".join(picked)
        tail = f" ORDER BY {picked[0]} LIMIT {rng.randint(1, 50)}" if rng.random() < 0.2 else ""
    clause = f" WHERE {' AND '.join(where)}" if where else ""
    return f"SELECT {sel} FROM {tables}{clause}{tail}"


def random_workload(seed: int, min_queries: int = 2, max_queries: int = 6,
                    min_rows: int = 100, max_rows: int = 10000) -> tuple[dict, dict]:
    """Returns (tables, query id -> SQL)."""
    rng = random.Random(seed)
    tables = random_tables(rng, min_rows, max_rows)
    n = rng.randint(min_queries, max_queries)
    return tables, {f"r{i}": random_query(rng) for i in range(n)}
