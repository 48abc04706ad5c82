#!/usr/bin/env python3
"""Convert the public sushi preference files into a dataset for this package.

Works with the sushi3 distribution (Kamishima's preference-data collection):
the set-A order file ``sushi3a.5000.10.order`` and the respondent attribute
file ``sushi3.udata``. Neither file ships with this repository; download the
archive separately and point this script at the two files.

Four items are kept: anago (set-A id 1), maguro (2), toro (7), and
tekka-maki (8), in that item order, so a ranking word (r1, r2, r3, r4) holds
the within-foursome rank of anago, maguro, toro, tekka-maki respectively.
Respondents are categorized by gender, six age bands, and east/west Japan
(g = 2 * 6 * 2 = 24). The region defaults to current residence; pass
``--region childhood`` to use the until-15 residence instead.

Writes ``sushi.csv`` and ``sushi_schema.yaml`` into the output directory.
"""

import argparse
import sys
from pathlib import Path

PKG_ROOT = Path(__file__).resolve().parents[1] / "src"
if str(PKG_ROOT) not in sys.path:
    sys.path.insert(0, str(PKG_ROOT))

from rankmcmc.dataio import (DatasetSchema, Factor,  # noqa: E402
                             save_schema)

ITEMS = [(1, "anago"), (2, "maguro"), (7, "toro"), (8, "tekka_maki")]
GENDER_LEVELS = ("male", "female")
AGE_LEVELS = ("15-19", "20-29", "30-39", "40-49", "50-59", "60+")
REGION_LEVELS = ("east", "west")

# sushi3.udata column layout (whitespace separated)
_COL_GENDER = 1
_COL_AGE = 2
_COL_EW_CHILDHOOD = 6
_COL_EW_CURRENT = 9


def parse_orders(path):
    """Preference-ordered item id lists, one per respondent.

    Each data line ends with ten item ids, most preferred first; leading
    count/length tokens and any header line are ignored.
    """
    orders = []
    for line in Path(path).read_text().splitlines():
        tokens = line.split()
        if len(tokens) < 10:
            continue
        ids = [int(t) for t in tokens[-10:]]
        if sorted(ids) != list(range(10)):
            raise SystemExit(f"unexpected order line (not a permutation of "
                             f"ids 0..9): {line!r}")
        orders.append(ids)
    return orders


def parse_users(path, region_col):
    """(gender level, age level, region level) per respondent."""
    users = []
    for line in Path(path).read_text().splitlines():
        tokens = line.split()
        if not tokens:
            continue
        gender = GENDER_LEVELS[int(tokens[_COL_GENDER])]
        age = AGE_LEVELS[int(tokens[_COL_AGE])]
        region = REGION_LEVELS[int(tokens[region_col])]
        users.append((gender, age, region))
    return users


def foursome_word(order):
    """Within-foursome ranks (1 = most preferred) in our fixed item order."""
    position = {item_id: pos for pos, item_id in enumerate(order)}
    kept = sorted(ITEMS, key=lambda it: position[it[0]])
    word = [0] * len(ITEMS)
    for rank_value, (item_id, _) in enumerate(kept, start=1):
        word[[it[0] for it in ITEMS].index(item_id)] = rank_value
    return word


def build_schema():
    return DatasetSchema(items=4, factors=(
        Factor("gender", GENDER_LEVELS),
        Factor("age", AGE_LEVELS),
        Factor("region", REGION_LEVELS)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", required=True,
                    help="path to sushi3a.5000.10.order")
    ap.add_argument("--users", required=True, help="path to sushi3.udata")
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--region", choices=("current", "childhood"),
                    default="current",
                    help="which east/west column to use (default: current)")
    args = ap.parse_args(argv)

    region_col = (_COL_EW_CURRENT if args.region == "current"
                  else _COL_EW_CHILDHOOD)
    orders = parse_orders(args.orders)
    users = parse_users(args.users, region_col)
    if len(orders) != len(users):
        raise SystemExit(f"{len(orders)} rankings but {len(users)} "
                         f"respondent rows; the files do not match")

    schema = build_schema()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_schema(schema, out_dir / "sushi_schema.yaml")
    with open(out_dir / "sushi.csv", "w") as f:
        f.write(",".join(schema.column_names) + "\n")
        for (gender, age, region), order in zip(users, orders):
            word = foursome_word(order)
            f.write(",".join([gender, age, region]
                             + [str(r) for r in word]) + "\n")
    print(f"wrote {len(orders)} rows to {out_dir / 'sushi.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
