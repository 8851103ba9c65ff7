"""Volterra-to-Fredholm transition: certificates as the support a_F grows.

    python scripts/support_sweep.py [problems/sweep.toml] [--points 40]

Prints the sweep table and the largest a_F at which every required scalar
certificate still passes.
"""

from __future__ import annotations

import argparse
import io
from dataclasses import dataclass
from pathlib import Path

from nonlocal_evolution.cli import main as nle

ROOT = Path(__file__).resolve().parent.parent


@dataclass
class Config:
    problem: Path = ROOT / "problems" / "sweep.toml"
    points: int = 20


def run(cfg: Config) -> list[dict]:
    buf = io.StringIO()
    code = nle(["sweep", str(cfg.problem), "--points", str(cfg.points)], buf)
    if code:
        raise SystemExit(code)
    lines = buf.getvalue().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


def last_certified(rows) -> str | None:
    best = None
    for row in rows:
        try:
            margins = [float(row[k]) for k in ("c7_margin", "c8_margin", "c13_margin")]
        except ValueError:
            continue
        if all(m > 0 for m in margins):
            best = row["a_F"]
    return best


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("problem", nargs="?", type=Path, default=Config.problem)
    p.add_argument("--points", type=int, default=Config.points)
    args = p.parse_args()
    rows = run(Config(args.problem, args.points))
    print(f"{'a_F':>8} {'r':>10} {'c7':>10} {'c8':>10} {'c13':>10} {'iters':>6}  status")
    for row in rows:
        vals = []
        for k in ("a_F", "r", "c7_margin", "c8_margin", "c13_margin"):
            v = row[k]
            vals.append(f"{float(v):10.4f}" if v else f"{'-':>10}")
        print(" ".join(vals), f"{row['iterations']:>6}  {row['status']}")
    best = last_certified(rows)
    print(f"\nlargest certified support: {best if best else 'none'}")


if __name__ == "__main__":
    main()
