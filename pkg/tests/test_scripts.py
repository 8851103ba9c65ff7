import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def run(*args):
    return subprocess.run([sys.executable, *map(str, args)], capture_output=True, text=True,
                          check=True, cwd=ROOT).stdout


def test_convergence_order_script():
    out = run(ROOT / "scripts" / "convergence_order.py", "--grids", "20", "40")
    assert "propagator vs expm" in out and "picard_solve vs closed form" in out


def test_support_sweep_script():
    out = run(ROOT / "scripts" / "support_sweep.py", "--points", "4")
    assert "largest certified support: 0.5" in out
