"""
From Matrix Market files to a benchmark table
=============================================

Write a stiffness/mass pair to Matrix Market files, read it back, and run
the command-line benchmark on it.  Everything the command line writes is
plain CSV and JSON.
"""

import json
import tempfile
from pathlib import Path

from fracrkm.cli import main, read_csv
from fracrkm.operator import load_pencil, make_fd_laplacian_2d, spectral_interval, write_pencil

work = Path(tempfile.mkdtemp(prefix="fracrkm-demo-"))

# a 20 x 20 grid Laplacian as the example input
write_pencil(make_fd_laplacian_2d(20), work / "K.mtx", work / "M.mtx")
pencil = load_pencil(work / "K.mtx", work / "M.mtx")
print(f"read n = {pencil.n}, spectrum inside {tuple(round(v, 3) for v in spectral_interval(pencil))}")

# poles for a Zolotarev space, as printed by the command line
main(["poles", "--kind", "zolotarev", "--k", "4", "--stiffness", str(work / "K.mtx"), "--mass", str(work / "M.mtx")])

# a small benchmark: three methods, two exponents, k = 1..8
main([
    "bench", "--stiffness", str(work / "K.mtx"), "--mass", str(work / "M.mtx"),
    "--methods", "zolo,bura,greedy", "--s", "0.3,0.7", "--k-min", "1", "--k-max", "8",
    "--out-dir", str(work / "out"),
])
records = read_csv(work / "out" / "bench.csv")
print(f"\n{len(records)} rows in bench.csv; last rows per method at k = 8:")
for r in records:
    if r.k == 8:
        print(f"  {r.method:7s} s = {r.s}  error_M = {r.error_M:.3e}")

summary = json.loads((work / "out" / "bench.json").read_text())
for fit in summary["rates"]:
    print(f"  rate {fit['method']:7s} s = {fit['s']}: {fit['rate']:.3f}")
print(f"\noutputs in {work}")
