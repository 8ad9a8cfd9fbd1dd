"""Running the whole two-stage pipeline from a config file."""
# %%
import tempfile
from pathlib import Path

from ssbench.cli import main
from ssbench.synthetic import write_fixture

work = Path(tempfile.mkdtemp(prefix="ssbench-demo-"))
config = write_fixture(work, seed=0)
print(config.read_text())

# %%
# Same as: ssbench pipeline --config <work>/config.ini
code = main(["pipeline", "--config", str(config)])
print("exit code:", code)
print(sorted(p.name for p in (work / "out").iterdir()))

# %%
print((work / "out" / "fit_report.txt").read_text())
print((work / "out" / "coherence.csv").read_text().splitlines()[:4])
