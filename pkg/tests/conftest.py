import os
import sys

# Pin BLAS threading before numpy is imported anywhere, so matmul results
# (and therefore trained weights) are reproducible across runs.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")


def pytest_terminal_summary(terminalreporter):
    # Echo the acceptance scorecard after the run, where output capture
    # can't swallow it.
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SCORECARD", None) if mod else None
    if lines:
        terminalreporter.write_sep("=", "acceptance scorecard")
        for line in lines:
            terminalreporter.write_line(line)
