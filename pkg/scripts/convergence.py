"""Coarse / fine / hybrid errors for h = H/2, H/4, H/8 on the unit square.

Extra arguments are passed to ``femnn convergence``, e.g. ``--zero-network``.
The k = 3 reference lives on a 256x256 mesh, so the test set is kept small.
"""
from _common import run

if __name__ == "__main__":
    run("convergence", "--levels", "1,2,3", "--n-test", "256", "--output-dir", "runs/convergence")
