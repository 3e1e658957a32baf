"""Frobenius-product regularization alpha in {0, 1e-4, 1e-2, 1}: errors and c_W."""
from _common import run

if __name__ == "__main__":
    run("sweep", "--axis", "alpha", "--output-dir", "runs/sweep_alpha")
