"""Hybrid error versus depth (1, 2, 4, 8 layers of 512) and width (8 ... 512 at 4 layers)."""
from _common import run

if __name__ == "__main__":
    run("sweep", "--axis", "layers", "--output-dir", "runs/sweep_layers")
    run("sweep", "--axis", "neurons", "--output-dir", "runs/sweep_neurons")
