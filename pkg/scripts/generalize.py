"""Train on (0,1)^2, evaluate on (0,2)x(0,1) with C = (1.2, 0.2, 1.4, 0.4) for k = 1, 2, 3."""
from _common import run

if __name__ == "__main__":
    run("generalize", "--levels", "1,2,3", "--output-dir", "runs/generalize")
