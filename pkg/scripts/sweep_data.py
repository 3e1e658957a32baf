"""Hybrid error versus number of training problems (2^10 ... 2^14; --full-scale for 2^16)."""
from _common import run

if __name__ == "__main__":
    run("sweep", "--axis", "data", "--n-test", "1024", "--output-dir", "runs/sweep_data")
