"""No scaling vs min-max vs standardization over several training-set sizes."""
from _common import run

if __name__ == "__main__":
    run("preprocessing", "--sizes", "1024,4096,16384", "--reps", "3", "--n-test", "1024",
        "--output-dir", "runs/preprocessing")
