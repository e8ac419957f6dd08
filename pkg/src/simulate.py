import sys

from main import run_cli

if __name__ == '__main__':
    # python src/simulate.py --config config/experiments/m1_desk.yaml --threads 4
    sys.exit(run_cli(["simulate", *sys.argv[1:]]))
