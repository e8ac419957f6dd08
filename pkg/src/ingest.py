import sys

from main import run_cli

if __name__ == '__main__':
    # python src/ingest.py --input roebling_raw.csv --event 2019roe
    sys.exit(run_cli(["import", *sys.argv[1:]]))
