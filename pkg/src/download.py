import sys

from main import run_cli

# ============================================================================
# EXECUTE
# ============================================================================

if __name__ == '__main__':
    # python src/download.py --event 2019carv [--exclude qm12]
    sys.exit(run_cli(["fetch", *sys.argv[1:]]))
