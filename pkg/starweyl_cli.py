#!filepath: starweyl_cli.py
# --- Step 1: Standard Library Imports ---
import os
import sys
import argparse
import logging
from typing import List, Optional

# --- Step 2: Local Module Imports ---
from starweyl.config import RunConfig
from starweyl.errors import ModelError, NonConvergence, StarWeylError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RECOVERY = 0, 2, 3, 4


def run_command(run: RunConfig) -> None:
    """Loads the problem (if any), applies the CLI overrides and runs one command."""
    from file_operations import ReportFileOps
    from progress_display import TqdmProgress
    from starweyl.commands import COMMANDS
    from starweyl.configio import load_config

    problem = None
    if run.config_path is not None:
        problem = load_config(run.config_path).with_grid_count(run.grid_count)
        run.tolerances = problem.tol
    elif run.command != "selftest":
        raise ModelError(f"'{run.command}' needs --config.")

    file_ops = ReportFileOps(run.out_dir)
    written = COMMANDS[run.command](run, problem, file_ops, TqdmProgress)
    for name, path in sorted(written.items()):
        logging.info(f"  {name}: {path}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point. Parses arguments, runs the command and maps failures to
    exit codes: 2 for configuration and model errors, 3 for numerical
    failures and violated identities, 4 when recovery does not converge.
    """
    logging.basicConfig(level=os.environ.get("LOGLEVEL", "INFO"), format='%(asctime)s - [%(levelname)s] - %(message)s', datefmt='%H:%M:%S')

    parser = argparse.ArgumentParser(
        description="Weyl-type matrices of higher-order differential operators on star graphs",
        formatter_class=argparse.RawTextHelpFormatter,
        epilog="Commands:\n"
               "  forward   M_s and m_j over the spectral grid (M_s.csv, m_j.csv, forward_report.json)\n"
               "  reduce    m_pN from the stored M_s data (m_pN_reconstructed.csv, reduction_report.json)\n"
               "  verify    identity and asymptotic checks (asymptotics_report.json)\n"
               "  recover   fit an edge potential to synthesized Weyl data (recovery_report.json)\n"
               "  selftest  built-in checks, no config needed (selftest_report.json)\n\n"
               "Exit codes:\n"
               "  0 success, 2 configuration or model error, 3 numerical failure, 4 recovery did not converge.\n"
               "  verify and selftest write their full report before exiting 3 on a failed check;\n"
               "  every other failure leaves no output files."
    )
    parser.add_argument("command", choices=["forward", "reduce", "verify", "recover", "selftest"])
    parser.add_argument("--config", help="JSON problem description.")
    parser.add_argument("--out", default="out", help="Output directory for reports (default: out).")
    parser.add_argument("--workers", type=int, default=1, help="Threads for lambda sweeps.")
    parser.add_argument("--grid-count", type=int, help="Override the number of points on the ray grid.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for sampled checks and recovery restarts.")

    args = parser.parse_args(argv)

    try:
        run = RunConfig(args.config, args.command, args.out, args.workers, args.grid_count, args.seed)
        logging.info(f"--- starweyl {run.command} ---")
        run_command(run)
    except (ModelError, ValueError, FileNotFoundError) as e:
        logging.critical(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except NonConvergence as e:
        logging.critical(f"❌ Recovery failed: {e}")
        return EXIT_RECOVERY
    except StarWeylError as e:
        logging.critical(f"❌ {e.__class__.__name__}: {e}")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
