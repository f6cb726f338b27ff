#!/usr/bin/env python3
"""
Command-line interface for gpplugin - GP regression, derivative posteriors
and simulation studies.
"""

import argparse
import json
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from gpplugin import (
    BandStudyConfig,
    CliConfig,
    ConfigError,
    Dataset,
    FitConfig,
    GPPluginError,
    GPUtils,
    NumericalError,
    RateStudyConfig,
    SelectionError,
    SpectraConfig,
    StudyConfig,
    StudyFailure,
    export_summary,
    fit,
    rate_study,
    replicate_study,
    simulate_dataset,
    spectra_sweep,
)
from gpplugin.config import COMMANDS, create_example_config
from gpplugin.simulator import coverage_study, tune

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def write_example_config(command: str, output_file: str) -> None:
    """Create an example configuration file for a command."""
    example_config = create_example_config(command)
    with open(output_file, "w", encoding="utf-8") as f:
        json.dump(example_config, f, indent=2)

    print(f"Example {command} configuration saved to: {output_file}")


def load_fit_data(config: FitConfig) -> Dataset:
    """Read x, y columns from CSV, or simulate from f₀ when no data file is set."""
    if config.data_path is None:
        rng = GPUtils.replicate_rng(config.seed, config.n, 0)
        return simulate_dataset(config.n, config.sigma0_sq, rng)

    try:
        df = pd.read_csv(config.data_path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ConfigError(f"Could not parse {config.data_path}: {e}") from e
    missing = {"x", "y"} - set(df.columns)
    if missing:
        raise ConfigError(f"{config.data_path} is missing columns: {sorted(missing)}")
    try:
        x = df["x"].to_numpy(dtype=float)
        y = df["y"].to_numpy(dtype=float)
    except ValueError as e:
        raise ConfigError(f"{config.data_path} has non-numeric x or y values: {e}") from e
    return Dataset(x, y)


def run_fit(config: FitConfig) -> Dict[str, str]:
    """Fit one posterior and export mean/variance/band per order."""
    data = load_fit_data(config)
    kernel, selection = tune(config.method, data)
    fitted = fit(kernel, data, selection.lam, selection.sigma2)

    lo, hi = kernel.domain
    grid = np.linspace(lo, hi, config.grid_points)
    rng = GPUtils.replicate_rng(config.seed, data.n, 1)
    summary = export_summary(fitted, config.orders, grid, config.level, config.draws, rng)

    out = config.output_dir
    paths = {"posterior": GPUtils.write_csv(summary, os.path.join(out, "posterior.csv"))}
    if selection.score_trace:
        paths["selection_trace"] = GPUtils.write_csv(
            selection.trace_frame(), os.path.join(out, "selection_trace.csv")
        )
    paths["selection"] = os.path.join(out, "selection.json")
    with open(paths["selection"], "w", encoding="utf-8") as f:
        json.dump(selection.summary(), f, indent=2, sort_keys=True)

    print(f"Fitted {kernel.label} on n={data.n}: lambda={selection.lam:.4g}, "
          f"sigma2={selection.sigma2:.4g}" + (f", nu={selection.nu:g}" if selection.nu else ""))
    return paths


def run_table(config: StudyConfig) -> Dict[str, str]:
    """Replicated RMSE table over methods, sample sizes and derivative orders."""
    result = replicate_study(config)
    print("\nRMSE Summary:")
    print(result.summary.to_string(index=False))
    return {
        "table": os.path.join(config.output_dir, "table.csv"),
        "replicates": os.path.join(config.output_dir, "replicate_summary.csv"),
    }


def run_rates(config: RateStudyConfig) -> Dict[str, str]:
    """Oracle-λ rate study with fitted log-log slopes."""
    result = rate_study(config)
    paths = result.write(config.output_dir)
    print("\nRate Summary:")
    print(result.slopes.to_string(index=False))
    return paths


def run_bands(config: BandStudyConfig) -> Dict[str, str]:
    """Credible-band coverage study."""
    result = coverage_study(config)
    paths = result.write(config.output_dir)
    print("\nBand Coverage:")
    print(result.summary.to_string(index=False))
    return paths


def run_spectra(config: SpectraConfig) -> Dict[str, str]:
    """Effective-dimension sweep over λ."""
    df = spectra_sweep(config.eigen, config.basis, config.lambdas(), config.orders,
                       config.grid_size, config.grid_truncation)
    path = GPUtils.write_csv(df, os.path.join(config.output_dir, "spectra.csv"))
    print(f"Effective dimensions for {len(df)} lambda values saved to: {path}")
    return {"spectra": path}


COMMAND_RUNNERS = {
    "fit": run_fit,
    "table": run_table,
    "rates": run_rates,
    "bands": run_bands,
    "spectra": run_spectra,
}


def report_error(error: Exception, exit_code: int, output_dir: Optional[str]) -> int:
    """Write error.json (when possible) and a one-line record to stderr."""
    record = {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}
    diagnostics = getattr(error, "diagnostics", None)
    if diagnostics:
        record["diagnostics"] = diagnostics
    if output_dir:
        try:
            os.makedirs(output_dir, exist_ok=True)
            with open(os.path.join(output_dir, "error.json"), "w", encoding="utf-8") as f:
                json.dump(record, f, indent=2, sort_keys=True, default=str)
        except OSError:
            pass
    print(json.dumps(record, sort_keys=True, default=str), file=sys.stderr)
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Gaussian-process regression with derivative posteriors and simulation studies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Create an example config for a command
  python main.py table --create-config table.json

  # Reproduce the RMSE table from the shipped config
  python main.py table --config configs/rmse_table.json --out results/table --threads 4

  # Rate study for the spectral Polynomial(2) kernel
  python main.py rates --config configs/rates_alpha2.json --out results/rates

  # Fit one posterior and export mean, variance and 95% bands
  python main.py fit --config configs/fit_example.json --out results/fit --seed 7

  # Band coverage and effective-dimension sweep
  python main.py bands --config configs/bands.json --out results/bands
  python main.py spectra --config configs/spectra.json --out results/spectra
        """
    )

    parser.add_argument("command",
                        choices=COMMANDS,
                        help="What to run")
    parser.add_argument("--config",
                        help="JSON configuration file (defaults are used when omitted)")
    parser.add_argument("--create-config",
                        metavar="PATH",
                        help="Write an example configuration for the command and exit")
    parser.add_argument("--out", "--output-dir",
                        dest="out",
                        default="gpplugin_output",
                        help="Output directory")
    parser.add_argument("--seed",
                        type=int,
                        help="Override the config seed")
    parser.add_argument("--threads",
                        type=int,
                        help="Worker threads for replicate loops")
    parser.add_argument("--log-level",
                        default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging level")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.create_config:
        try:
            write_example_config(args.command, args.create_config)
        except OSError as e:
            return report_error(e, EXIT_IO, None)
        return 0

    try:
        cli = CliConfig(command=args.command, config_path=args.config, output_dir=args.out,
                        seed=args.seed, threads=args.threads)
        config = cli.load()
        os.makedirs(cli.output_dir, exist_ok=True)
        logger = GPUtils.setup_logging(log_file=os.path.join(cli.output_dir, "gpplugin.log"),
                                       level=args.log_level)
        logger.info(f"Running '{cli.command}' with output directory {cli.output_dir}")

        outputs = COMMAND_RUNNERS[cli.command](config)

        GPUtils.write_metadata(
            os.path.join(cli.output_dir, "metadata.json"),
            command=cli.command,
            config=config.to_dict(),
            seed=config.seed,
            extra={"outputs": outputs},
        )
        print(f"Output directory: {cli.output_dir}")
        return 0

    except ConfigError as e:
        return report_error(e, EXIT_CONFIG, args.out)
    except (NumericalError, SelectionError, StudyFailure) as e:
        return report_error(e, EXIT_NUMERICAL, args.out)
    except OSError as e:
        return report_error(e, EXIT_IO, args.out)
    except GPPluginError as e:
        # bad data or an unsupported request (domain, order, kernel)
        return report_error(e, EXIT_CONFIG, args.out)


if __name__ == "__main__":
    sys.exit(main())
