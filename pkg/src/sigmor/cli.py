"""Command-line pipeline: simulate | learn | reduce | evaluate | pipeline.

Configuration is a flat `key = value` text file; every key can be
overridden by an environment variable SIGMOR_<KEY> and the defaults
reproduce the desk-scale benchmark (d = 100, N = 4, 200 training paths,
100 test controls on a 1001-point grid). --full-scale switches to the
d = 1000, N = 5, 1000+1000-control configuration.

Artifacts are CSV (17 significant digits, byte-reproducible for a fixed
seed) plus plain-text system containers:

    simulate -> output_k####.csv            truth outputs for chosen k
    learn    -> C_matrix.csv, learn_report.csv
    reduce   -> hankel.csv, reduced_r###.txt
    evaluate -> errors.csv                  rows r, E_sig, E_MOR, E_red_sig

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""

import argparse
import os
import sys as _sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .balancing import balance, reduce as reduce_order, write_hankel_csv
from .bilinear import Trajectory, load_system, save_system, write_trajectory_csv
from .dynamics import make_reaction_diffusion, test_control, training_control
from .errors import (ConfigError, DivergenceError, NonNilpotentSystemError,
                     OracleConvergenceError)
from .gramians import gramian_series
from .grids import uniform_grid
from .learning import (LstsqAccumulator, ErrorReport, bilinear_output_batch,
                       bilinear_state_batch, error_l2, read_c_matrix_csv,
                       truth_output_batch, write_c_matrix_csv,
                       write_error_report_csv)
from .signature import signature_dimension, signature_system

ENV_PREFIX = "SIGMOR_"

_FULL_SCALE_PRESET = {"d": 1000, "N": 5, "n_train": 1000, "n_test": 1000}

# Accumulator block: controls per fold of the streaming regression.
_LEARN_BLOCK = 64


@dataclass
class ExperimentConfig:
    """Flat benchmark configuration; see module docstring for the file
    format and the environment-variable override rule."""

    d: int = 100
    m: int = 2
    T: float = 1.0
    grid_points: int = 1001
    N: int = 4
    c_w: float = 0.2
    n_train: int = 200
    n_test: int = 100
    ridge_lambda: float = 0.0
    r_list: list = field(default_factory=lambda: list(range(1, 41)))
    seed: int = 2024
    k_values: list = field(default_factory=lambda: [1, 10, 50])
    out_dir: str = "sigmor_out"

    def validate(self) -> "ExperimentConfig":
        if self.d < 2:
            raise ConfigError(f"key d: need d >= 2, got {self.d}")
        if self.m != 2:
            raise ConfigError(
                f"key m: the reaction-diffusion benchmark has m = 2 inputs, "
                f"got {self.m}")
        if self.T <= 0:
            raise ConfigError(f"key T: horizon must be positive, got {self.T}")
        if self.grid_points < 2:
            raise ConfigError(
                f"key grid_points: need >= 2, got {self.grid_points}")
        if self.N < 1:
            raise ConfigError(f"key N: need N >= 1, got {self.N}")
        if self.c_w < 0:
            raise ConfigError(f"key c_w: need c_w >= 0, got {self.c_w}")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("keys n_train/n_test: need at least 1 control")
        if self.ridge_lambda < 0:
            raise ConfigError(
                f"key ridge_lambda: need >= 0, got {self.ridge_lambda}")
        n = signature_dimension(self.m + 1, self.N)
        for r in self.r_list:
            if not 1 <= r <= n:
                raise ConfigError(
                    f"key r_list: order {r} outside [1, {n}]")
        for k in self.k_values:
            if k < 1:
                raise ConfigError(f"key k_values: need k >= 1, got {k}")
        return self

    @property
    def sig_dim(self) -> int:
        return signature_dimension(self.m + 1, self.N)

    def grid(self) -> np.ndarray:
        return uniform_grid(self.T, self.grid_points)


_INT_KEYS = {"d", "m", "grid_points", "N", "n_train", "n_test", "seed"}
_FLOAT_KEYS = {"T", "c_w", "ridge_lambda"}
_LIST_KEYS = {"r_list", "k_values"}
_STR_KEYS = {"out_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _LIST_KEYS | _STR_KEYS


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return [int(tok) for tok in raw.split(",") if tok.strip() != ""]
        return raw
    except ValueError as exc:
        raise ConfigError(f"key {key}: cannot parse value {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config(path=None, env=None, full_scale: bool = False) -> ExperimentConfig:
    """defaults -> config file -> SIGMOR_* environment -> full-scale preset."""
    cfg = ExperimentConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        cfg = replace(cfg, **parse_config_text(text))
    env = os.environ if env is None else env
    overrides = {}
    for f in fields(ExperimentConfig):
        raw = env.get(ENV_PREFIX + f.name.upper())
        if raw is not None:
            overrides[f.name] = _parse_value(f.name, raw)
    if overrides:
        cfg = replace(cfg, **overrides)
    if full_scale:
        cfg = replace(cfg, **_FULL_SCALE_PRESET)
    return cfg.validate()


def _test_family(cfg: ExperimentConfig, grid):
    return [test_control(k, grid) for k in range(1, cfg.n_test + 1)]


def _training_family(cfg: ExperimentConfig, grid, lo: int, hi: int):
    return [training_control((cfg.seed, k), cfg.c_w, grid, cfg.m)
            for k in range(lo, hi)]


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list:
    """Truth output trajectories for the configured test indices."""
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.k_values:
        return []
    truth = make_reaction_diffusion(cfg.d)
    grid = cfg.grid()
    controls = [test_control(k, grid) for k in cfg.k_values]
    outputs = truth_output_batch(truth, controls, threads=threads)
    paths = []
    for k, traj in zip(cfg.k_values, outputs):
        path = out / f"output_k{k:04d}.csv"
        write_trajectory_csv(traj, path, value_prefix="y")
        paths.append(path)
    return paths


def cmd_learn(cfg: ExperimentConfig, out: Path, threads: int = 1):
    """Fit the output matrix from white-noise training data and store it."""
    out.mkdir(parents=True, exist_ok=True)
    truth = make_reaction_diffusion(cfg.d)
    grid = cfg.grid()
    sig_sys = signature_system(cfg.m + 1, cfg.N)
    acc = LstsqAccumulator(cfg.sig_dim, truth.p)
    for lo in range(0, cfg.n_train, _LEARN_BLOCK):
        hi = min(lo + _LEARN_BLOCK, cfg.n_train)
        controls = _training_family(cfg, grid, lo, hi)
        chunk = max(1, (hi - lo + threads - 1) // threads)
        targets = truth_output_batch(truth, controls, chunk_size=chunk,
                                     threads=threads)
        states = bilinear_state_batch(sig_sys, controls, chunk_size=chunk,
                                      threads=threads)
        features = np.concatenate(
            [states[:, :, k] for k in range(hi - lo)], axis=0)
        target_rows = np.concatenate([t.values for t in targets], axis=0)
        acc.add(features, target_rows)
    fit = acc.solve(cfg.ridge_lambda)
    write_c_matrix_csv(fit.C, cfg.N, cfg.m, out / "C_matrix.csv")
    with open(out / "learn_report.csv", "w") as fh:
        fh.write("key,value\n")
        fh.write(f"rows,{fit.rows}\n")
        fh.write(f"n,{cfg.sig_dim}\n")
        fh.write(f"p,{truth.p}\n")
        fh.write(f"rank,{fit.rank}\n")
        fh.write(f"residual,{fit.residual:.17g}\n")
        fh.write(f"ridge_lambda,{cfg.ridge_lambda:.17g}\n")
    return fit


def cmd_reduce(cfg: ExperimentConfig, out: Path, c_path=None, threads: int = 1) -> list:
    """Gramians, Hankel values, and one reduced system file per order."""
    out.mkdir(parents=True, exist_ok=True)
    c_path = Path(c_path) if c_path is not None else out / "C_matrix.csv"
    C, N, m = read_c_matrix_csv(c_path)
    if (N, m) != (cfg.N, cfg.m):
        raise ConfigError(
            f"C matrix file was learned with (N={N}, m={m}) but the "
            f"configuration says (N={cfg.N}, m={cfg.m})")
    sig_sys = signature_system(m + 1, N, C=C)
    pair = gramian_series(sig_sys, N, cfg.T)
    bal = balance(pair.P, pair.Q)
    write_hankel_csv(bal.sigma, out / "hankel.csv")
    written = []
    skipped = []
    for r in cfg.r_list:
        if r > bal.effective_rank:
            skipped.append(r)
            continue
        reduced = reduce_order(sig_sys, bal, r)
        path = out / f"reduced_r{r:03d}.txt"
        save_system(reduced, path)
        written.append(path)
    if skipped:
        print(f"reduce: skipped orders beyond effective rank "
              f"{bal.effective_rank}: {skipped}", file=_sys.stderr)
    if not written:
        raise ValueError(
            f"no reduced model writable: every requested order exceeds the "
            f"effective rank {bal.effective_rank}")
    return written


def cmd_evaluate(cfg: ExperimentConfig, out: Path, c_path=None,
                 threads: int = 1) -> list:
    """Error-vs-order table over the sinusoidal test family."""
    out.mkdir(parents=True, exist_ok=True)
    c_path = Path(c_path) if c_path is not None else out / "C_matrix.csv"
    C, N, m = read_c_matrix_csv(c_path)
    sig_sys = signature_system(m + 1, N, C=C)
    truth = make_reaction_diffusion(cfg.d)
    grid = cfg.grid()
    controls = _test_family(cfg, grid)
    y_truth = truth_output_batch(truth, controls, threads=threads)
    y_sig = bilinear_output_batch(sig_sys, controls, threads=threads)
    e_sig = error_l2(y_truth, y_sig)
    rows = []
    for path in sorted(out.glob("reduced_r*.txt")):
        reduced = load_system(path)
        y_red = bilinear_output_batch(reduced, controls, threads=threads)
        report = ErrorReport(E_sig=e_sig,
                             E_MOR=error_l2(y_sig, y_red),
                             E_red_sig=error_l2(y_truth, y_red))
        assert report.E_red_sig <= report.E_sig + report.E_MOR + 1e-10
        rows.append((reduced.dim, report.E_sig, report.E_MOR, report.E_red_sig))
    if not rows:
        raise ValueError(f"no reduced_r*.txt files found in {out}")
    write_error_report_csv(rows, out / "errors.csv")
    return rows


def cmd_pipeline(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list:
    cmd_simulate(cfg, out, threads)
    cmd_learn(cfg, out, threads)
    cmd_reduce(cfg, out, threads=threads)
    return cmd_evaluate(cfg, out, threads=threads)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigmor",
        description="signature-based bilinear modelling and reduction of the "
                    "reaction-diffusion benchmark")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("simulate", "truth outputs for chosen test controls"),
                      ("learn", "fit the output matrix C"),
                      ("reduce", "Gramians, balancing, reduced systems"),
                      ("evaluate", "error-vs-order table"),
                      ("pipeline", "run simulate, learn, reduce, evaluate")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", type=str, default=None,
                       help="flat key = value configuration file")
        p.add_argument("--out", type=str, default=None,
                       help="output directory (default: config out_dir)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for simulation batches")
        p.add_argument("--full-scale", action="store_true",
                       help="d = 1000, N = 5, 1000+1000 controls")
        if name in ("reduce", "evaluate"):
            p.add_argument("--c-file", type=str, default=None,
                           help="C matrix CSV (default: <out>/C_matrix.csv)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, full_scale=args.full_scale)
        out = Path(args.out) if args.out is not None else Path(cfg.out_dir)
        threads = max(1, args.threads)
        if args.command == "simulate":
            cmd_simulate(cfg, out, threads)
        elif args.command == "learn":
            cmd_learn(cfg, out, threads)
        elif args.command == "reduce":
            cmd_reduce(cfg, out, c_path=args.c_file, threads=threads)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out, c_path=args.c_file, threads=threads)
        else:
            cmd_pipeline(cfg, out, threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2
    except (DivergenceError, NonNilpotentSystemError, OracleConvergenceError,
            np.linalg.LinAlgError, AssertionError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=_sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
