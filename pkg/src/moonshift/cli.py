"""Command-line front end: train, grid, boundary, and selftest workflows.

Configuration comes from an optional flat key-value file (``section.key =
value`` lines, ``#`` comments) overridden by CLI flags; the fully resolved
config is echoed into every result file, so re-running from that echo
reproduces the result.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError
from .model import Checkpoint, MlpSpec, forward, init_mlp, model_from_checkpoint
from .objective import MmdConfig, bce_loss, mmd_squared, paired_mse
from .rng import make_rng
from .tensor import Tape, Tensor, check_gradients, reduce_mean
from .trainer import (
    TrainConfig,
    export_boundary,
    grid_search,
    train_run,
    write_boundary_csv,
    write_report,
)

# flag -> flat config key; every key is also settable via --set key=value
FLAG_KEYS = {
    "seed": "run.seed",
    "epochs": "run.epochs",
    "batch": "run.batch_size",
    "da": "da.method",
    "lam": "da.lambda",
    "da_batch": "da.n",
    "tap": "da.tap",
    "lr": "optim.lr",
    "scheduler": "sched.kind",
}

# the complete public flag surface; tests assert parity with the parser
DOCUMENTED_FLAGS = {
    "train": ["--config", "--out", "--seed", "--da", "--lambda", "--da-batch",
              "--tap", "--epochs", "--batch", "--lr", "--scheduler", "--mixup",
              "--set", "--verbose"],
    "grid": ["--config", "--out", "--seed", "--da", "--lambda", "--da-batch",
             "--tap", "--epochs", "--batch", "--lr", "--scheduler", "--mixup",
             "--set", "--verbose", "--lambdas", "--ns", "--seeds-per-cell",
             "--jobs", "--no-baseline"],
    "boundary": ["--model", "--bounds", "--resolution", "--out"],
    "selftest": ["--verbose"],
}


class _CliParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so we control exit codes."""

    def error(self, message):
        raise ConfigError([message])


def build_parser() -> argparse.ArgumentParser:
    epilog = (
        "config file keys (all overridable via --set key=value):\n  "
        + "\n  ".join(sorted(TrainConfig().to_flat()))
    )
    parser = _CliParser(
        prog="moonshift",
        description="Domain-adaptation experiments on the two-moons task.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key-value config file")
        p.add_argument("--out", help="output directory (default runs/<timestamp>-seed<seed>)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--da", choices=["none", "mse", "mmd"], help="DA method")
        p.add_argument("--lambda", dest="lam", type=float, help="DA loss weight")
        p.add_argument("--da-batch", dest="da_batch", type=int, help="DA batch size n")
        p.add_argument("--tap", help="tap layer for the DA loss (e.g. output, hidden_0)")
        p.add_argument("--epochs", type=int, help="training epochs")
        p.add_argument("--batch", type=int, help="classification batch size")
        p.add_argument("--lr", type=float, help="Adam learning rate")
        p.add_argument("--scheduler", choices=["constant", "plateau"], help="lr schedule")
        p.add_argument("--mixup", action="store_true", help="enable MixUp augmentation")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="set any config key (repeatable)",
        )
        p.add_argument("-v", "--verbose", action="store_true", help="per-epoch progress")

    p_train = sub.add_parser("train", help="run one training configuration")
    add_common(p_train)

    p_grid = sub.add_parser("grid", help="grid search over lambda and n")
    add_common(p_grid)
    p_grid.add_argument("--lambdas", default="0.1,1,5,10",
                        help="comma-separated DA weights")
    p_grid.add_argument("--ns", default="8,32,128,256",
                        help="comma-separated DA batch sizes")
    p_grid.add_argument("--seeds-per-cell", dest="seeds_per_cell", type=int, default=1)
    p_grid.add_argument("--jobs", type=int, default=_default_jobs(),
                        help="parallel worker processes")
    p_grid.add_argument("--no-baseline", action="store_true",
                        help="skip the no-DA baseline runs")

    p_boundary = sub.add_parser("boundary", help="export decision scores on a lattice")
    p_boundary.add_argument("--model", required=True,
                            help="checkpoint JSON or a result.json to pull the best model from")
    p_boundary.add_argument("--bounds", default="-1.25,1.25,-1.25,1.25",
                            help="xmin,xmax,ymin,ymax")
    p_boundary.add_argument("--resolution", type=int, default=200)
    p_boundary.add_argument("--out", help="output CSV path (default boundary.csv)")

    p_selftest = sub.add_parser(
        "selftest", help="run gradient checks and oracle equivalences"
    )
    p_selftest.add_argument("-v", "--verbose", action="store_true")

    return parser


def _default_jobs() -> int:
    import os

    return os.cpu_count() or 1


def load_config(path: str | None, overrides: dict[str, str]) -> TrainConfig:
    """File values first, overrides second, then full validation."""
    values: dict[str, str] = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError([f"config file not found: {file_path}"])
        values.update(parse_flat_text(file_path.read_text(), source=str(file_path)))
    values.update(overrides)
    cfg = TrainConfig.from_flat(values)
    cfg.validate()
    return cfg


def parse_flat_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``section.key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    problems: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'section.key = value', got {raw!r}")
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    if problems:
        raise ConfigError(problems)
    return values


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "mixup", False):
        overrides["mixup.enabled"] = "true"
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_out_dir(args: argparse.Namespace, cfg: TrainConfig) -> Path:
    if args.out:
        return Path(args.out)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{stamp}-seed{cfg.seed}"


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError([f"{flag} expects comma-separated numbers, got {text!r}"])
    if not values:
        raise ConfigError([f"{flag} must not be empty"])
    return values


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "grid":
            return _cmd_grid(args)
        if args.command == "boundary":
            return _cmd_boundary(args)
        return _cmd_selftest(args)
    except ConfigError as err:
        for problem in err.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except (DivergenceError, DomainError) as err:
        print(f"aborted: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2


def _cmd_train(args) -> int:
    cfg = load_config(args.config, _collect_overrides(args))
    out_dir = _resolve_out_dir(args, cfg)
    on_epoch = _progress_printer() if args.verbose else None
    result = train_run(cfg, on_epoch=on_epoch)
    paths = write_report(result, out_dir)
    print(f"best target accuracy {result.best_target_acc:.4f} "
          f"(epoch {result.best_target_epoch}), "
          f"best source accuracy {result.best_source_acc:.4f}")
    print(f"wrote {paths['result']}")
    return 0


def _cmd_grid(args) -> int:
    cfg = load_config(args.config, _collect_overrides(args))
    if cfg.da.method == "none":
        raise ConfigError(
            ["grid needs a DA method; pass --da mse or --da mmd (baseline runs are included)"]
        )
    lambdas = _parse_float_list(args.lambdas, "--lambdas")
    ns = [int(n) for n in _parse_float_list(args.ns, "--ns")]
    out_dir = _resolve_out_dir(args, cfg)
    on_cell = None
    if args.verbose:
        def on_cell(cell):
            print(f"cell lambda={cell.lam} n={cell.n}: median={cell.median}")
    report = grid_search(
        cfg,
        lambdas,
        ns,
        seeds_per_cell=args.seeds_per_cell,
        jobs=max(1, args.jobs),
        include_baseline=not args.no_baseline,
        on_cell=on_cell,
    )
    paths = write_report(report, out_dir)
    if report.baseline is not None:
        print(f"baseline (no DA): {report.baseline:.4f}")
    print(f"wrote {paths['grid']} and {paths['grid_csv']}")
    return 0


def _cmd_boundary(args) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise ConfigError([f"model file not found: {model_path}"])
    doc = json.loads(model_path.read_text())
    if doc.get("kind") == "train_result":
        ckpt_doc = doc["best_model"]
    elif "weights" in doc:
        ckpt_doc = doc
    else:
        raise ConfigError([f"{model_path} is neither a checkpoint nor a result.json"])
    model = model_from_checkpoint(Checkpoint.from_doc(ckpt_doc))
    bounds = _parse_float_list(args.bounds, "--bounds")
    if len(bounds) != 4:
        raise ConfigError([f"--bounds expects xmin,xmax,ymin,ymax, got {args.bounds!r}"])
    grid = export_boundary(model, tuple(bounds), args.resolution)
    out = Path(args.out) if args.out else Path("boundary.csv")
    write_boundary_csv(grid, out)
    print(f"wrote {out} ({grid.shape[0]} points)")
    return 0


def _progress_printer():
    def on_epoch(epoch, src, tgt, lr):
        print(f"epoch {epoch}: source {src:.4f} target {tgt:.4f} lr {lr:g}")

    return on_epoch


# --- selftest ---------------------------------------------------------------


def _selftest_checks() -> list[tuple[str, bool, str]]:
    """(name, passed, detail) for each gradient/oracle check."""
    checks: list[tuple[str, bool, str]] = []
    rng = make_rng(20240)
    model = init_mlp(MlpSpec(seed=7))

    def bce_of_input(x):
        out = forward(model, x).output
        return bce_loss(out, np.ones(x.rows))

    x = Tensor(rng.normal(size=(4, 2)))
    err = check_gradients(bce_of_input, x)
    checks.append(("gradient bce(mlp(x)) vs finite differences", err < 1e-4, f"max rel err {err:.2e}"))

    phi_t = Tensor(rng.normal(size=(5, 3)))

    def mse_of(x):
        return paired_mse(x, phi_t)

    err = check_gradients(mse_of, Tensor(rng.normal(size=(5, 3))))
    checks.append(("gradient paired_mse vs finite differences", err < 1e-4, f"max rel err {err:.2e}"))

    cfg = MmdConfig()

    def mmd_of(x):
        return mmd_squared(x, phi_t, cfg)

    err = check_gradients(mmd_of, Tensor(rng.normal(size=(4, 3))))
    checks.append(("gradient mmd_squared vs finite differences", err < 1e-4, f"max rel err {err:.2e}"))

    worst = 0.0
    for _ in range(20):
        n, m, d = rng.integers(1, 9, size=3)
        s = rng.normal(size=(int(n), int(d)))
        t = rng.normal(size=(int(m), int(d)))
        fast = mmd_squared(Tensor(s), Tensor(t), cfg).item()
        slow = _mmd_double_loop(s, t, cfg)
        worst = max(worst, abs(fast - slow))
    checks.append(("mmd vectorized vs double-loop oracle", worst < 1e-10, f"max abs diff {worst:.2e}"))

    with Tape() as tape:
        loss = reduce_mean(Tensor([[1.0, 2.0, 3.0, 4.0]]))
    tape.backward(loss)
    ok = bool(np.allclose(loss.grad, 1.0))
    checks.append(("backward seeds with unit gradient", ok, ""))
    return checks


def _mmd_double_loop(s: np.ndarray, t: np.ndarray, cfg: MmdConfig) -> float:
    """Literal four-sum definition of the biased multi-kernel estimate."""

    def k(a, b, sigma):
        return float(np.exp(-((a - b) ** 2).sum() / (2.0 * sigma * sigma)))

    total = 0.0
    n, m = s.shape[0], t.shape[0]
    for sigma, w in zip(cfg.sigmas, cfg.weights):
        ss = sum(k(s[i], s[j], sigma) for i in range(n) for j in range(n)) / (n * n)
        tt = sum(k(t[i], t[j], sigma) for i in range(m) for j in range(m)) / (m * m)
        st = sum(k(s[i], t[j], sigma) for i in range(n) for j in range(m)) / (n * m)
        total += w * (ss + tt - 2.0 * st)
    return total


def _cmd_selftest(args) -> int:
    checks = _selftest_checks()
    failed = 0
    for name, passed, detail in checks:
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail and (args.verbose or not passed) else ""
        print(f"{status} {name}{suffix}")
        if not passed:
            failed += 1
    if failed:
        print(f"{failed} of {len(checks)} checks failed", file=sys.stderr)
        return 2
    print(f"all {len(checks)} checks passed")
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
