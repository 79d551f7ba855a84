"""Command-line entry points: train, eval, sweep, sample, serve.

Exit codes: 0 success, 2 configuration error, 3 runtime error. Every command
honors --seed; with single-worker training a fixed seed gives byte-identical
outputs.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, load_config
from .engine import Engine
from .evaluation import evaluate
from .model_space import ComplexityPrior
from .nets import build_net
from .training import CheckpointError, Trainer, checkpoint_save

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _die(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_run_config(path):
    try:
        return load_config(path)
    except ConfigError as e:
        _die(EXIT_CONFIG, str(e))


def _load_engine(path):
    try:
        return Engine.from_checkpoint(path)
    except FileNotFoundError:
        _die(EXIT_CONFIG, f"checkpoint: file not found: {path}")
    except CheckpointError as e:
        _die(EXIT_RUNTIME, f"checkpoint: {e}")


def read_observation(path, n_points: int) -> np.ndarray:
    """CSV with header x,y; returns the y column checked against the grid size."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"observations: file not found: {p}")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise ConfigError("observations: expected CSV header 'x,y'")
        rows = [row for row in reader if row]
    if not rows:
        raise ConfigError("observations: no data rows")
    try:
        y = np.array([float(r[1]) for r in rows], dtype=np.float64)
    except (IndexError, ValueError) as e:
        raise ConfigError(f"observations: bad row: {e}") from e
    if y.shape[0] != n_points:
        raise ConfigError(
            f"observations: expected {n_points} rows, got {y.shape[0]}"
        )
    return y


@click.group()
def main():
    """Amortized joint inference over model structures and parameters."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="overrides config seed")
@click.option("--out", "out_dir", type=click.Path(), default=".",
              help="output directory for checkpoint and loss log")
def train(config_path, seed, out_dir):
    """Train a network per the config; writes checkpoint.bin and loss.log."""
    cfg = _load_run_config(config_path)
    seed = cfg.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        net = build_net(cfg.net, cfg.task.layout, cfg.task.n_points,
                        cfg.task.C, seed=seed)
        trainer = Trainer(cfg.task, cfg.prior, net, cfg.train, seed=seed)
        ckpt = out / "checkpoint.bin"
        every = cfg.train.checkpoint_every
        with open(out / "loss.log", "w") as log:
            remaining = cfg.train.max_steps
            chunk = every if every > 0 else remaining
            while remaining > 0:
                n = min(chunk, remaining)
                trainer.run(n, loss_log=log)
                remaining -= n
                checkpoint_save(ckpt, trainer.net, trainer.ema, cfg.task,
                                trainer.step, cfg.train)
        click.echo(f"checkpoint written to {ckpt}")
    except (ValueError, RuntimeError) as e:
        _die(EXIT_RUNTIME, str(e))


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(config_path, checkpoint, seed, out_path):
    """Run the enabled metrics; writes one JSON report."""
    cfg = _load_run_config(config_path)
    engine = _load_engine(checkpoint)
    if list(engine.task.dims) != list(cfg.task.dims):
        _die(EXIT_RUNTIME,
             "checkpoint: task layout does not match the config")
    seed = cfg.seed if seed is None else seed
    try:
        reports = evaluate(engine, cfg.prior, cfg.eval_spec, seed)
    except (ValueError, RuntimeError) as e:
        _die(EXIT_RUNTIME, str(e))
    payload = json.dumps(
        [json.loads(r.to_json()) for r in reports], indent=2
    )
    if out_path:
        Path(out_path).write_text(payload + "\n")
    else:
        click.echo(payload)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--obs", "obs_path", required=True, type=click.Path())
@click.option("--lambdas", default="0.0,0.25,0.5,0.75,1.0",
              help="comma-separated lambda grid")
@click.option("--n-samples", default=256, type=int)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def sweep(config_path, checkpoint, obs_path, lambdas, n_samples, seed,
          out_path):
    """Per-lambda summary CSV: median active components, top masks, RMSE."""
    cfg = _load_run_config(config_path)
    engine = _load_engine(checkpoint)
    seed = cfg.seed if seed is None else seed
    try:
        grid = [float(v) for v in lambdas.split(",") if v.strip()]
    except ValueError as e:
        _die(EXIT_CONFIG, f"lambdas: {e}")
    if not grid:
        _die(EXIT_CONFIG, "lambdas: empty grid")
    for lam in grid:
        if not 0.0 <= lam <= 1.0:
            _die(EXIT_CONFIG, f"lambdas: {lam} outside [0, 1]")
    try:
        x_o = read_observation(obs_path, engine.task.n_points)
    except ConfigError as e:
        _die(EXIT_CONFIG, str(e))
    rows = []
    try:
        for i, lam in enumerate(grid):
            mp = engine.model_posterior(x_o, lam, n_samples, seed=seed + i)
            masks = [tuple(m) for m in mp["masks"]]
            uniq, counts = np.unique(masks, axis=0, return_counts=True)
            order = np.argsort(-counts)[:3]
            top = ";".join(
                "".join(str(int(b)) for b in uniq[j]) for j in order
            )
            pr = engine.predictive(x_o, lam, "global",
                                   min(n_samples, 128), seed=seed + i)
            curves = np.asarray(pr["curves"])
            rmse = float(np.sqrt(((curves - x_o) ** 2).mean()))
            rows.append([lam, mp["median_active"], top, rmse])
    except (ValueError, RuntimeError) as e:
        _die(EXIT_RUNTIME, str(e))
    out_lines = [["lambda", "median_active", "top_masks", "predictive_rmse"]]
    out_lines += [[f"{r[0]:g}", str(r[1]), r[2], f"{r[3]:.6g}"] for r in rows]
    text = "\n".join(",".join(r) for r in out_lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--obs", "obs_path", required=True, type=click.Path())
@click.option("--lam", "--lambda", "lam", default=0.5, type=float)
@click.option("--n", "n_samples", default=16, type=int)
@click.option("--mode", type=click.Choice(["global", "local"]),
              default="global")
@click.option("--mask", "mask_str", default=None,
              help="0/1 string, required for local mode")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), default=None)
def sample(checkpoint, obs_path, lam, n_samples, mode, mask_str, seed,
           out_path):
    """Joint posterior draws with rendered equation strings (JSON)."""
    engine = _load_engine(checkpoint)
    try:
        x_o = read_observation(obs_path, engine.task.n_points)
    except ConfigError as e:
        _die(EXIT_CONFIG, str(e))
    bits = None
    if mode == "local":
        if mask_str is None:
            _die(EXIT_CONFIG, "mask: required for local mode")
        if set(mask_str) - {"0", "1"} or len(mask_str) != engine.task.C:
            _die(EXIT_CONFIG,
                 f"mask: expected {engine.task.C} characters of 0/1")
        bits = np.array([int(c) for c in mask_str], dtype=np.int8)
    try:
        records = engine.sample_records(x_o, lam, n_samples, mode=mode,
                                        bits=bits, seed=seed)
    except (ValueError, RuntimeError) as e:
        _die(EXIT_RUNTIME, str(e))
    payload = json.dumps({"lambda": lam, "mode": mode, "records": records},
                         indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n")
    else:
        click.echo(payload)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--bind", default="127.0.0.1:8000")
@click.option("--seed", type=int, default=None,
              help="server RNG seed for requests without one")
def serve(checkpoint, bind, seed):
    """Serve the HTTP inference API over the checkpoint."""
    import uvicorn

    from .service import create_app

    engine = _load_engine(checkpoint)
    app = create_app(engine, seed=seed)
    try:
        host, port = bind.rsplit(":", 1)
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    except ValueError as e:
        _die(EXIT_CONFIG, f"bind: {e}")


if __name__ == "__main__":
    main()
