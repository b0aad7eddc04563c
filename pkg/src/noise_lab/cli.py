"""Command-line interface: ``noise-lab <command> ...``.

Commands
--------
validate       check a space JSON file
decompose      Efron–Stein components (JSON) and level weights (CSV)
noise-curve    exact sensitivity curves on a t grid (CSV)
mc-noise       Monte-Carlo estimate of ((1 - U_t) X, X)
tower-check    semigroup/generator forms along a refinement tower (CSV)
walk           ±1 walk on Z_p: exact vs closed-form decay table (CSV)
example-space  write a ready-made space (and random variable) to JSON

Exit codes: 0 success, 1 parse error, 2 validation error, 3 tolerance
failure, 4 state cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import data
from .config import default
from .efron_stein import decompose, level_weights
from .errors import NoiseLabError, SpaceValidationError
from .noise import check_t_grid, keep_probability, mc_noise_form, noise_quadratic_form, sensitivity_curves
from .space import FactorSpace, ProductSpace, RandomVariable, build_space, coordinate
from .towers import Tower, tower_forms
from .zp_walk import (
    build_walk_space,
    character,
    sensitivity_decay_table,
    walk_h1_basis,
    walk_tail_basis,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s %(message)s"
_SEED_LIMIT = 1 << 64


# ── Run configuration ─────────────────────────────────────────


@dataclass(frozen=True)
class RunConfig:
    """Resolved arguments of one invocation."""

    command: str
    space: Path | None = None
    rv: Path | None = None
    t_spec: str | None = None
    seed: int = 0
    samples: int = 100_000
    tower: str | None = None
    p: int = 5
    m: int = 8
    table: str | None = None
    out: Path | None = None
    levels_out: Path | None = None
    tol: float | None = None
    jobs: int = 1
    kind: str = "two-coin"
    rv_out: Path | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.seed < _SEED_LIMIT:
            raise SpaceValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def equality_tol(self) -> float:
        return self.tol if self.tol is not None else float(default("equality_rtol"))

    @property
    def progress(self) -> bool:
        return sys.stderr.isatty()

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        fields = {k: v for k, v in vars(args).items() if k in cls.__dataclass_fields__}
        return cls(**fields)


def parse_t_grid(text: str) -> np.ndarray:
    """``"0:0.1:3"`` (inclusive range), ``"0.5"`` or ``"0,0.5,2"``; strictly increasing."""
    text = text.strip()
    try:
        parts = [float(x) for x in text.split(":" if ":" in text else ",") if x.strip()]
    except ValueError:
        raise SpaceValidationError(f"cannot parse t grid '{text}'") from None
    if ":" not in text:
        return check_t_grid(parts, strict=True)
    if len(parts) != 3:
        raise SpaceValidationError(f"t range '{text}' must be start:step:stop")
    start, step, stop = parts
    if not step > 0:
        raise SpaceValidationError(f"t grid step must be positive, got {step}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    grid = start + step * np.arange(max(n, 0))
    return check_t_grid(grid, strict=True)


def parse_m_range(text: str) -> list[int]:
    """``"2..10"`` (inclusive) or ``"3,5,8"``."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            values = list(range(lo, hi + 1))
        else:
            values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise SpaceValidationError(f"cannot parse m range '{text}'") from None
    if not values:
        raise SpaceValidationError(f"empty m range '{text}'")
    return values


def _single_t(cfg: RunConfig) -> float:
    grid = parse_t_grid(cfg.t_spec or "")
    if grid.size != 1:
        raise SpaceValidationError(f"expected a single time, got '{cfg.t_spec}'")
    return float(grid[0])


def _require(value: object, flag: str) -> None:
    if value is None:
        raise SpaceValidationError(f"{flag} is required")


def _load_inputs(cfg: RunConfig) -> tuple[ProductSpace, RandomVariable]:
    _require(cfg.space, "--space")
    _require(cfg.rv, "--rv")
    space = data.load_space(cfg.space)
    return space, data.load_rv(cfg.rv, space)


def _meta(
    cfg: RunConfig, space: ProductSpace, tolerances: dict[str, float] | None = None, **extra
) -> dict:
    """Output header: every file records the space hash, the seed and the tolerances in force."""
    tols = {"equality": cfg.equality_tol, **(tolerances or {})}
    return data.metadata(space=space, seed=cfg.seed, tolerances=tols, **extra)


def _report(cfg: RunConfig, line: str) -> None:
    """Human-readable lines go to stderr when the CSV itself is on stdout."""
    print(line, file=sys.stderr if cfg.out is None else sys.stdout)


def _write_csv(cfg: RunConfig, frame: pd.DataFrame, meta: dict) -> None:
    if cfg.out is None:
        sys.stdout.write(data.dump_csv(frame, meta))
    else:
        data.write_csv(cfg.out, frame, meta)
        print(f"wrote {cfg.out}")


# ── Commands ──────────────────────────────────────────────────


def cmd_validate(cfg: RunConfig) -> int:
    _require(cfg.space, "--space")
    space = data.load_space(cfg.space)
    print(f"PASS  {cfg.space}  m={space.m} states={space.total_states} hash={data.space_hash(space)[:12]}")
    if cfg.rv is not None:
        X = data.load_rv(cfg.rv, space)
        print(f"PASS  {cfg.rv}  ||X||={math.sqrt(float(level_weights(X).sum())):.17g}")
    return 0


def cmd_decompose(cfg: RunConfig) -> int:
    space, X = _load_inputs(cfg)
    _require(cfg.out, "--out")
    tol = cfg.equality_tol
    dec = decompose(X)
    components = {A.to_hex(): data.complex_pairs(c.values) for A, c in dec.nonzero(tol).items()}
    meta = _meta(cfg, space, {"component_norm": tol})
    data.write_json(cfg.out, {"components": components}, meta)

    weights = level_weights(X)
    frame = pd.DataFrame({"level": np.arange(len(weights)), "weight": weights})
    levels_out = cfg.levels_out or cfg.out.with_suffix(".levels.csv")
    data.write_csv(levels_out, frame, meta)
    print(f"wrote {cfg.out} ({len(components)} components) and {levels_out}")
    return 0


def cmd_noise_curve(cfg: RunConfig) -> int:
    space, X = _load_inputs(cfg)
    _require(cfg.t_spec, "--t")
    grid = parse_t_grid(cfg.t_spec)
    curve = sensitivity_curves(X, grid)
    _write_csv(cfg, curve.to_frame(), _meta(cfg, space, t_grid=cfg.t_spec))
    return 0


def cmd_mc_noise(cfg: RunConfig) -> int:
    space, X = _load_inputs(cfg)
    _require(cfg.t_spec, "--t")
    t = _single_t(cfg)
    est = mc_noise_form(X, t, cfg.samples, cfg.seed, n_jobs=cfg.jobs)
    result: dict = {
        "t": t,
        "keep_probability": keep_probability(t),
        "samples": est.n_samples,
        "estimate": est.estimate,
        "stderr": est.stderr,
    }
    if space.m <= int(default("averaging_max_m")):
        result["exact"] = noise_quadratic_form(X, t)

    print(f"estimate  {est.estimate:.17g}")
    print(f"stderr    {est.stderr:.17g}")
    if "exact" in result:
        print(f"exact     {result['exact']:.17g}")
    if cfg.out is not None:
        data.write_json(cfg.out, result, _meta(cfg, space))
        print(f"wrote {cfg.out}")
    return 0


def cmd_tower_check(cfg: RunConfig) -> int:
    space, X = _load_inputs(cfg)
    _require(cfg.tower, "--tower")
    _require(cfg.t_spec, "--t")
    t = _single_t(cfg)
    tower = Tower.parse(cfg.tower, m=space.m)
    tol = cfg.equality_tol
    frame = tower_forms(X, tower, t, tol=tol, progress=cfg.progress)
    meta = _meta(cfg, space, {"monotone": tol}, t=t, tower=cfg.tower)
    _write_csv(cfg, frame, meta)
    _report(cfg, f"PASS  monotone over {len(tower)} stages")
    return 0


def cmd_walk(cfg: RunConfig) -> int:
    _require(cfg.t_spec, "--t")
    t = _single_t(cfg)
    m_range = parse_m_range(cfg.table) if cfg.table else list(range(1, cfg.m + 1))
    tol = cfg.equality_tol
    frame = sensitivity_decay_table(cfg.p, t, m_range, tol=tol, progress=cfg.progress)

    ws = build_walk_space(cfg.p, max(m_range))
    _report(cfg, f"H1 increments: {len(walk_h1_basis(ws))}")
    _report(cfg, f"H1 tail functions (truncation only): {len(walk_tail_basis(ws))}")
    # the hash is that of the largest truncation in the table
    meta = _meta(cfg, ws.space, {"closed_form": tol}, p=cfg.p, m=ws.m, t=t)
    _write_csv(cfg, frame, meta)
    return 0


def _two_coin_space() -> ProductSpace:
    coin = FactorSpace((-1, 1), np.array([0.5, 0.5]))
    return build_space([coin, coin])


def cmd_example_space(cfg: RunConfig) -> int:
    """Two fair ±1 coins with ``X = x_0 x_1``, or the walk with its character."""
    _require(cfg.out, "--out")
    if cfg.kind == "two-coin":
        space = _two_coin_space()
        X = coordinate(space, 0) * coordinate(space, 1)
    elif cfg.kind == "walk":
        ws = build_walk_space(cfg.p, cfg.m)
        space, X = ws.space, character(ws)
    else:
        raise SpaceValidationError(f"unknown example '{cfg.kind}'")
    meta = _meta(cfg, space, kind=cfg.kind)
    data.write_json(cfg.out, space.to_dict(), meta)
    print(f"wrote {cfg.out}")
    if cfg.rv_out is not None:
        data.write_json(cfg.rv_out, data.rv_to_dict(X), meta)
        print(f"wrote {cfg.rv_out}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "decompose": cmd_decompose,
    "noise-curve": cmd_noise_curve,
    "mc-noise": cmd_mc_noise,
    "tower-check": cmd_tower_check,
    "walk": cmd_walk,
    "example-space": cmd_example_space,
}


# ── Parser ────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noise-lab",
        description=(
            "Noise stability and sensitivity on finite product spaces. "
            "The state cap can be overridden with the NOISE_LAB_MAX_STATES environment variable."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, description=help_text)

    def space_rv(p: argparse.ArgumentParser, rv_required: bool = True) -> None:
        p.add_argument("--space", type=Path, required=True, metavar="PATH", help="Space JSON file.")
        p.add_argument(
            "--rv", type=Path, required=rv_required, metavar="PATH", help="Random-variable JSON file."
        )

    def out(p: argparse.ArgumentParser, required: bool = False) -> None:
        p.add_argument(
            "--out", type=Path, required=required, metavar="PATH",
            help="Output file" + ("." if required else " (default: stdout)."),
        )

    def tol(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--tol", type=float, default=None, metavar="EPS",
            help=f"Equality tolerance (default: {default('equality_rtol')}).",
        )

    p = add("validate", "Validate a space file (and optionally a random variable on it).")
    space_rv(p, rv_required=False)

    p = add("decompose", "Efron–Stein components as JSON plus a level-weight CSV.")
    space_rv(p)
    out(p, required=True)
    p.add_argument(
        "--levels-out", dest="levels_out", type=Path, default=None, metavar="PATH",
        help="Level-weight CSV (default: <out>.levels.csv).",
    )
    tol(p)

    p = add("noise-curve", "Exact ||X - U_t X||, ||X|| - ||U_t X|| and ((1-U_t)X, X) on a t grid.")
    space_rv(p)
    p.add_argument(
        "--t", dest="t_spec", required=True, metavar="GRID",
        help='Times: "start:step:stop" (inclusive), a single value or a comma list.',
    )
    out(p)

    p = add("mc-noise", "Monte-Carlo estimate of ((1-U_t)X, X) by resampling.")
    space_rv(p)
    p.add_argument("--t", dest="t_spec", required=True, metavar="T", help="Noise time t >= 0.")
    p.add_argument("--samples", type=int, default=100_000, metavar="N", help="Sample count (default: 100000).")
    p.add_argument("--seed", type=int, default=0, metavar="S", help="64-bit unsigned seed (default: 0).")
    p.add_argument("--jobs", type=int, default=1, metavar="J", help="Parallel workers (default: 1).")
    out(p)

    p = add("tower-check", "Semigroup and generator forms along a refinement tower.")
    space_rv(p)
    p.add_argument(
        "--tower", required=True, metavar="SPEC",
        help='Stages separated by ";", blocks by "|", factors by ",", e.g. "0,1|2;0|1|2".',
    )
    p.add_argument("--t", dest="t_spec", required=True, metavar="T", help="Noise time t >= 0.")
    out(p)
    tol(p)

    p = add("walk", "±1 walk on Z_p: exact vs closed-form ||U_t chi|| per truncation.")
    p.add_argument("--p", type=int, default=5, metavar="P", help="Odd modulus >= 3 (default: 5).")
    p.add_argument("--m", type=int, default=8, metavar="M", help="Truncation when --table is absent: rows 1..M.")
    p.add_argument("--t", dest="t_spec", required=True, metavar="T", help="Noise time t >= 0.")
    p.add_argument("--table", default=None, metavar="RANGE", help='Truncations, e.g. "2..10" or "3,5,8".')
    out(p)
    tol(p)

    p = add("example-space", "Write the two-coin or walk space (and a random variable) to JSON.")
    p.add_argument("--kind", choices=["two-coin", "walk"], default="two-coin")
    p.add_argument("--p", type=int, default=5, metavar="P")
    p.add_argument("--m", type=int, default=4, metavar="M")
    out(p, required=True)
    p.add_argument("--rv-out", dest="rv_out", type=Path, default=None, metavar="PATH")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format=LOG_FORMAT,
    )
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[cfg.command](cfg)
    except NoiseLabError as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
