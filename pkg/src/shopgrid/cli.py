"""Command-line surface.

Subcommands: extract, fit-gravity, train, evaluate, predict, synth,
export-heatmap. A single JSON configuration file carries the grid,
pattern counts, hyperparameters, input paths, output directory, and seed;
command-line flags override config keys. Exit codes: 0 success, 1 usage,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import evaluate as ev
from . import io as sio
from .errors import InputError, NumericalError, ShopgridError
from .factorize import (
    VARIANTS,
    Hyperparams,
    RegularizerSpec,
    neighbor_weights,
    predict,
    train,
)
from .gravity import MODES, build_flows, combined_weights, fit_gravity, interaction_matrix
from .grid import GeoPoint, RegionGrid, center_distance
from .patterns import (
    MobilityPatternMatrix,
    ShoppingPatternMatrix,
    activity_shares,
    aggregate_mobility,
    aggregate_shopping,
    build_count_matrix,
    nmf,
    top_categories,
)
from .seeding import (
    STREAM_MOBILITY_NMF,
    STREAM_SHOPPING_NMF,
    STREAM_TRAIN,
    child_seed,
)
from .synth import MODES as SYNTH_MODES
from .synth import GravityTruth, SynthConfig, generate, generate_events

OUTPUT_DIR_ENV = "SHOPGRID_OUTPUT_DIR"

_VARIANT_TOKENS = {"mf": "MF", "cmf": "CMF", "cmf-n": "CMF+N", "cmf-i": "CMF+I"}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    """Bad command line or inconsistent configuration (exit code 1)."""


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; see README for the JSON schema."""

    grid: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=lambda: {"n": 30, "m": 40})
    hyperparams: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    output_dir: str = "out"
    seed: int | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def build_grid(self) -> RegionGrid:
        g = dict(self.grid)
        try:
            return RegionGrid(
                mode=g.get("mode", "planar"),
                origin=GeoPoint(float(g.get("origin_lat", 0.0)),
                                float(g.get("origin_lon", 0.0))),
                cell_size_km=float(g.get("cell_size_km", 1.0)),
                n_rows=int(g["n_rows"]),
                n_cols=int(g["n_cols"]),
            )
        except KeyError as exc:
            raise InputError(f"grid config missing key {exc.args[0]!r}") from exc

    def build_hyperparams(self, seed: int) -> Hyperparams:
        hp = dict(self.hyperparams)
        unknown = set(hp) - {"l", "lambda1", "lambda2", "alpha", "max_iters", "epsilon"}
        if unknown:
            raise InputError(f"unknown hyperparams keys: {sorted(unknown)}")
        return Hyperparams(seed=seed, **hp)

    def input_path(self, kind: str) -> str:
        path = self.inputs.get(kind)
        if not path:
            raise InputError(f"config has no inputs.{kind} path")
        return path


def load_config(path: str | None, overrides: dict) -> RunConfig:
    doc = sio._load_json(path) if path else {}
    cfg = RunConfig.from_dict(doc)
    if overrides.get("output_dir"):
        cfg = replace(cfg, output_dir=overrides["output_dir"])
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        cfg = replace(cfg, output_dir=env_dir)
    if overrides.get("seed") is not None:
        cfg = replace(cfg, seed=overrides["seed"])
    return cfg


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _resolve_variant(token: str) -> str:
    name = _VARIANT_TOKENS.get(token.strip().lower())
    if name is None:
        raise UsageError(
            f"unknown variant {token!r}; expected one of {', '.join(_VARIANT_TOKENS)}"
        )
    return name


def _require_seed(cfg: RunConfig, args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    return args.seed


# ----------------------------------------------------------------- commands

def cmd_extract(cfg: RunConfig, args) -> int:
    grid = cfg.build_grid()
    seed = cfg.seed if args.seed is None else args.seed
    if seed is None:
        raise UsageError("a seed is required (config key 'seed' or --seed)")
    n = int(cfg.patterns.get("n", 30))
    m = int(cfg.patterns.get("m", 40))

    browsing = sio.read_browsing(cfg.input_path("browsing"))
    towers = sio.read_towers(cfg.input_path("towers"))
    checkins = sio.read_checkins(cfg.input_path("checkins"))

    n_cat_s = max((r.product_category_id for r in browsing), default=-1) + 1
    counts_s = build_count_matrix(
        [(r.location_id, r.product_category_id) for r in browsing], max(n_cat_s, 1))
    P_s, C_s = nmf(counts_s.values, n, seed=child_seed(seed, STREAM_SHOPPING_NMF))
    shopping = aggregate_shopping(C_s, counts_s.row_keys, towers, grid)

    n_cat_m = max((r.poi_category_id for r in checkins), default=-1) + 1
    counts_m = build_count_matrix(
        [(r.user_id, r.poi_category_id) for r in checkins], max(n_cat_m, 1))
    P_m, C_m = nmf(counts_m.values, m, seed=child_seed(seed, STREAM_MOBILITY_NMF))
    shares = activity_shares(checkins, grid)
    index = {key: i for i, key in enumerate(counts_m.row_keys)}
    U = C_m[[index[u] for u in shares.user_ids]] if shares.user_ids else C_m[:0]
    mobility = aggregate_mobility(shares, U)

    sio.write_matrix(_out(cfg, "P_s.csv"), P_s, col_prefix="cat")
    sio.write_matrix(_out(cfg, "P_m.csv"), P_m, col_prefix="cat")
    sio.write_matrix(_out(cfg, "R_s.csv"), shopping.values, col_prefix="p")
    sio.write_matrix(_out(cfg, "R_s_mask.csv"), shopping.mask, col_prefix="p")
    sio.write_matrix(_out(cfg, "R_m.csv"), mobility.values, col_prefix="p")
    for name, P in (("shopping", P_s), ("mobility", P_m)):
        with sio.atomic_write(_out(cfg, f"top_categories_{name}.csv")) as f:
            f.write("pattern,rank,category_id,weight\n")
            for pat in range(P.shape[0]):
                for rank, (cat, weight) in enumerate(top_categories(P, pat, args.top_k)):
                    f.write(f"{pat},{rank},{cat},{sio.FLOAT_FMT % weight}\n")
    print(f"extracted {shopping.values.shape} shopping and {mobility.values.shape} "
          f"mobility patterns to {cfg.output_dir}")
    return EXIT_OK


def cmd_fit_gravity(cfg: RunConfig, args) -> int:
    grid = cfg.build_grid()
    trips = sio.read_trips(cfg.input_path("trips"))
    dis = center_distance(grid)
    interactions = {}
    for mode in MODES:
        flows = build_flows(trips, grid, mode)
        params = fit_gravity(flows, dis, mode=mode)
        interactions[mode] = interaction_matrix(params, flows, dis)
        sio.write_gravity_params(_out(cfg, f"gravity_{mode}.json"), params)
        sio.write_matrix(_out(cfg, f"Q_{mode}.csv"), interactions[mode], col_prefix="r")
        print(f"{mode}: a={params.a:.6g} b={params.b:.6g} g={params.g:.6g} "
              f"ln_c={params.ln_c:.6g} pairs={params.n_pairs_used}")
    W = combined_weights(interactions["taxi"], interactions["bus"], grid)
    sio.write_matrix(_out(cfg, "W_combined.csv"), W, col_prefix="r")
    return EXIT_OK


def _load_training_inputs(cfg: RunConfig):
    values = sio.read_matrix(_out(cfg, "R_s.csv"))
    mask = sio.read_matrix(_out(cfg, "R_s_mask.csv"))
    mobility = sio.read_matrix(_out(cfg, "R_m.csv"))
    return ShoppingPatternMatrix(values, mask), MobilityPatternMatrix(mobility)


def _regularizer_for(variant: str, cfg: RunConfig, grid: RegionGrid) -> RegularizerSpec:
    if variant == "CMF+N":
        return RegularizerSpec("neighbor", neighbor_weights(grid))
    if variant == "CMF+I":
        return RegularizerSpec("interaction", sio.read_matrix(_out(cfg, "W_combined.csv")))
    return RegularizerSpec("none")


def cmd_train(cfg: RunConfig, args) -> int:
    seed = _require_seed(cfg, args)
    grid = cfg.build_grid()
    variant = _resolve_variant(args.variant)
    shopping, mobility = _load_training_inputs(cfg)
    reg = _regularizer_for(variant, cfg, grid)
    h = cfg.build_hyperparams(seed=child_seed(seed, STREAM_TRAIN))
    model, trace = train(shopping, mobility, reg, h, variant)
    tag = args.variant.strip().lower()
    sio.write_model(_out(cfg, f"model_{tag}.json"), model, h, trace.final_loss)
    sio.write_trace(_out(cfg, f"trace_{tag}.csv"), trace)
    print(f"trained {variant}: {len(trace)} iterations, final loss "
          f"{trace.final_loss:.6g} ({trace.stop_reason})")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    seed = _require_seed(cfg, args)
    grid = cfg.build_grid()
    variants = tuple(_resolve_variant(v) for v in args.variants.split(","))
    fractions = []
    for token in args.fractions.split(","):
        try:
            fractions.append(float(token))
        except ValueError:
            raise UsageError(f"bad fraction {token!r}") from None
    shopping, mobility = _load_training_inputs(cfg)
    regs = {v: _regularizer_for(v, cfg, grid) for v in variants}
    h = cfg.build_hyperparams(seed=0)
    report = ev.run_experiment(shopping, mobility, regs, fractions, args.repeats,
                               h, seed, variants=variants)
    sio.write_report(_out(cfg, "report.json"), report)
    table = sio.format_report_table(report)
    with sio.atomic_write(_out(cfg, "report.txt")) as f:
        f.write(table)
    print(table, end="")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    grid = cfg.build_grid()
    model, _, _ = sio.read_model(args.model)
    values = sio.read_matrix(_out(cfg, "R_s.csv"))
    mask = sio.read_matrix(_out(cfg, "R_s_mask.csv"))
    shopping = ShoppingPatternMatrix(values, mask)
    pred = predict(model)
    if pred.shape != shopping.values.shape:
        raise InputError(f"model predicts {pred.shape}, shopping matrix is "
                         f"{shopping.values.shape}")
    if shopping.values.shape[0] != grid.n_regions:
        raise InputError("shopping matrix row count does not match the grid")
    filled = np.where(shopping.mask == 1.0, shopping.values, pred)
    for j in range(filled.shape[1]):
        sio.write_heatmap(_out(cfg, f"heatmap_pattern_{j}.csv"), filled[:, j], grid)
        if args.pgm:
            sio.write_heatmap_pgm(_out(cfg, f"heatmap_pattern_{j}.pgm"), filled[:, j], grid)
    print(f"wrote {filled.shape[1]} heatmaps to {cfg.output_dir}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    if seed is None:
        raise UsageError("a seed is required (config key 'seed' or --seed)")
    grid_cfg = cfg.grid
    synth_kwargs = dict(cfg.synth)
    gravity_doc = synth_kwargs.pop("gravity", {})
    gravity = {mode: GravityTruth(**gravity_doc.get(mode, {})) for mode in SYNTH_MODES}
    n_trips = synth_kwargs.pop("n_trips", 100_000)
    if isinstance(n_trips, (int, float)):
        n_trips = {mode: n_trips for mode in SYNTH_MODES}
    scfg = SynthConfig(
        n_rows=int(grid_cfg.get("n_rows", 20)),
        n_cols=int(grid_cfg.get("n_cols", 20)),
        n=int(cfg.patterns.get("n", 30)),
        m=int(cfg.patterns.get("m", 40)),
        gravity=gravity,
        n_trips={k: int(v) for k, v in n_trips.items()},
        seed=seed,
        **synth_kwargs,
    )
    shopping, mobility, trips, grid, truth = generate(scfg)

    sio.write_matrix(_out(cfg, "R_s.csv"), shopping.values, col_prefix="p")
    sio.write_matrix(_out(cfg, "R_s_mask.csv"), shopping.mask, col_prefix="p")
    sio.write_matrix(_out(cfg, "R_m.csv"), mobility.values, col_prefix="p")
    all_trips = [t for mode in SYNTH_MODES for t in trips[mode]]
    sio.write_trips(_out(cfg, "trips.csv"), all_trips)
    truth_doc = {
        "R_l": [list(map(float, row)) for row in truth.R_l],
        "V1": [list(map(float, row)) for row in truth.V1],
        "V2": [list(map(float, row)) for row in truth.V2],
        "gravity": {
            mode: {"a": p.a, "b": p.b, "g": p.g, "ln_c": p.ln_c}
            for mode, p in truth.gravity.items()
        },
    }
    sio._dump_json(_out(cfg, "truth.json"), truth_doc)

    if args.events:
        browsing, towers, checkins = generate_events(scfg, shopping, mobility, grid)
        sio.write_browsing(_out(cfg, "browsing.csv"), browsing)
        sio.write_towers(_out(cfg, "towers.csv"), towers)
        sio.write_checkins(_out(cfg, "checkins.csv"), checkins)
    print(f"synthesized {grid.n_rows}x{grid.n_cols} city in {cfg.output_dir}")
    return EXIT_OK


def cmd_export_heatmap(cfg: RunConfig, args) -> int:
    grid = cfg.build_grid()
    matrix = sio.read_matrix(args.matrix)
    if not 0 <= args.column < matrix.shape[1]:
        raise InputError(f"column {args.column} outside [0, {matrix.shape[1]})")
    values = matrix[:, args.column]
    base = os.path.splitext(os.path.basename(args.matrix))[0]
    out = _out(cfg, f"heatmap_{base}_{args.column}.csv")
    sio.write_heatmap(out, values, grid)
    if args.pgm:
        sio.write_heatmap_pgm(_out(cfg, f"heatmap_{base}_{args.column}.pgm"), values, grid)
    print(f"wrote {out}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shopgrid",
                     description="Region-level shopping pattern prediction.")
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--output-dir", help="override the configured output directory")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("extract", parser_class=_Parser,
                       help="build pattern matrices from raw event logs")
    p.add_argument("--top-k", type=int, default=10,
                   help="categories per pattern in the top-category tables")

    sub.add_parser("fit-gravity", parser_class=_Parser,
                   help="fit the gravity model and build interaction weights")

    p = sub.add_parser("train", parser_class=_Parser, help="train one model variant")
    p.add_argument("--variant", default="cmf-i",
                   help="mf, cmf, cmf-n, or cmf-i (default cmf-i)")

    p = sub.add_parser("evaluate", parser_class=_Parser,
                       help="row-holdout comparison of model variants")
    p.add_argument("--variants", default="mf,cmf,cmf-n,cmf-i")
    p.add_argument("--fractions", default="0.8,0.9")
    p.add_argument("--repeats", type=int, default=10)

    p = sub.add_parser("predict", parser_class=_Parser,
                       help="export per-pattern heatmaps with predictions filling "
                            "unobserved regions")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--pgm", action="store_true", help="also write P2 graymaps")

    p = sub.add_parser("synth", parser_class=_Parser, help="generate a synthetic city")
    p.add_argument("--events", action="store_true",
                   help="also fabricate raw browsing/tower/check-in logs")

    p = sub.add_parser("export-heatmap", parser_class=_Parser,
                       help="export one column of a region matrix as a heatmap")
    p.add_argument("--matrix", required=True, help="matrix CSV with r rows")
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--pgm", action="store_true")
    return parser


_COMMANDS = {
    "extract": cmd_extract,
    "fit-gravity": cmd_fit_gravity,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "synth": cmd_synth,
    "export-heatmap": cmd_export_heatmap,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("shopgrid: error: a subcommand is required\n")
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, {"output_dir": args.output_dir, "seed": args.seed})
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        sys.stderr.write(f"shopgrid {args.command}: usage error: {exc}\n")
        return EXIT_USAGE
    except InputError as exc:
        sys.stderr.write(f"shopgrid {args.command}: input error: {exc}\n")
        return EXIT_INPUT
    except NumericalError as exc:
        sys.stderr.write(f"shopgrid {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except ShopgridError as exc:
        sys.stderr.write(f"shopgrid {args.command}: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
