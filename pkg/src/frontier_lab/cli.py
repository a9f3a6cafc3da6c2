"""Command-line entry points: explore, benchmark, train, score, serve.

Settings resolve in three layers: built-in defaults, then a JSON config
file (--config), then explicit command-line flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .episode import (
    EpisodeConfig,
    Episode,
    default_runs_dir,
    global_seed,
    render_episode_png,
    run_benchmark,
    sample_start,
    _timestamp,
)
from .grids import Pose, from_grayscale, generate_floorplan, load_map, _read_pgm
from .metrics import dilated_iou
from .planners import MapexPlanner, NearestFrontierPlanner, PrimitivePlanner, RandomPlanner
from .predictor import ExternalPredictor, MorphologicalInpaintPredictor, OracleLeakPredictor

DEFAULTS = {
    "seed": None,
    "budget": 500,
    "step_cells": 6,
    "iou_target": 0.95,
    "action_slots": 10,
    "window_cells": 1600,
    "min_frontier_size": 5,
    "dedup_dist_m": 5.0,
    "dedup_score": 0.01,
    "beams": 2500,
    "range_m": 20.0,
    "tau": 0.5,
    "replan_every_step": False,
    "planner": "nearest",
    "planners": ["nearest", "mapex", "random"],
    "lam": 1.0,
    "checkpoint": None,
    "ensemble": [{"kind": "inpaint", "radius": 10}],
    "start": None,
    "starts_per_map": 5,
    "out_dir": None,
    "render": False,
    "rl": {},
    "host": "127.0.0.1",
    "port": 8000,
    "pacing_ms": 30,
}

PLANNER_NAMES = ("nearest", "mapex", "random", "primitive", "rl", "human")


def settings_from(args) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as f:
            merged.update(json.load(f))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        merged[key] = value
    return merged


def episode_config(s: dict) -> EpisodeConfig:
    return EpisodeConfig(
        budget=s["budget"], step_cells=s["step_cells"],
        iou_target=s["iou_target"], action_slots=s["action_slots"],
        window_cells=s["window_cells"],
        min_frontier_size=s["min_frontier_size"],
        dedup_dist_m=s["dedup_dist_m"], dedup_score=s["dedup_score"],
        beam_count=s["beams"], range_m=s["range_m"], tau=s["tau"],
        replan_every_step=s["replan_every_step"])


def resolve_map(spec):
    """One map from either {"file": path} or generator parameters."""
    if isinstance(spec, str):
        return os.path.basename(spec), load_map(spec)
    if "file" in spec:
        return os.path.basename(spec["file"]), load_map(spec["file"])
    seed = spec["seed"]
    grid = generate_floorplan(seed, spec.get("width", 150),
                              spec.get("height", 150), spec.get("rooms", 8))
    return f"gen{seed}", grid


def resolve_maps(s: dict) -> list:
    if s.get("maps"):
        return [resolve_map(m) for m in s["maps"]]
    if s.get("map"):
        return [resolve_map(s["map"])]
    if s.get("gen_seed") is not None:
        spec = {"seed": s["gen_seed"], "width": s.get("gen_size", 150),
                "height": s.get("gen_size", 150),
                "rooms": s.get("gen_rooms", 8)}
        return [resolve_map(spec)]
    raise SystemExit("no map: pass --map, --gen-seed, or \"maps\" in the config")


def build_ensemble(specs, truth):
    members = []
    for spec in specs:
        kind = spec["kind"]
        if kind == "inpaint":
            members.append(MorphologicalInpaintPredictor(spec.get("radius", 10)))
        elif kind == "oracle":
            for member_seed in spec.get("seeds", [0, 1, 2]):
                members.append(OracleLeakPredictor(
                    truth, blur_radius=spec.get("blur", 3),
                    noise_seed=member_seed,
                    noise_amplitude=spec.get("noise", 0.1)))
        elif kind == "external":
            members.append(ExternalPredictor(spec["endpoint"],
                                             spec.get("timeout_s", 30.0)))
        else:
            raise SystemExit(f"unknown predictor kind {kind!r}")
    return members


def parse_ensemble_flag(text: str) -> list:
    """Compact forms: inpaint[:radius], oracle[:blur,noise], external:endpoint."""
    if text.startswith("external:"):
        return [{"kind": "external", "endpoint": text[len("external:"):]}]
    if text.startswith("inpaint"):
        spec = {"kind": "inpaint"}
        if ":" in text:
            spec["radius"] = int(text.split(":", 1)[1])
        return [spec]
    if text.startswith("oracle"):
        spec = {"kind": "oracle"}
        if ":" in text:
            blur, noise = text.split(":", 1)[1].split(",")
            spec.update(blur=int(blur), noise=float(noise))
        return [spec]
    raise SystemExit(f"cannot parse --ensemble {text!r}")


def planner_seed(seed_seq) -> int:
    return int(np.random.default_rng(seed_seq).integers(2**31 - 1))


def build_planner(name, s, seed_seq):
    if name == "nearest":
        return NearestFrontierPlanner()
    if name == "mapex":
        return MapexPlanner(s["lam"])
    if name == "random":
        return RandomPlanner(np.random.default_rng(seed_seq))
    if name == "primitive":
        return PrimitivePlanner(seed=planner_seed(seed_seq))
    if name == "rl":
        if not s["checkpoint"]:
            raise SystemExit("--planner rl requires --checkpoint")
        from .rl.train import SacPlanner

        return SacPlanner.from_checkpoint(s["checkpoint"])
    if name == "human":
        raise SystemExit("the human planner only runs under `serve`")
    raise SystemExit(f"unknown planner {name!r}; choose from {PLANNER_NAMES}")


def resolve_start(s, truth, seed):
    if s.get("start") is not None:
        x, y = s["start"]
        return Pose(int(x), int(y))
    return sample_start(truth, np.random.default_rng([seed, 0]))


def cmd_explore(s) -> int:
    seed = global_seed(s["seed"])
    map_id, truth = resolve_maps(s)[0]
    start = resolve_start(s, truth, seed)
    ensemble = build_ensemble(s["ensemble"], truth)
    planner = build_planner(s["planner"], s, [seed, 0, 0, 0])
    episode = Episode(truth, start, ensemble, planner, episode_config(s))
    result = episode.run()
    print(result.to_json())
    if s["render"]:
        out = os.path.join(s["out_dir"] or default_runs_dir(), _timestamp())
        os.makedirs(out, exist_ok=True)
        png = os.path.join(out, f"explore_{map_id}.png")
        render_episode_png(png, episode.state.observed, result.trajectory,
                           [start.x, start.y])
        print(f"rendered {png}", file=sys.stderr)
    return 0


def cmd_benchmark(s) -> int:
    seed = global_seed(s["seed"])
    maps = resolve_maps(s)
    names = s["planners"]
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    planners = [(name, (lambda n: lambda seq: build_planner(n, s, seq))(name))
                for name in names]
    rows, summary, run_dir = run_benchmark(
        maps, s["starts_per_map"], planners,
        lambda truth: build_ensemble(s["ensemble"], truth),
        seed=seed, config=episode_config(s), out_dir=s["out_dir"],
        render=s["render"])
    for line in summary:
        print(json.dumps(line, sort_keys=True))
    print(f"wrote {run_dir}/episodes.jsonl and summary.csv", file=sys.stderr)
    return 0


def cmd_train(s) -> int:
    from .rl.encoder import DEFAULT_ENCODER, DEFAULT_PREPROCESS, EncoderSpec, PreprocessSpec
    from .rl.sac import SacConfig
    from .rl.train import FrontierEnv, train

    seed = global_seed(s["seed"])
    maps = resolve_maps(s)
    rl = s.get("rl") or {}
    sac_cfg = SacConfig(**{k: (tuple(v) if k == "hidden" else v)
                           for k, v in rl.get("sac", {}).items()})
    enc = rl.get("encoder")
    encoder = (EncoderSpec(in_size=enc["in_size"],
                           channels=tuple(enc["channels"]),
                           kernels=tuple(enc["kernels"]),
                           strides=tuple(enc["strides"]),
                           latent=enc["latent"])
               if enc else DEFAULT_ENCODER)
    pp = rl.get("preprocess")
    preprocess = (PreprocessSpec(**pp) if pp else DEFAULT_PREPROCESS)
    env = FrontierEnv(maps, lambda truth: build_ensemble(s["ensemble"], truth),
                      config=episode_config(s), preprocess=preprocess,
                      seed=seed)
    out = s.get("checkpoint_out") or os.path.join(
        s["out_dir"] or default_runs_dir(), _timestamp(), "policy.ckpt")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    log_path = s.get("log") or os.path.join(os.path.dirname(out), "train.jsonl")

    def report(step, rec):
        print(json.dumps(rec, sort_keys=True))

    train(env, s["steps"], sac_config=sac_cfg, encoder_spec=encoder,
          seed=seed, log_path=log_path, checkpoint_path=out,
          checkpoint_every=s.get("checkpoint_every") or 0, progress=report)
    print(f"wrote {out} and {log_path}", file=sys.stderr)
    return 0


def load_probability_raster(path, resolution):
    """Float occupancy probabilities from .npy, or PGM with dark=occupied."""
    from pathlib import Path

    from .grids import ProbabilityGrid

    if path.endswith(".npy"):
        values = np.load(path).astype(np.float32)
    else:
        values = 1.0 - _read_pgm(Path(path)).astype(np.float32) / 255.0
    return ProbabilityGrid(values, resolution)


def cmd_score(s) -> int:
    truth = load_map(s["truth"])
    observed = load_map(s["observed"]) if s.get("observed") else None
    if observed is None:
        # no observed raster: treat everything as unknown so the prediction
        # is judged on its own
        from .grids import unknown_grid

        observed = unknown_grid(truth.width, truth.height, truth.resolution)
    prediction = load_probability_raster(s["prediction"], truth.resolution)
    report = dilated_iou(prediction, observed, truth)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_serve(s) -> int:
    import uvicorn

    from .service import create_app

    seed = global_seed(s["seed"])
    maps = resolve_maps(s)
    app = create_app(maps=maps,
                     ensemble_factory=lambda truth: build_ensemble(s["ensemble"], truth),
                     config=episode_config(s), seed=seed,
                     pacing_ms=s["pacing_ms"])
    uvicorn.run(app, host=s["host"], port=s["port"])
    return 0


def add_map_flags(p):
    p.add_argument("--map", help="PGM map file (meta sidecar for resolution)")
    p.add_argument("--gen-seed", type=int, help="procedural floorplan seed")
    p.add_argument("--gen-size", type=int, help="generated map side, cells")
    p.add_argument("--gen-rooms", type=int, help="generated room count")


def add_episode_flags(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--step-cells", type=int, dest="step_cells")
    p.add_argument("--iou-target", type=float, dest="iou_target")
    p.add_argument("--slots", type=int, dest="action_slots")
    p.add_argument("--window", type=int, dest="window_cells")
    p.add_argument("--min-frontier-size", type=int, dest="min_frontier_size")
    p.add_argument("--dedup-dist-m", type=float, dest="dedup_dist_m")
    p.add_argument("--dedup-score", type=float, dest="dedup_score")
    p.add_argument("--beams", type=int)
    p.add_argument("--range-m", type=float, dest="range_m")
    p.add_argument("--tau", type=float)
    p.add_argument("--replan-every-step", action="store_const", const=True,
                   dest="replan_every_step")
    p.add_argument("--ensemble", type=parse_ensemble_flag,
                   help="inpaint[:radius] | oracle[:blur,noise] | external:endpoint")
    p.add_argument("--out-dir", dest="out_dir")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="frontier-lab",
        description="Indoor exploration with map-prediction-aware planning")
    parser.add_argument("--config", help="JSON settings file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run one episode, print its result JSON")
    add_map_flags(p)
    add_episode_flags(p)
    p.add_argument("--planner", choices=PLANNER_NAMES)
    p.add_argument("--lam", type=float)
    p.add_argument("--checkpoint")
    p.add_argument("--start", type=lambda t: [int(v) for v in t.split(",")],
                   help="x,y start cell (default: seeded random free cell)")
    p.add_argument("--render", action="store_const", const=True)

    p = sub.add_parser("benchmark", help="paired-start planner comparison")
    add_map_flags(p)
    add_episode_flags(p)
    p.add_argument("--planners", help="comma-separated planner names")
    p.add_argument("--starts-per-map", type=int, dest="starts_per_map")
    p.add_argument("--lam", type=float)
    p.add_argument("--checkpoint")
    p.add_argument("--render", action="store_const", const=True)

    p = sub.add_parser("train", help="train the slot policy")
    add_map_flags(p)
    add_episode_flags(p)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--checkpoint-out", dest="checkpoint_out")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--log")

    p = sub.add_parser("score", help="dilated IoU of a prediction raster")
    p.add_argument("--prediction", required=True,
                   help=".npy probabilities or PGM (dark = occupied)")
    p.add_argument("--observed", help="PGM observed map (default: all unknown)")
    p.add_argument("--truth", required=True, help="PGM ground-truth map")

    p = sub.add_parser("serve", help="run the study session HTTP service")
    add_map_flags(p)
    add_episode_flags(p)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--pacing-ms", type=int, dest="pacing_ms")

    return parser


COMMANDS = {"explore": cmd_explore, "benchmark": cmd_benchmark,
            "train": cmd_train, "score": cmd_score, "serve": cmd_serve}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](settings_from(args))


if __name__ == "__main__":
    sys.exit(main())
