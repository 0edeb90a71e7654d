"""Command-line entry point: synth, train, eval, detect, plot.

Every command that writes files also writes a run manifest next to them with
the resolved configuration, seed, and input hashes, so any output can be
reproduced byte for byte by rerunning with the manifest's settings. Exit
codes: 0 success, 2 config error, 3 data error, 4 runtime abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    LabeledSegment,
    load_dataset,
    load_signals_csv,
    preset_config,
    save_dataset,
    split,
    synth_generate,
)
from .env import EnvConfig, SmfEnv, scale_time
from .errors import ConfigError, DataError, SmfError
from .model_io import ModelBundle, load_model, save_model
from .nets import NetConfig
from .ppo import PpoConfig, train_ppo
from .sac import SacConfig, train_sac
from .signal_ops import find_peaks, metrics, sum_outcomes
from .svg import line_chart, two_panel_chart
from .trace import read_trace, write_trace


def _default_seed() -> int:
    return int(os.environ.get("SMF_SEED", "0"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(target: Path, command: str, config: dict, seed: int,
                    inputs: dict[str, str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    tmp = Path(str(target) + ".tmp")
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    tmp.replace(target)


def _write_csv_row(path: Path, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(repr(float(v)) for v in values))
        f.write("\n")


def _dataset_hashes(data_dir: Path) -> dict[str, str]:
    out = {}
    for name in ("signals.csv", "peaks.csv"):
        p = data_dir / name
        if p.exists():
            out[str(p)] = _sha256(p)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = preset_config(args.preset, args.segments, args.seed)
    segments = synth_generate(cfg)
    out_dir = Path(args.out)
    signals_path, peaks_path = save_dataset(out_dir, segments)
    _write_manifest(
        out_dir / "manifest.json", "synth", asdict(cfg), args.seed,
        {}, [str(signals_path), str(peaks_path)],
    )
    print(f"wrote {len(segments)} segments to {out_dir}", file=sys.stderr)
    return 0


def _agent_config(args):
    if args.algo == "ppo":
        cfg = PpoConfig(total_steps=args.steps, eval_every=args.eval_every)
    else:
        cfg = SacConfig(total_steps=args.steps, eval_every=args.eval_every)
        if args.warmup_steps is not None:
            cfg.warmup_steps = args.warmup_steps
        if args.update_every is not None:
            cfg.update_every = args.update_every
        if args.batch_size is not None:
            cfg.batch_size = args.batch_size
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    segments = load_dataset(data_dir)
    split_seed = args.split_seed if args.split_seed is not None else args.seed
    data = split(segments, ratio=args.split_ratio, seed=split_seed)

    env_config = EnvConfig(
        episode_len=args.episode_len,
        template_len=args.template_len,
        reward_kind=args.reward,
    )
    env_config.validate()
    net_config = NetConfig(
        signal_len=env_config.signal_len, template_len=env_config.template_len
    )
    agent_cfg = _agent_config(args)

    if args.algo == "ppo":
        policy, value, trace_rows = train_ppo(env_config, data, agent_cfg, args.seed, net_config)
        stores = {"policy": policy.store, "value": value.store}
    else:
        policy, critics, trace_rows = train_sac(env_config, data, agent_cfg, args.seed, net_config)
        stores = {"policy": policy.store}
        stores.update({name: q.store for name, q in critics.items()})

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = ModelBundle(
        algo=args.algo, env=env_config, net=net_config,
        split={"ratio": args.split_ratio, "seed": split_seed},
        stores=stores,
    )
    model_path = out_dir / "model.smf"
    trace_path = out_dir / "trace.csv"
    save_model(model_path, bundle)
    write_trace(trace_path, trace_rows)
    resolved = {
        "algo": args.algo, "env": asdict(env_config), "net": asdict(net_config),
        "agent": asdict(agent_cfg),
        "split": {"ratio": args.split_ratio, "seed": split_seed},
        "data": str(data_dir),
    }
    _write_manifest(
        out_dir / "manifest.json", "train", resolved, args.seed,
        _dataset_hashes(data_dir), [str(model_path), str(trace_path)],
    )
    if trace_rows:
        last = trace_rows[-1]
        print(
            f"final test metrics at step {last['step']}: "
            f"P={last['precision']:.4f} R={last['recall']:.4f} F1={last['f1']:.4f}",
            file=sys.stderr,
        )
    return 0


def _eval_report(bundle: ModelBundle, segments: list[LabeledSegment]) -> dict:
    from .env import evaluate_policy

    policy = bundle.policy()
    precision, recall, f1, outcomes = evaluate_policy(policy, segments, bundle.env)
    totals = sum_outcomes(outcomes)
    per_segment = []
    for seg, outcome in zip(segments, outcomes):
        p, r, f = metrics(outcome)
        per_segment.append({
            "id": seg.id, "tp": outcome.tp, "fp": outcome.fp, "fn": outcome.fn,
            "precision": p, "recall": r, "f1": f,
        })
    return {
        "precision": precision, "recall": recall, "f1": f1,
        "tp": totals.tp, "fp": totals.fp, "fn": totals.fn,
        "per_segment": per_segment,
    }


def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    segments = load_dataset(Path(args.data))
    data = split(segments, ratio=bundle.split["ratio"], seed=bundle.split["seed"])
    subset = data.train if args.split == "train" else data.test
    report = _eval_report(bundle, subset)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _write_manifest(
            Path(str(args.out) + ".manifest.json"), "eval",
            {"model": str(args.model), "split": args.split, "data": args.data},
            _default_seed(), {str(args.model): _sha256(Path(args.model))}, [str(args.out)],
        )
    return 0


def cmd_detect(args) -> int:
    bundle = load_model(args.model)
    policy = bundle.policy()
    env_config = bundle.env
    signals = load_signals_csv(Path(args.input))
    n_steps = env_config.episode_len

    dump_dir = Path(args.dump_steps) if args.dump_steps else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    out_rows: list[tuple[int, int]] = []
    latencies = []
    env = SmfEnv(env_config)
    for row, sig in enumerate(signals):
        segment = LabeledSegment(signal=sig, peaks=[], id=f"row-{row:05d}")
        start = time.perf_counter()
        state = env.reset(segment)
        chain = [state.signal.copy()]
        templates = []
        for t in range(1, n_steps + 1):
            action = policy.mean_actions(
                state.signal[None, :], np.array([scale_time(t, n_steps)])
            )[0]
            state, _, _, _ = env.step(action)
            chain.append(state.signal.copy())
            templates.append(action)
        peaks = find_peaks(state.signal, env_config.height, env_config.distance)
        latencies.append(time.perf_counter() - start)
        out_rows.extend((row, p) for p in peaks)

        if dump_dir is not None:
            for t, x in enumerate(chain, start=1):
                _write_csv_row(dump_dir / f"seg{row:05d}_x{t}.csv", x)
            for t, a in enumerate(templates, start=1):
                _write_csv_row(dump_dir / f"seg{row:05d}_a{t}.csv", a)
            sig_series = [
                (f"x{t}", list(range(len(x))), [float(v) for v in x])
                for t, x in enumerate(chain, start=1)
            ]
            tmpl_series = [
                (f"a{t}", list(range(len(a))), [float(v) for v in a])
                for t, a in enumerate(templates, start=1)
            ]
            svg = two_panel_chart(
                sig_series, tmpl_series,
                top_labels=("sample", "amplitude"), bottom_labels=("tap", "weight"),
            )
            (dump_dir / f"seg{row:05d}.svg").write_text(svg, encoding="utf-8")

    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for row, p in out_rows:
            f.write(f"{row},{p}\n")

    mean_ms = 1000.0 * float(np.mean(latencies))
    max_ms = 1000.0 * float(np.max(latencies))
    print(
        f"detected peaks in {len(signals)} segments; "
        f"latency mean {mean_ms:.3f} ms, max {max_ms:.3f} ms per segment",
        file=sys.stderr,
    )
    _write_manifest(
        Path(str(out_path) + ".manifest.json"), "detect",
        {"model": str(args.model), "input": str(args.input),
         "latency_ms_mean": mean_ms, "latency_ms_max": max_ms},
        _default_seed(),
        {str(args.model): _sha256(Path(args.model)),
         str(args.input): _sha256(Path(args.input))},
        [str(out_path)],
    )
    return 0


def cmd_plot(args) -> int:
    series = []
    for trace_path in args.trace:
        rows = read_trace(trace_path)
        series.append((
            Path(trace_path).stem if len(args.trace) == 1 else str(trace_path),
            [float(r["step"]) for r in rows],
            [r["f1"] for r in rows],
        ))
    svg = line_chart(series, x_label="training step", y_label="test F-1",
                     y_range=(0.0, 1.0))
    Path(args.out).write_text(svg, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smf",
        description="Sequential matched filters for R-peak localisation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--segments", type=int, default=720)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--preset", choices=("ear", "arrhythmia"), default="ear")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an SMF policy")
    p.add_argument("--algo", choices=("ppo", "sac"), required=True)
    p.add_argument("--data", required=True, help="directory with signals.csv + peaks.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--episode-len", type=int, default=3)
    p.add_argument("--template-len", type=int, default=8)
    p.add_argument("--reward", choices=("linear", "f1"), default="linear")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--split-ratio", type=float, default=0.7)
    p.add_argument("--split-seed", type=int, default=None,
                   help="defaults to --seed; keep fixed across sweeps")
    p.add_argument("--eval-every", type=int, default=5000)
    p.add_argument("--warmup-steps", type=int, default=None, help="sac only")
    p.add_argument("--update-every", type=int, default=None, help="sac only")
    p.add_argument("--batch-size", type=int, default=None, help="sac only")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="detect peaks in unlabeled signals")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="signals.csv file")
    p.add_argument("--out", required=True, help="output peaks.csv")
    p.add_argument("--dump-steps", default=None,
                   help="directory for per-step signal/template CSVs and SVGs")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("plot", help="render a learning-curve SVG from trace CSVs")
    p.add_argument("--trace", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except SmfError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code if hasattr(e, "exit_code") else 4
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
