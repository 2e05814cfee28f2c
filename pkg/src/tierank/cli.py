"""``tierank`` command line: data generation, training, evaluation and checks.

Every command writes its outputs atomically into ``--out`` together with a
``run_manifest.json``. Option precedence: built-in defaults, then the
``--config`` JSON file, then explicit flags.

Exit codes: 0 success, 1 validation error, 2 numerical-check failure,
3 training divergence.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from . import __version__, kernels
from .alpha import AlphaSimConfig, alpha_csv, default_alpha_grid, simulate_alpha
from .checks import run_oracle_suite
from .data import LatentWorld, dumps_jsonl, generate_synthetic, ingest, resample_tie_ratio, split
from .errors import DivergenceError, QuadratureError, TierankError
from .evaluate import compare, ternary_accuracy
from .io import atomic_write_text, sha256_file
from .policy import PolicyTable
from .trainer import TrainConfig, train

EXIT_OK, EXIT_INVALID, EXIT_CHECK, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


TRAIN_DEFAULTS = {
    "method": "todo", "alpha": 0.5, "beta": 0.01, "lr": 0.05, "epochs": 3, "batch_size": 64,
    "optimizer": "adam", "adam_b1": 0.9, "adam_b2": 0.999, "adam_eps": 1e-8, "shuffle": True,
}

DEFAULTS = {
    "gen-data": {"prompts": 200, "candidates": 4, "spread": 1.0, "quant": 0.5, "gen_alpha": 0.5,
                 "labeling": "quantize"},
    "ingest": {"input": None, "quant": None, "tie_ratio": None, "size": None, "test_fraction": None,
               "split_by": "prompt", "keep_test_ties": False},
    "train": {"corpus": None, "world": None, "reference": None, "init": None, **TRAIN_DEFAULTS},
    "eval": {"policy": None, "reference": None, "test": None, "beta": 0.01, "alpha": 0.5, "include_ties": False},
    "compare": {"world": None, "corpus": None, "ratios": "0,0.1,0.2,0.3", "methods": "dpo,todo", "seeds": 5,
                "train_size": None, "test_fraction": 0.1, "split_by": "pair", "eval_alpha": None, **TRAIN_DEFAULTS},
    "alpha-sim": {"alphas": None, "mu_samples": 10_000, "mu_sigma": 0.1, "pref_threshold": 1.0,
                  "tie_threshold": 1.5},
    "oracle-check": {"cases": 100, "inject_fault": False},
}
SEEDED = {"gen-data", "train", "compare", "alpha-sim", "oracle-check"}
REQUIRED = {"ingest": ["input"], "train": ["corpus"], "eval": ["policy", "test"], "compare": ["world", "corpus"]}


def _add_train_flags(p):
    p.add_argument("--method", choices=("dpo", "todo"))
    p.add_argument("--alpha", type=float, help="tie buffer (TODO)")
    p.add_argument("--beta", type=float)
    p.add_argument("--lr", type=float, help="peak learning rate of the cosine schedule")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--adam-b1", type=float)
    p.add_argument("--adam-b2", type=float)
    p.add_argument("--adam-eps", type=float)
    p.add_argument("--no-shuffle", dest="shuffle", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tierank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tierank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--config", type=Path, help="JSON file of option values")
        return p

    p = command("gen-data", "draw a synthetic latent-reward world and label all pairs")
    p.add_argument("--prompts", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--spread", type=float, help="std of latent rewards")
    p.add_argument("--quant", type=float, help="score quantization step (ties share a bin)")
    p.add_argument("--gen-alpha", type=float, help="tie buffer for --labeling tobt")
    p.add_argument("--labeling", choices=("quantize", "tobt"))

    p = command("ingest", "read pair JSONL, optionally split and resample to a tie ratio")
    p.add_argument("--input", type=Path)
    p.add_argument("--quant", type=float)
    p.add_argument("--tie-ratio", type=float)
    p.add_argument("--size", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-by", choices=("prompt", "pair"))
    p.add_argument("--keep-test-ties", action="store_const", const=True)

    p = command("train", "train a tabular policy with DPO or TODO")
    p.add_argument("--corpus", type=Path)
    p.add_argument("--world", type=Path, help="take the candidate registry from a world file")
    p.add_argument("--reference", type=Path, help="reference policy JSON (default uniform)")
    p.add_argument("--init", type=Path, help="initial policy JSON (default: the reference)")
    _add_train_flags(p)

    p = command("eval", "ternary preference accuracy of a trained policy")
    p.add_argument("--policy", type=Path)
    p.add_argument("--reference", type=Path)
    p.add_argument("--test", type=Path)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--include-ties", action="store_const", const=True)

    p = command("compare", "DPO vs TODO accuracy across tie ratios and seeds")
    p.add_argument("--world", type=Path)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--ratios")
    p.add_argument("--methods")
    p.add_argument("--seeds", type=int, help="number of seeds, starting at --seed")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-by", choices=("prompt", "pair"))
    p.add_argument("--eval-alpha", type=float)
    _add_train_flags(p)

    p = command("alpha-sim", "initial-loss screening of the tie buffer alpha")
    p.add_argument("--alphas", help="comma-separated grid (default covers 0.01..10)")
    p.add_argument("--mu-samples", type=int)
    p.add_argument("--mu-sigma", type=float)
    p.add_argument("--pref-threshold", type=float)
    p.add_argument("--tie-threshold", type=float)

    p = command("oracle-check", "quadrature and finite-difference verification suite")
    p.add_argument("--cases", type=int)
    p.add_argument("--inject-fault", action="store_const", const=True, help=argparse.SUPPRESS)
    return parser


def resolve(args) -> dict:
    cfg = dict(DEFAULTS[args.command])
    cfg["seed"] = None
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    for key in REQUIRED.get(args.command, []):
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
    if cfg["seed"] is None and (args.command in SEEDED or (args.command == "ingest" and (
            cfg["tie_ratio"] is not None or cfg["test_fraction"] is not None))):
        raise UsageError("--seed is required")
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def _train_config(cfg, method=None, seed=None) -> TrainConfig:
    return TrainConfig(
        method=method or cfg["method"], alpha=cfg["alpha"], beta=cfg["beta"], learning_rate=cfg["lr"],
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], optimizer=cfg["optimizer"],
        adam_params=(cfg["adam_b1"], cfg["adam_b2"], cfg["adam_eps"]),
        seed=cfg["seed"] if seed is None else seed, shuffle=cfg["shuffle"],
    )


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


# commands return {filename: text} and the list of input paths ----------------


def cmd_gen_data(cfg):
    world, corpus = generate_synthetic(cfg["prompts"], cfg["candidates"], cfg["spread"], cfg["gen_alpha"],
                                       cfg["quant"], cfg["seed"], labeling=cfg["labeling"])
    print(f"{len(corpus)} pairs, tie ratio {corpus.tie_ratio:.4f}")
    return {"world.json": world.dumps(), "corpus.jsonl": dumps_jsonl(corpus)}, []


def cmd_ingest(cfg):
    corpus = ingest(cfg["input"], cfg["quant"])
    outputs = {}
    test = None
    if cfg["test_fraction"] is not None:
        corpus, test = split(corpus, cfg["test_fraction"], cfg["seed"], not cfg["keep_test_ties"], cfg["split_by"])
    if cfg["tie_ratio"] is not None:
        corpus = resample_tie_ratio(corpus, cfg["tie_ratio"], cfg["seed"], cfg["size"])
    outputs["train.jsonl"] = dumps_jsonl(corpus)
    if test is not None:
        outputs["test.jsonl"] = dumps_jsonl(test)
    print(f"train: {len(corpus)} pairs, tie ratio {corpus.tie_ratio:.4f}"
          + (f"; test: {len(test)} pairs" if test is not None else ""))
    return outputs, [cfg["input"]]


def cmd_train(cfg):
    corpus = ingest(cfg["corpus"])
    inputs = [cfg["corpus"]]
    if cfg["reference"] is not None:
        reference = PolicyTable.loads(_read(cfg["reference"]))
        inputs.append(cfg["reference"])
    elif cfg["world"] is not None:
        reference = PolicyTable.uniform(LatentWorld.loads(_read(cfg["world"])).registry)
        inputs.append(cfg["world"])
    else:
        reference = PolicyTable.uniform(corpus.registry)
    init = reference
    if cfg["init"] is not None:
        init = PolicyTable.loads(_read(cfg["init"]))
        inputs.append(cfg["init"])
    policy, trace = train(corpus, init, reference, _train_config(cfg))
    print(f"{len(trace)} steps, final mean margin {trace.records[-1].mean_margin:.6g}")
    return {"policy.json": policy.dumps(), "reference.json": reference.dumps(), "margins.csv": trace.to_csv()}, inputs


def cmd_eval(cfg):
    policy = PolicyTable.loads(_read(cfg["policy"]))
    inputs = [cfg["policy"], cfg["test"]]
    if cfg["reference"] is not None:
        reference = PolicyTable.loads(_read(cfg["reference"]))
        inputs.append(cfg["reference"])
    else:
        reference = PolicyTable.uniform(policy.registry)
    test = ingest(cfg["test"])
    rep = ternary_accuracy(policy, reference, test, cfg["beta"], cfg["alpha"], include_ties=cfg["include_ties"])
    print(f"accuracy {rep.accuracy:.4f} on {rep.n_pairs} pairs")
    return {"report.json": rep.dumps()}, inputs


def cmd_compare(cfg):
    world = LatentWorld.loads(_read(cfg["world"]))
    corpus = ingest(cfg["corpus"])
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))
    res = compare(world, corpus, _floats(cfg["ratios"]), _strs(cfg["methods"]), seeds, _train_config(cfg),
                  train_size=cfg["train_size"], test_fraction=cfg["test_fraction"], split_by=cfg["split_by"],
                  eval_alpha=cfg["eval_alpha"])
    summary = res.summary()
    for row in summary:
        print(f"tie ratio {row['tie_ratio']:.2f} {row['method']:>4}: "
              f"{row['mean_accuracy']:.4f} +- {row['std_accuracy']:.4f} (n={row['n']})")
    return {"comparison.csv": res.to_csv(), "summary.json": json.dumps(summary, indent=1) + "\n"}, \
        [cfg["world"], cfg["corpus"]]


def cmd_alpha_sim(cfg):
    grid = default_alpha_grid() if cfg["alphas"] is None else tuple(_floats(cfg["alphas"]))
    sim_cfg = AlphaSimConfig(grid, cfg["mu_samples"], cfg["mu_sigma"], cfg["pref_threshold"],
                             cfg["tie_threshold"], cfg["seed"])
    results = simulate_alpha(sim_cfg)
    feasible = [r.alpha for r in results if r.feasible]
    print(f"{len(feasible)} of {len(results)} alpha values feasible"
          + (f" (range {min(feasible):g}..{max(feasible):g})" if feasible else ""))
    return {"alpha.csv": alpha_csv(results)}, []


def cmd_oracle_check(cfg):
    rep = run_oracle_suite(cfg["cases"], cfg["seed"], fault=bool(cfg["inject_fault"]))
    sys.stdout.write(rep.text)
    return {"oracle_report.txt": rep.text}, [], rep.passed


COMMANDS = {
    "gen-data": cmd_gen_data, "ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval,
    "compare": cmd_compare, "alpha-sim": cmd_alpha_sim, "oracle-check": cmd_oracle_check,
}


def manifest_text(command, cfg, inputs, outputs) -> str:
    body = {
        "command": command,
        "config": cfg,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "seed": cfg.get("seed"),
        "tool_version": __version__,
        "backend": kernels.BACKEND,
        "outputs": sorted(outputs),
    }
    text = json.dumps(body, indent=1, sort_keys=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    # the timestamp is kept on the last line so reruns differ only there
    return text[:-2] + f",\n \"timestamp\": \"{stamp}\"\n}}\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        result = COMMANDS[args.command](cfg)
        outputs, inputs = result[0], result[1]
        passed = result[2] if len(result) > 2 else True
        out = Path(args.out)
        for name, text in outputs.items():
            atomic_write_text(out / name, text)
        atomic_write_text(out / "run_manifest.json", manifest_text(args.command, cfg, inputs, outputs))
    except DivergenceError as exc:
        print(f"error: training diverged at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    except QuadratureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (UsageError, TierankError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if passed else EXIT_CHECK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
