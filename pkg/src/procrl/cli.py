"""Command-line entry point: ``procrl <command> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 non-finite training.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .grpo import NumericalError, TrainConfig, train
from .io import DataError, atomic_write_json, atomic_write_text, iter_jsonl, jsonl_text, read_json
from .judge import ComparisonRecord, aggregate_win_rate, mock_judge
from .policy import NoiseModel, TokenPools, ToyPolicy, sample_response
from .rewards import KeywordTaxonomy, RewardWeights, default_taxonomy, total_reward
from .scaling import emit_curve, parse_budgets, parse_curve, sweep, sweet_spot
from .synthetic import TemplateSet, augment, generate_dataset
from .traces import read_instances, read_traces, write_instances

CONFIG_DIR_ENV = "PROCRL_CONFIG_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("procrl")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- config helpers ------------------------------------------------------------


def resolve_config_path(path: str | None) -> Path | None:
    """Relative paths fall back to ``$PROCRL_CONFIG_DIR`` when absent from the cwd."""
    if path is None:
        return None
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def _default_doc(name: str) -> Path | None:
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / name).exists():
        return Path(base) / name
    return None


def _load_doc(path: Path, what: str) -> Any:
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return read_json(path)
    except DataError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def load_weights(path: str | None) -> tuple[RewardWeights, str | None]:
    p = resolve_config_path(path) or _default_doc("weights.json")
    if p is None:
        return RewardWeights(), None
    try:
        return RewardWeights.from_dict(_load_doc(p, "weights")), str(p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"weights {p}: {exc}") from None


def load_taxonomy(path: str | None) -> tuple[KeywordTaxonomy, str | None]:
    p = resolve_config_path(path) or _default_doc("taxonomy.json")
    if p is None:
        return default_taxonomy(), None
    try:
        return KeywordTaxonomy.from_dict(_load_doc(p, "taxonomy")), str(p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"taxonomy {p}: {exc}") from None


def load_pools(spec: Any) -> TokenPools:
    if spec is None or spec == "default":
        return TokenPools()
    if spec == "full":
        return TokenPools.full()
    if isinstance(spec, dict):
        unknown = sorted(set(spec) - {"pattern", "logic", "domain", "noise"})
        if unknown:
            raise ConfigError(f"unknown pools field(s): {', '.join(unknown)}")
        try:
            return TokenPools(**{k: tuple(v) for k, v in spec.items()})
        except ValueError as exc:
            raise ConfigError(f"pools: {exc}") from None
    raise ConfigError("pools must be 'default', 'full' or an object of word lists")


def load_noise(doc: dict | None) -> NoiseModel:
    if not doc:
        return NoiseModel()
    try:
        return NoiseModel(**doc)
    except TypeError as exc:
        raise ConfigError(f"noise: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None


TRAIN_DOC_SECTIONS = {"policy", "dataset", "pools"}
POLICY_FIELDS = {"answer_temperature", "length_buckets", "init"}
DATASET_FIELDS = {"path", "n_instances", "vocab_size", "seed", "augment", "templates"}


def parse_train_doc(doc: dict, seed: int | None, iterations: int | None) -> tuple[TrainConfig, dict]:
    if not isinstance(doc, dict):
        raise ConfigError("train config must be an object")
    sections = {k: doc[k] for k in TRAIN_DOC_SECTIONS if k in doc}
    flat = {k: v for k, v in doc.items() if k not in TRAIN_DOC_SECTIONS}
    if seed is not None:
        flat["seed"] = seed
    if iterations is not None:
        flat["iterations"] = iterations
    try:
        config = TrainConfig.from_dict(flat)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train config: {exc}") from None
    for name, allowed in (("policy", POLICY_FIELDS), ("dataset", DATASET_FIELDS)):
        sec = sections.setdefault(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"'{name}' section must be an object")
        unknown = sorted(set(sec) - allowed)
        if unknown:
            raise ConfigError(f"unknown {name} field(s): {', '.join(unknown)}")
    return config, sections


def _int_field(d: dict, key: str, default: int, minimum: int) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"dataset.{key} must be an integer >= {minimum}")
    return v


# -- manifests -----------------------------------------------------------------


def write_manifest(path: Path, command: str, config: dict, seed: int | None, inputs: dict, outputs: list[str],
                   started: float) -> None:
    atomic_write_json(path, {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "duration_s": round(time.monotonic() - started, 6),
    })


def _file_manifest(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# -- commands ------------------------------------------------------------------


def cmd_generate(args) -> int:
    started = time.monotonic()
    try:
        data = generate_dataset(args.seed, args.n, args.vocab_size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    write_instances(out, data)
    write_manifest(_file_manifest(out), "generate", {"n": args.n, "vocab_size": args.vocab_size}, args.seed,
                   {}, [out.name], started)
    return EXIT_OK


def cmd_augment(args) -> int:
    started = time.monotonic()
    templates = TemplateSet()
    tpath = resolve_config_path(args.templates)
    if tpath is not None:
        try:
            templates = TemplateSet.from_dict(_load_doc(tpath, "templates"))
        except ValueError as exc:
            raise ConfigError(f"templates {tpath}: {exc}") from None
    instances = read_instances(args.instances)
    variants = [v for inst in instances for v in augment(inst, templates)]
    out = Path(args.out)
    write_instances(out, variants)
    write_manifest(_file_manifest(out), "augment", templates.to_dict(), None,
                   {"instances": str(args.instances), "templates": None if tpath is None else str(tpath)},
                   [out.name], started)
    return EXIT_OK


def cmd_score(args) -> int:
    started = time.monotonic()
    weights, wpath = load_weights(args.weights)
    taxonomy, tpath = load_taxonomy(args.taxonomy)
    instances = {inst.id: inst for inst in read_instances(args.instances)}
    rows = []
    for lineno, instance_id, raw in read_traces(args.traces):
        inst = instances.get(instance_id)
        if inst is None:
            raise DataError(f"trace references unknown instance id {instance_id!r}", args.traces, lineno)
        rows.append({"instance_id": instance_id, **total_reward(raw, inst, weights, taxonomy).to_dict()})
    out = Path(args.out)
    atomic_write_text(out, jsonl_text(rows))
    write_manifest(_file_manifest(out), "score", {"weights": weights.to_dict()}, None,
                   {"instances": str(args.instances), "traces": str(args.traces),
                    "weights": wpath, "taxonomy": tpath}, [out.name], started)
    return EXIT_OK


def _load_policy(path: str) -> ToyPolicy:
    p = resolve_config_path(path)
    try:
        return ToyPolicy.from_dict(_load_doc(p, "policy"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"policy {p}: {exc}") from None


def _load_optional_doc(path: str | None, what: str) -> dict:
    p = resolve_config_path(path)
    if p is None:
        return {}
    doc = _load_doc(p, what)
    if not isinstance(doc, dict):
        raise ConfigError(f"{what} must be an object")
    return doc


def cmd_sample(args) -> int:
    started = time.monotonic()
    policy = _load_policy(args.policy)
    doc = _load_optional_doc(args.config, "config")
    noise, pools = load_noise(doc.get("noise")), load_pools(doc.get("pools"))
    if args.budget < 0:
        raise ConfigError("--budget must be >= 0")
    instances = read_instances(args.eval)
    rows = []
    for i, inst in enumerate(instances):
        s = sample_response(policy, inst, args.budget, noise, np.random.default_rng([args.seed, 4, i]), pools)
        rows.append({"instance_id": inst.id, "raw": s.raw})
    out = Path(args.out)
    atomic_write_text(out, jsonl_text(rows))
    write_manifest(_file_manifest(out), "sample", {"budget": args.budget, "noise": vars(noise)}, args.seed,
                   {"policy": str(args.policy), "eval": str(args.eval)}, [out.name], started)
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.monotonic()
    cpath = resolve_config_path(args.config)
    doc = _load_doc(cpath, "train config")
    config, sections = parse_train_doc(doc, args.seed, args.iterations)
    pools = load_pools(sections.get("pools"))

    pol = sections["policy"]
    try:
        if "init" in pol:
            init = ToyPolicy.from_dict(pol["init"])
        else:
            kw = {}
            if "length_buckets" in pol:
                kw["length_buckets"] = tuple(pol["length_buckets"])
            if "answer_temperature" in pol:
                kw["answer_temperature"] = float(pol["answer_temperature"])
            init = ToyPolicy.uniform(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"policy: {exc}") from None

    ds = sections["dataset"]
    out = Path(args.out)
    outputs = []
    if "path" in ds:
        dpath = resolve_config_path(ds["path"])
        data = read_instances(dpath)
        if not data:
            raise DataError("training dataset is empty", dpath)
    else:
        n = _int_field(ds, "n_instances", 500, 1)
        vocab = _int_field(ds, "vocab_size", 400, 1)
        dseed = _int_field(ds, "seed", config.seed, -2**63)
        try:
            data = generate_dataset(dseed, n, vocab)
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from None
    if ds.get("augment"):
        templates = TemplateSet()
        if ds.get("templates"):
            try:
                templates = TemplateSet.from_dict(_load_doc(resolve_config_path(ds["templates"]), "templates"))
            except ValueError as exc:
                raise ConfigError(f"dataset.templates: {exc}") from None
        data = [v for inst in data for v in augment(inst, templates)]
    if "path" not in ds or ds.get("augment"):
        write_instances(out / "dataset.jsonl", data)
        outputs.append("dataset.jsonl")

    policy, train_log = train(data, init, init, config, pools=pools)

    atomic_write_json(out / "policy.json", policy.to_dict())
    atomic_write_json(out / "reference_policy.json", init.to_dict())
    atomic_write_text(out / "log.jsonl", jsonl_text(train_log.records))
    atomic_write_text(out / "log.csv", train_log.to_csv())
    outputs += ["policy.json", "reference_policy.json", "log.jsonl", "log.csv"]
    resolved = {**config.to_dict(), **sections}
    write_manifest(out / "manifest.json", "train", resolved, config.seed,
                   {"config": str(cpath)}, outputs, started)
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.monotonic()
    policy = _load_policy(args.policy)
    doc = _load_optional_doc(args.config, "config")
    noise, pools = load_noise(doc.get("noise")), load_pools(doc.get("pools"))
    try:
        budgets = parse_budgets(args.budgets)
    except ValueError as exc:
        raise ConfigError(f"--budgets: {exc}") from None
    instances = read_instances(args.eval)
    if not instances:
        raise DataError("evaluation set is empty", args.eval)
    curve = sweep(policy, instances, budgets, noise, args.seed, pools)
    out = Path(args.out)
    atomic_write_text(out, emit_curve(curve))
    write_manifest(_file_manifest(out), "sweep",
                   {"budgets": budgets, "noise": vars(noise), "sweet_spot": sweet_spot(curve)}, args.seed,
                   {"policy": str(args.policy), "eval": str(args.eval)}, [out.name], started)
    return EXIT_OK


def cmd_judge(args) -> int:
    started = time.monotonic()
    if not args.mock:
        raise ConfigError("no live judge client is configured; pass --mock for the offline reward-based judge")
    weights, wpath = load_weights(args.weights)
    taxonomy, tpath = load_taxonomy(args.taxonomy)
    if args.epsilon < 0:
        raise ConfigError("--epsilon must be >= 0")
    instances = {inst.id: inst for inst in read_instances(args.instances)}
    a_traces = read_traces(args.a)
    b_by_id: dict[str, str] = {}
    for lineno, iid, raw in read_traces(args.b):
        if iid in b_by_id:
            raise DataError(f"duplicate instance id {iid!r}", args.b, lineno)
        b_by_id[iid] = raw
    records = []
    for lineno, iid, raw_a in a_traces:
        inst = instances.get(iid)
        if inst is None:
            raise DataError(f"trace references unknown instance id {iid!r}", args.a, lineno)
        if iid not in b_by_id:
            raise DataError(f"no B trace for instance id {iid!r}", args.a, lineno)
        raw_b = b_by_id[iid]
        verdict = mock_judge(inst, raw_a, raw_b, weights, taxonomy, args.epsilon)
        records.append(ComparisonRecord(iid, raw_a, raw_b, verdict, judge_id="mock-reward"))
    if not records:
        raise DataError("no comparisons to judge", args.a)
    report = aggregate_win_rate(records)
    out = Path(args.out)
    atomic_write_text(out / "records.jsonl", jsonl_text(r.to_record() for r in records))
    atomic_write_json(out / "summary.json", report.to_dict())
    write_manifest(out / "manifest.json", "judge", {"epsilon": args.epsilon, "weights": weights.to_dict()}, None,
                   {"instances": str(args.instances), "a": str(args.a), "b": str(args.b),
                    "weights": wpath, "taxonomy": tpath},
                   ["records.jsonl", "summary.json"], started)
    return EXIT_OK


# -- report --------------------------------------------------------------------


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize_run(directory: str | os.PathLike) -> dict[str, Any]:
    """Collect headline numbers from every manifest in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError("not a directory", d)
    manifests = sorted(d.glob("manifest.json")) + sorted(d.glob("*.manifest.json"))
    if not manifests:
        raise DataError("no manifest found", d)
    summary: dict[str, Any] = {}
    for mpath in manifests:
        m = read_json(mpath)
        cmd = m.get("command")
        if cmd == "train":
            rows = _read_csv(d / "log.csv")
            recs = [r for _, r in iter_jsonl(d / "log.jsonl")]
            entry = {"iterations": len(rows)}
            if rows:
                entry["final_accuracy"] = float(rows[-1]["accuracy"])
                entry["final_mean_reward"] = float(rows[-1]["mean_reward"])
                entry["final_mean_think_len"] = float(rows[-1]["mean_think_len"])
            if recs:
                entry["final_agreement"] = float(recs[-1]["agreement"])
            summary["train"] = entry
        elif cmd == "sweep":
            name = m["outputs"][0]
            curve = parse_curve((d / name).read_text(encoding="utf-8"))
            if curve.points:
                best = sweet_spot(curve)
                summary.setdefault("sweep", {})[name] = {
                    "sweet_spot": best,
                    "peak_accuracy": max(curve.accuracies),
                    "points": len(curve),
                }
        elif cmd == "judge":
            summary["judge"] = read_json(d / "summary.json")
        elif cmd is not None:
            summary.setdefault("other", []).append(cmd)
    return summary


def format_summary(summary: dict[str, Any]) -> str:
    lines = []
    if "train" in summary:
        t = summary["train"]
        lines.append(f"train: {t['iterations']} iterations")
        if "final_accuracy" in t:
            lines.append(f"  final accuracy: {t['final_accuracy']:.4f}")
            lines.append(f"  final mean reward: {t['final_mean_reward']:.4f}")
            lines.append(f"  final mean think length: {t['final_mean_think_len']:.2f}")
        if "final_agreement" in t:
            lines.append(f"  reasoning-answer agreement rate: {t['final_agreement']:.4f}")
    for name, s in summary.get("sweep", {}).items():
        lines.append(f"sweep {name}: L_sweet = {s['sweet_spot']} (peak accuracy {s['peak_accuracy']:.4f}, "
                     f"{s['points']} points)")
    if "judge" in summary:
        j = summary["judge"]
        lines.append(f"judge: A {j['a_wins']} / B {j['b_wins']} / Tie {j['ties']} of {j['total']}")
        lines.append(f"  win rate A {j['a_rate']:.4f}, B {j['b_rate']:.4f} (ties split equally)")
    for cmd in summary.get("other", []):
        lines.append(f"{cmd}: completed")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    summary = summarize_run(args.directory)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n" if args.json else format_summary(summary)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="procrl", description="Process-reward scoring and toy GRPO training.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", help="write a synthetic instance file")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--vocab-size", type=int, default=400)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("augment", help="rephrase questions with answer-invariant templates")
    s.add_argument("--instances", required=True)
    s.add_argument("--templates")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("score", help="score traces with the reward suite")
    s.add_argument("--instances", required=True)
    s.add_argument("--traces", required=True)
    s.add_argument("--weights")
    s.add_argument("--taxonomy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("sample", help="sample one trace per instance from a policy")
    s.add_argument("--policy", required=True)
    s.add_argument("--eval", required=True)
    s.add_argument("--budget", type=int, default=64)
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("train", help="train a toy policy with GRPO")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--iterations", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="test-time scaling sweep over think budgets")
    s.add_argument("--policy", required=True)
    s.add_argument("--eval", required=True)
    s.add_argument("--budgets", default="0:250:25")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("judge", help="pairwise judging with tie-splitting win rates")
    s.add_argument("--instances", required=True)
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--mock", action="store_true")
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--weights")
    s.add_argument("--taxonomy")
    s.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the mock judge is deterministic")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_judge)

    s = sub.add_parser("report", help="summarize a run directory")
    s.add_argument("directory")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"procrl {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"procrl {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"procrl {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"procrl {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
