"""Command-line pipeline: ingest -> sample -> estimate -> evaluate -> report, plus simulate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
Option precedence: command-line flags, then the ``--config`` file (YAML or
JSON, optionally sectioned by subcommand), then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from . import __version__
from .core import EvalReport, StepCase, UncertaintyRecord, ValidationError
from .embedders import HttpEmbedder, ScriptedEmbedder
from .estimators import DEFAULT_ESTIMATORS, estimate_step
from .evaluate import evaluate, flat_csv
from .ingest import IngestError, SubsetSpec, build_cases, iter_records
from .io import read_jsonl, write_jsonl
from .judge.client import ChatClient, ScriptedClient, TransportError
from .judge.prompts import NOCOT_VERSION, TEMPLATE_VERSION
from .judge.sampling import JudgeConfig, SampleStore, StepSamplingError, load_verifications, sample_step
from .manifest import RunManifest, manifest_path
from .report import render
from .simulator import SimConfig, generate_corpus

logger = logging.getLogger("stepuq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3

_JUDGE = JudgeConfig()
_SIM = SimConfig()
DEFAULTS: dict[str, dict[str, Any]] = {
    "ingest": {"format": "canonical", "n_questions": None, "ids_file": None, "seed": 0, "strict": False},
    "sample": {
        "mock": None,
        "endpoint": _JUDGE.endpoint,
        "model": _JUDGE.model,
        "n_diverse": _JUDGE.n_diverse,
        "t_greedy": _JUDGE.t_greedy,
        "t_diverse": _JUDGE.t_diverse,
        "max_tokens": _JUDGE.max_tokens,
        "top_logprobs": _JUDGE.top_logprobs_requested,
        "epsilon_prob": _JUDGE.epsilon_prob,
        "timeout": _JUDGE.request_timeout,
        "max_retries": _JUDGE.max_retries,
        "concurrency": _JUDGE.max_concurrent_requests,
        "api_key_env": _JUDGE.api_key_env,
        "prompt_version": TEMPLATE_VERSION,
        "seed": None,
        "limit": None,
    },
    "estimate": {
        "estimators": ",".join(DEFAULT_ESTIMATORS),
        "cases": None,
        "mock": None,
        "endpoint": None,
        "model": _JUDGE.model,
        "api_key_env": _JUDGE.api_key_env,
        "embeddings": None,
        "embed_endpoint": None,
        "embed_model": "all-MiniLM-L6-v2",
        "seed": 0,
        "n_seeds": 5,
    },
    "evaluate": {"csv": None},
    "report": {},
    "simulate": {k: v for k, v in asdict(_SIM).items()},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is our data-error code
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _opt(p: argparse.ArgumentParser, *flags: str, **kw) -> None:
    p.add_argument(*flags, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepuq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="build step cases from annotated solutions")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _opt(p, "--format", choices=["canonical", "prm800k"])
    _opt(p, "--n-questions", type=int, dest="n_questions", help="sample this many solutions")
    _opt(p, "--ids-file", dest="ids_file", help="file with one solution id per line")
    _opt(p, "--seed", type=int)
    _opt(p, "--strict", action="store_true", help="abort on the first malformed record")
    _opt(p, "--config")

    p = sub.add_parser("sample", help="query the judge for greedy and diverse verdicts")
    p.add_argument("cases")
    p.add_argument("-o", "--output", required=True)
    _opt(p, "--mock", help="scripted response file; no network")
    _opt(p, "--endpoint", help="chat-completions base URL, e.g. http://host:8000/v1")
    _opt(p, "--model")
    _opt(p, "--n-diverse", type=int, dest="n_diverse")
    _opt(p, "--t-greedy", type=float, dest="t_greedy")
    _opt(p, "--t-diverse", type=float, dest="t_diverse")
    _opt(p, "--max-tokens", type=int, dest="max_tokens")
    _opt(p, "--top-logprobs", type=int, dest="top_logprobs")
    _opt(p, "--epsilon-prob", type=float, dest="epsilon_prob")
    _opt(p, "--timeout", type=float)
    _opt(p, "--max-retries", type=int, dest="max_retries")
    _opt(p, "--concurrency", type=int)
    _opt(p, "--api-key-env", dest="api_key_env")
    _opt(p, "--prompt-version", choices=[TEMPLATE_VERSION, NOCOT_VERSION], dest="prompt_version")
    _opt(p, "--seed", type=int)
    _opt(p, "--limit", type=int, help="stop after this many new cases")
    _opt(p, "--config")

    p = sub.add_parser("estimate", help="score every sampled step with the uncertainty estimators")
    p.add_argument("samples")
    p.add_argument("-o", "--output", required=True)
    _opt(p, "--estimators", help="comma-separated subset of " + ",".join(DEFAULT_ESTIMATORS))
    _opt(p, "--cases", help="case file; required for P(True)")
    _opt(p, "--mock", help="scripted response file for P(True)")
    _opt(p, "--endpoint", help="judge endpoint for P(True)")
    _opt(p, "--model")
    _opt(p, "--api-key-env", dest="api_key_env")
    _opt(p, "--embeddings", help="scripted embedding file for SEU")
    _opt(p, "--embed-endpoint", dest="embed_endpoint")
    _opt(p, "--embed-model", dest="embed_model")
    _opt(p, "--seed", type=int)
    _opt(p, "--n-seeds", type=int, dest="n_seeds", help="seeds for the random baseline")
    _opt(p, "--config")

    p = sub.add_parser("evaluate", help="AUROC, AUPRC, AU-F1C and rejection curves")
    p.add_argument("samples")
    p.add_argument("records")
    p.add_argument("-o", "--output", required=True, help="report JSON")
    _opt(p, "--csv", help="flat CSV (default: alongside the JSON)")
    _opt(p, "--config")

    p = sub.add_parser("report", help="comparison tables and rejection-F1 plots")
    p.add_argument("report")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _opt(p, "--config")

    p = sub.add_parser("simulate", help="write a synthetic corpus with known ground truth")
    p.add_argument("-o", "--output", required=True, help="output directory")
    for name, default in DEFAULTS["simulate"].items():
        flag = "--" + name.replace("_", "-")
        if isinstance(default, bool):
            _opt(p, flag, dest=name, action="store_true")
        else:
            _opt(p, flag, dest=name, type=type(default))
    _opt(p, "--config")
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {config_path} is not a mapping")
        section = loaded.get(command, loaded if command not in loaded else {})
        section = {k.replace("-", "_"): v for k, v in section.items() if not isinstance(v, dict)}
        unknown = set(section) - set(cfg)
        if command in loaded and unknown:
            raise UsageError(f"unknown {command} options in config: {sorted(unknown)}")
        cfg.update({k: v for k, v in section.items() if k in cfg})
    cfg.update({k: v for k, v in vars(args).items() if k in cfg})
    return cfg


def _load_cases(path: str) -> list[StepCase]:
    return [StepCase.from_dict(r) for r in read_jsonl(path)]


def cmd_ingest(args, cfg) -> int:
    subset = None
    if cfg["n_questions"] is not None and cfg["ids_file"]:
        raise UsageError("--n-questions and --ids-file are mutually exclusive")
    if cfg["ids_file"]:
        ids = tuple(l.strip() for l in Path(cfg["ids_file"]).read_text(encoding="utf-8").splitlines() if l.strip())
        subset = SubsetSpec(ids=ids)
    elif cfg["n_questions"] is not None:
        subset = SubsetSpec(n_questions=cfg["n_questions"])
    manifest = RunManifest.start("ingest", cfg, [args.input], [cfg["seed"]])
    cases, summary = build_cases(
        iter_records(args.input), subset=subset, seed=cfg["seed"], strict=cfg["strict"], fmt=cfg["format"]
    )
    write_jsonl(args.output, (c.to_dict() for c in cases))
    manifest.extra = {"summary": asdict(summary)}
    manifest.finish([args.output], manifest_path(args.output))
    print(summary.render())
    return EXIT_OK


def _judge_config(cfg: dict) -> JudgeConfig:
    return JudgeConfig(
        endpoint=cfg["endpoint"] or _JUDGE.endpoint,
        model=cfg["model"],
        t_greedy=cfg.get("t_greedy", _JUDGE.t_greedy),
        t_diverse=cfg.get("t_diverse", _JUDGE.t_diverse),
        n_diverse=cfg.get("n_diverse", _JUDGE.n_diverse),
        max_tokens=cfg.get("max_tokens", _JUDGE.max_tokens),
        top_logprobs_requested=cfg.get("top_logprobs", _JUDGE.top_logprobs_requested),
        epsilon_prob=cfg.get("epsilon_prob", _JUDGE.epsilon_prob),
        request_timeout=cfg.get("timeout", _JUDGE.request_timeout),
        max_retries=cfg.get("max_retries", _JUDGE.max_retries),
        max_concurrent_requests=cfg.get("concurrency", _JUDGE.max_concurrent_requests),
        api_key_env=cfg["api_key_env"],
        prompt_version=cfg.get("prompt_version", TEMPLATE_VERSION),
        seed=cfg.get("seed") if "t_greedy" in cfg else None,
    )


def _judge_client(cfg: dict, jc: JudgeConfig):
    if cfg["mock"]:
        return ScriptedClient.from_file(cfg["mock"])
    return ChatClient(
        jc.endpoint,
        jc.model,
        api_key_env=jc.api_key_env,
        timeout=jc.request_timeout,
        max_retries=jc.max_retries,
        max_concurrent_requests=jc.max_concurrent_requests,
    )


def cmd_sample(args, cfg) -> int:
    jc = _judge_config(cfg)
    cases = _load_cases(args.cases)
    client = _judge_client(cfg, jc)
    client.probe()  # fail before touching the store
    inputs = [args.cases] + ([cfg["mock"]] if cfg["mock"] else [])
    manifest = RunManifest.start("sample", {"cli": cfg, "judge": jc.to_dict()}, inputs, [] if jc.seed is None else [jc.seed])
    store = SampleStore(args.output)
    failures_path = Path(args.output).with_name(Path(args.output).name + ".failures.jsonl")
    failures = []
    done = parsed = total = 0
    with ThreadPoolExecutor(max_workers=jc.max_concurrent_requests) as pool:
        for case in cases:
            if case.case_id in store:
                continue
            if cfg["limit"] is not None and done >= cfg["limit"]:
                break
            try:
                v = sample_step(case, jc, client, pool)
            except StepSamplingError as exc:
                logger.error("%s", exc)
                failures.append({"case_id": exc.case_id, "cause": exc.cause})
                continue
            store.append(v)
            done += 1
            parsed += sum(s.parse_ok for s in v.diverse_samples)
            total += len(v.diverse_samples)
            logger.info("%s parse rate %.2f", case.case_id, v.parse_rate)
    if failures:
        write_jsonl(failures_path, failures)
    elif failures_path.exists():
        failures_path.unlink()
    if Path(args.output).exists():
        manifest.extra = {"new_cases": done, "failed_cases": len(failures), "stored_cases": len(store)}
        manifest.finish([args.output], manifest_path(args.output))
    rate = parsed / total if total else 0.0
    print(f"sampled {done} new step(s), {len(store)} stored, {len(failures)} failed; diverse parse rate {rate:.3f}")
    return EXIT_TRANSPORT if failures else EXIT_OK


def cmd_estimate(args, cfg) -> int:
    names = [n.strip() for n in cfg["estimators"].split(",") if n.strip()]
    unknown = set(names) - set(DEFAULT_ESTIMATORS)
    if unknown:
        raise UsageError(f"unknown estimators: {sorted(unknown)}")
    verifications = load_verifications(args.samples)
    inputs = [args.samples]
    skipped: dict[str, str] = {}

    client = jc = None
    cases: dict[str, StepCase] = {}
    if "p_true" in names:
        if not cfg["cases"] or not (cfg["mock"] or cfg["endpoint"]):
            skipped["p_true"] = "needs --cases and a judge (--mock or --endpoint)"
        else:
            jc = _judge_config(cfg)
            client = _judge_client(cfg, jc)
            cases = {c.case_id: c for c in _load_cases(cfg["cases"])}
            inputs += [cfg["cases"]] + ([cfg["mock"]] if cfg["mock"] else [])
    embedder = None
    if "seu" in names:
        if cfg["embeddings"]:
            embedder = ScriptedEmbedder.from_file(cfg["embeddings"])
            inputs.append(cfg["embeddings"])
        elif cfg["embed_endpoint"]:
            embedder = HttpEmbedder(cfg["embed_endpoint"], cfg["embed_model"], api_key_env=cfg["api_key_env"])
        else:
            skipped["seu"] = "needs --embeddings or --embed-endpoint"
    for name, reason in skipped.items():
        logger.warning("skipping %s: %s", name, reason)

    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["n_seeds"]))
    manifest = RunManifest.start("estimate", cfg, inputs, seeds)
    records: list[UncertaintyRecord] = []
    for v in verifications:
        records += estimate_step(
            v,
            names,
            case=cases.get(v.case_id),
            judge_cfg=jc,
            client=client,
            embedder=embedder,
            random_seeds=seeds,
        )
    write_jsonl(args.output, (r.to_dict() for r in records))
    unavailable = sum(r.score is None for r in records)
    manifest.extra = {"skipped": skipped, "unavailable_records": unavailable}
    manifest.finish([args.output], manifest_path(args.output))
    print(f"wrote {len(records)} record(s) for {len(verifications)} step(s); {unavailable} unavailable")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    verifications = load_verifications(args.samples)
    records = [UncertaintyRecord.from_dict(r) for r in read_jsonl(args.records)]
    skipped = {}
    mpath = manifest_path(args.records)
    if mpath.exists():
        skipped = RunManifest.load(mpath).extra.get("skipped", {})
    manifest = RunManifest.start("evaluate", cfg, [args.samples, args.records])
    report = evaluate(verifications, records, skipped)
    Path(args.output).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    csv_path = Path(cfg["csv"] or Path(args.output).with_suffix(".csv"))
    csv_path.write_text(flat_csv(report), encoding="utf-8", newline="")
    manifest.finish([args.output, csv_path], manifest_path(args.output))
    print(
        f"{report.n_steps} steps: verification accuracy {report.verification_accuracy:.3f}, "
        f"F1 {report.verification_f1:.3f}, positive rate {report.positive_rate:.3f}"
    )
    for name, m in report.estimators.items():
        roc = "n/a" if m.auroc is None else f"{m.auroc:.3f}"
        print(f"  {name:22s} AUROC {roc}  AU-F1C {m.au_f1c:.3f}")
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    report = EvalReport.from_dict(json.loads(Path(args.report).read_text(encoding="utf-8")))
    manifest = RunManifest.start("report", cfg, [args.report])
    written = render(report, args.output)
    manifest.finish(written, Path(args.output) / "report.manifest.json")
    for p in written:
        print(p)
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    sim_cfg = SimConfig(**{k: (float(v) if k.endswith("concentration") else v) for k, v in cfg.items()})
    manifest = RunManifest.start("simulate", sim_cfg.to_dict(), [], [sim_cfg.seed])
    corpus = generate_corpus(sim_cfg)
    paths = corpus.write(args.output)
    manifest.finish(paths.values(), Path(args.output) / "simulate.manifest.json")
    print(f"wrote {len(corpus.cases)} steps over {sim_cfg.n_questions} solutions to {args.output}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"stepuq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"stepuq: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (IngestError, ValidationError, json.JSONDecodeError, KeyError, ValueError, OSError) as exc:
        print(f"stepuq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
