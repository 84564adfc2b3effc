"""Command-line surface: compile, eval, stats, sample, check-grads.

Batch compilation is deterministic: output lines are ordered by
question_id regardless of worker count, and per-question failures are
counted and skipped rather than aborting the run. Defaults may be
supplied by a JSON config file (--config or the REX_FORGE_CONFIG
environment variable); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import decoder, metrics
from .errors import FractionOutOfRange, RexforgeError
from .explain import (ExplainOptions, GroundedExplanation, compile_explanation,
                      load_default_templates, parse_explanation, parse_templates)
from .interpreter import Quantifier, default_config, execute
from .program import (OpMappingTable, load_default_mapping, map_source_program,
                      parse_mapping_table, parse_program)
from .scene import load_regions, load_scene

logger = logging.getLogger(__name__)

CONFIG_ENV = "REX_FORGE_CONFIG"

CONFIG_KEYS = ("scenes", "regions", "programs", "templates", "mapping", "out",
               "min_iou", "quantifier", "on_miss", "fraction", "seed", "workers")


def _fail(message: str):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(2)


def _require_path(path: str | None, what: str, directory: bool = False) -> Path:
    if path is None:
        _fail(f"missing required path: --{what}")
    p = Path(path)
    if directory and not p.is_dir():
        _fail(f"--{what}: directory not found: {p}")
    if not directory and not p.is_file():
        _fail(f"--{what}: file not found: {p}")
    return p


def _load_config_file(explicit: str | None) -> dict:
    path = explicit or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        _fail(f"config file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            _fail(f"config file {p}: {exc}")
    unknown = set(doc) - set(CONFIG_KEYS)
    if unknown:
        _fail(f"config file {p}: unknown keys {sorted(unknown)}")
    return doc


def _merged(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from the config file, then hard defaults."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    hard = {"min_iou": 0.5, "quantifier": "universal", "on_miss": "drop-token",
            "seed": 0, "workers": 1}
    for key in CONFIG_KEYS:
        if hasattr(args, key) and getattr(args, key) is None:
            value = file_cfg.get(key, defaults.get(key, hard.get(key)))
            setattr(args, key, value)
    return args


# --- compile ---

class _CompileContext:
    """Per-process state for batch compilation (scene/region caches)."""

    def __init__(self, scenes_dir: str, regions_dir: str,
                 templates_path: str | None, mapping_path: str | None,
                 min_iou: float, quantifier: str, on_miss: str):
        self.scenes_dir = Path(scenes_dir)
        self.regions_dir = Path(regions_dir)
        if templates_path:
            with open(templates_path, encoding="utf-8") as fh:
                self.templates = parse_templates(fh.read())
        else:
            self.templates = load_default_templates()
        if mapping_path:
            with open(mapping_path, encoding="utf-8") as fh:
                self.mapping: OpMappingTable = parse_mapping_table(fh.read())
        else:
            self.mapping = load_default_mapping()
        self.exec_config = default_config(Quantifier(quantifier))
        self.options = ExplainOptions(min_iou=min_iou, on_miss=on_miss)
        self._scenes: dict[str, object] = {}
        self._regions: dict[str, object] = {}

    def scene(self, image_id: str):
        if image_id not in self._scenes:
            self._scenes[image_id] = load_scene(self.scenes_dir / f"{image_id}.json")
        return self._scenes[image_id]

    def regions(self, image_id: str):
        if image_id not in self._regions:
            self._regions[image_id] = load_regions(self.regions_dir / f"{image_id}.json")
        return self._regions[image_id]

    def compile_line(self, line: str) -> tuple[str, str, str]:
        doc = json.loads(line)
        if "nodes" in doc:
            program = parse_program(doc)
        else:
            program = map_source_program(doc, self.mapping)
        qid = program.question_id
        if not program.image_id:
            raise RexforgeError("program carries no image_id")
        scene = self.scene(program.image_id)
        regions = self.regions(program.image_id)
        trace = execute(program, scene, self.exec_config)
        expl = compile_explanation(trace, program, scene, regions,
                                   self.templates, self.exec_config, self.options)
        record = explanation_record(expl, image_id=program.image_id,
                                    question=program.question)
        return qid, program.image_id, json.dumps(record, separators=(",", ":"))


def explanation_record(expl: GroundedExplanation, image_id: str,
                       question: str) -> dict:
    """JSONL record for one explanation, with deterministic key order."""
    return {
        "question_id": expl.question_id,
        "image_id": image_id,
        "question": question,
        "answer": expl.answer,
        "explanation": expl.text(),
        "grounding": {str(pos): expl.grounding[pos] for pos in sorted(expl.grounding)},
        "grounded_objects": {oid: expl.grounded_objects[oid]
                             for oid in sorted(expl.grounded_objects)},
        "attributes": [list(pair) for pair in expl.attributes],
    }


_WORKER_CTX: _CompileContext | None = None


def _init_worker(ctx_args: dict) -> None:
    global _WORKER_CTX
    _WORKER_CTX = _CompileContext(**ctx_args)


def _compile_one(item: tuple[int, str]) -> tuple[int, str, str, str]:
    line_no, line = item
    try:
        qid, _, record = _WORKER_CTX.compile_line(line)
        return (line_no, "ok", qid, record)
    except (RexforgeError, OSError, ValueError, KeyError) as exc:
        try:
            qid = str(json.loads(line).get("question_id", ""))
        except ValueError:
            qid = ""
        return (line_no, "skip", qid, type(exc).__name__)


def cmd_compile(args: argparse.Namespace) -> int:
    scenes = _require_path(args.scenes, "scenes", directory=True)
    regions = _require_path(args.regions, "regions", directory=True)
    programs = _require_path(args.programs, "programs")
    if args.templates:
        _require_path(args.templates, "templates")
    if args.mapping:
        _require_path(args.mapping, "mapping")
    if args.out is None:
        _fail("missing required path: --out")
    ctx_args = {"scenes_dir": str(scenes), "regions_dir": str(regions),
                "templates_path": args.templates, "mapping_path": args.mapping,
                "min_iou": float(args.min_iou), "quantifier": args.quantifier,
                "on_miss": args.on_miss}

    with open(programs, encoding="utf-8") as fh:
        lines = [(i, line) for i, line in enumerate(fh) if line.strip()]

    workers = max(1, int(args.workers))
    if workers == 1:
        _init_worker(ctx_args)
        outcomes = [_compile_one(item) for item in lines]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(ctx_args,)) as pool:
            chunk = max(1, len(lines) // (workers * 4))
            outcomes = list(pool.map(_compile_one, lines, chunksize=chunk))

    ok = [(qid, line_no, record) for line_no, status, qid, record in outcomes
          if status == "ok"]
    skips: Counter = Counter()
    for line_no, status, qid, record in outcomes:
        if status == "skip":
            skips[record] += 1
            logger.debug("skipped question %r (line %d): %s", qid, line_no, record)
    ok.sort(key=lambda item: (item[0], item[1]))
    with open(args.out, "w", encoding="utf-8") as fh:
        for _, _, record in ok:
            fh.write(record + "\n")
    print(f"compiled {len(ok)} explanation(s) to {args.out}")
    for name in sorted(skips):
        print(f"skipped {skips[name]} question(s): {name}")
    return 0


# --- eval ---

def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                _fail(f"{path}:{i + 1}: invalid JSON ({exc})")
    return records


def _explanation_from_record(record: dict, n_regions: int) -> GroundedExplanation:
    expl = parse_explanation(str(record.get("explanation", "")), n_regions)
    attributes = tuple((str(f), str(v)) for f, v in record.get("attributes", ()))
    return GroundedExplanation(
        question_id=str(record.get("question_id", "")),
        tokens=expl.tokens,
        answer=str(record.get("answer", "")),
        grounding=expl.grounding,
        grounded_objects={},
        attributes=attributes,
    )


def cmd_eval(args: argparse.Namespace) -> int:
    predictions = _require_path(args.predictions, "predictions")
    references = _require_path(args.references, "references")
    regions_dir = _require_path(args.regions, "regions", directory=True)

    pred_records = {str(r.get("question_id", "")): r for r in _read_jsonl(predictions)}
    ref_records = {str(r.get("question_id", "")): r for r in _read_jsonl(references)}
    if set(pred_records) != set(ref_records):
        only_pred = sorted(set(pred_records) - set(ref_records))[:5]
        only_ref = sorted(set(ref_records) - set(pred_records))[:5]
        _fail(f"prediction/reference question_id mismatch "
              f"(only in predictions: {only_pred}, only in references: {only_ref})")

    regions_by_image = {}
    pairs = []
    for qid in sorted(ref_records):
        ref = ref_records[qid]
        image_id = str(ref.get("image_id", ""))
        if image_id not in regions_by_image:
            regions_by_image[image_id] = load_regions(regions_dir / f"{image_id}.json")
        n = len(regions_by_image[image_id])
        pairs.append(metrics.EvalPair(
            question_id=qid,
            predicted=_explanation_from_record(pred_records[qid], n),
            reference=_explanation_from_record(ref, n),
            question=str(ref.get("question", "")),
            image_id=image_id,
        ))
    report = metrics.evaluate(pairs, regions_by_image)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(report.format_table())
    return 0


# --- stats ---

def cmd_stats(args: argparse.Namespace) -> int:
    programs = _require_path(args.programs, "programs")
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    op_questions: Counter = Counter()
    total = 0
    mapping = load_default_mapping()
    for record in _read_jsonl(programs):
        try:
            if "nodes" in record:
                program = parse_program(record)
            else:
                program = map_source_program(record, mapping)
        except RexforgeError:
            continue
        total += 1
        for op in {node.op.value for node in program.nodes.values()}:
            op_questions[op] += 1
    ops_path = out_dir / "operation_distribution.csv"
    with open(ops_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operation", "questions", "percentage"])
        for op in sorted(op_questions, key=lambda o: (-op_questions[o], o)):
            pct = 100.0 * op_questions[op] / total if total else 0.0
            writer.writerow([op, op_questions[op], f"{pct:.2f}"])
    print(f"wrote {ops_path} ({total} question(s))")

    if args.explanations:
        expl_path = _require_path(args.explanations, "explanations")
        scenes_dir = _require_path(args.scenes, "scenes", directory=True)
        scenes: dict[str, object] = {}
        category_counts: Counter = Counter()
        for record in _read_jsonl(expl_path):
            image_id = str(record.get("image_id", ""))
            if image_id not in scenes:
                scenes[image_id] = load_scene(scenes_dir / f"{image_id}.json")
            for oid in record.get("grounded_objects", {}):
                category_counts[scenes[image_id].get(oid).name] += 1
        total_mentions = sum(category_counts.values())
        cat_path = out_dir / "grounding_categories.csv"
        with open(cat_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "mentions", "percentage"])
            ranked = sorted(category_counts, key=lambda c: (-category_counts[c], c))
            for cat in ranked[:args.top_k]:
                pct = 100.0 * category_counts[cat] / total_mentions
                writer.writerow([cat, category_counts[cat], f"{pct:.2f}"])
        print(f"wrote {cat_path} ({total_mentions} grounded mention(s))")
    return 0


# --- sample ---

def cmd_sample(args: argparse.Namespace) -> int:
    programs = _require_path(args.programs, "programs")
    if args.out is None:
        _fail("missing required path: --out")
    fraction = float(args.fraction) if args.fraction is not None else None
    if fraction is None or not (0.0 < fraction <= 1.0):
        raise FractionOutOfRange(fraction if fraction is not None else float("nan"))

    with open(programs, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    by_type: dict[str, list[int]] = {}
    for i, line in enumerate(lines):
        try:
            reasoning_type = str(json.loads(line).get("reasoning_type", ""))
        except json.JSONDecodeError:
            reasoning_type = ""
        by_type.setdefault(reasoning_type, []).append(i)

    rng = random.Random(int(args.seed))
    chosen: set[int] = set()
    for reasoning_type in sorted(by_type):
        members = by_type[reasoning_type]
        count = round(fraction * len(members))  # banker's rounding, ties to even
        chosen.update(rng.sample(members, count))
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in sorted(chosen):
            fh.write(lines[i] + "\n")
    print(f"sampled {len(chosen)} of {len(lines)} question(s) "
          f"across {len(by_type)} reasoning type(s)")
    return 0


# --- check-grads ---

def cmd_check_grads(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(int(args.seed))
    threshold = 1e-4
    worst = 0.0
    for case_no in range(int(args.cases)):
        n = int(rng.integers(2, 6))        # <= 5 regions
        k = int(rng.integers(n + 2, 13))   # <= 12 vocabulary entries
        d = int(rng.integers(2, 9))        # <= 8 feature dims
        steps = int(rng.integers(2, 5))
        case = decoder.random_case(rng, n=n, k=k, d=d, steps=steps)
        report = decoder.check_gradients(case)
        worst = max(worst, report.max_rel_error)
        print(f"case {case_no:02d} N={n} K={k:2d} D={d} steps={steps} "
              f"max_rel_err={report.max_rel_error:.3e}")
    verdict = "PASS" if worst < threshold else "FAIL"
    print(f"overall max relative error {worst:.3e} "
          f"(threshold {threshold:.1e}): {verdict}")
    return 0 if worst < threshold else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rexforge",
        description="Compile reasoning programs into grounded explanations "
                    "and evaluate them.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (default: "
                                        f"${CONFIG_ENV})")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("compile", help="execute programs and emit explanations")
    add_common(p)
    p.add_argument("--scenes", help="directory of <image_id>.json scene graphs")
    p.add_argument("--regions", help="directory of <image_id>.json region sets")
    p.add_argument("--programs", help="JSONL file of reasoning programs")
    p.add_argument("--templates", help="template table (default: shipped)")
    p.add_argument("--mapping", help="operation mapping table (default: shipped)")
    p.add_argument("--out", help="output JSONL path")
    p.add_argument("--min-iou", dest="min_iou", type=float, default=None)
    p.add_argument("--quantifier", choices=("universal", "existential"), default=None)
    p.add_argument("--on-miss", dest="on_miss", choices=("drop-token", "fail"),
                   default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("eval", help="score predictions against references")
    add_common(p)
    p.add_argument("--predictions", help="predicted explanations JSONL")
    p.add_argument("--references", help="reference explanations JSONL")
    p.add_argument("--regions", help="directory of <image_id>.json region sets")
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="operation and grounding distributions")
    add_common(p)
    p.add_argument("--programs", help="JSONL file of reasoning programs")
    p.add_argument("--explanations", help="compiled explanations JSONL")
    p.add_argument("--scenes", help="directory of scene graphs "
                                    "(for grounded categories)")
    p.add_argument("--out", help="output directory for CSV files")
    p.add_argument("--top-k", dest="top_k", type=int, default=20)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="stratified subset by reasoning type")
    add_common(p)
    p.add_argument("--programs", help="JSONL file of reasoning programs")
    p.add_argument("--out", help="output JSONL path")
    p.add_argument("--fraction", type=float, default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("check-grads", help="verify decoder gradients")
    add_common(p)
    p.add_argument("--cases", type=int, default=50)
    p.set_defaults(func=cmd_check_grads)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _merged(args, {})
    try:
        return args.func(args)
    except RexforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
