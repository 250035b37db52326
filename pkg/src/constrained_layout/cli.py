"""Command-line entry point.

Exit codes: 0 success, 1 unsatisfiable spec / failed run / metric below
threshold, 2 bad input (usage, unreadable or malformed files).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import DomainBox
from .io import LayoutDocument, render_svg
from .language import DesignSpec, ObjectDecl, SpecError, TRUE, clauses, expand_default, \
    geometric_formula, parse
from .policy import GRUPolicy, NonFiniteError, PolicyParams, uniform_policy
from .scenarios import Scenario, builtin_scenarios, evaluate, parse_scenario
from .search import BudgetFailure, LayoutSampler, Status, Unsatisfiable, search
from .training import (
    CheckpointError, TrainConfig, load_checkpoint, load_training_state, save_checkpoint, train,
)

OUTPUT_DIR_ENV = "CONSTRAINED_LAYOUT_OUTPUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _output_dir(arg: Optional[str]) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_DIR_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _line_col(text: str, pos: int):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _load_spec(path: str, args) -> DesignSpec:
    text = _read_text(path)
    try:
        spec = parse(text)
        return expand_default(spec, args.default_min, args.default_max)
    except SpecError as exc:
        pos = getattr(exc, "position", None)
        where = "%s:%d:%d" % ((path,) + _line_col(text, pos)) if pos is not None else path
        raise InputError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_params(path: str) -> PolicyParams:
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except CheckpointError as exc:
        raise InputError(str(exc)) from None


def _policy(path: Optional[str]):
    return GRUPolicy(_load_params(path)) if path else uniform_policy()


def _scenario(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.name == name:
            return sc
    if Path(name).is_file():
        try:
            return parse_scenario(_read_text(name))
        except ValueError as exc:
            raise InputError(f"{name}: {exc}") from None
    names = ", ".join(s.name for s in builtin_scenarios())
    raise InputError(f"unknown scenario {name!r}; built-in scenarios: {names}")


def _check_vocab(params: PolicyParams, spec: DesignSpec):
    missing = sorted({o.type_name for o in spec.objects} - set(params.class_vocab) - {None})
    if missing:
        raise InputError(f"checkpoint class vocabulary {list(params.class_vocab)} "
                         f"lacks types {missing}")


# --------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    spec = _load_spec(args.spec, args)
    status, _ = search(DomainBox.for_spec(spec), geometric_formula(spec), args.budget)
    label = {Status.SAT: "SAT", Status.UNSAT: "UNSAT",
             Status.BUDGET_EXCEEDED: "UNKNOWN (search budget exceeded)"}[status]
    print(label)
    print(f"clauses: {len(clauses(spec.constraint))}")
    print(f"objects: {len(spec.objects)} ({len(spec.given)} given)")
    return EXIT_OK if status == Status.SAT else EXIT_FAIL


def cmd_sample(args) -> int:
    spec = _load_spec(args.spec, args)
    policy = _policy(args.checkpoint)
    try:
        sampler = LayoutSampler(spec, args.budget)
    except Unsatisfiable as exc:
        print(f"UNSAT: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = _output_dir(args.out_dir) if args.save else None
    for i, ss in enumerate(np.random.SeedSequence(args.seed).spawn(args.n)):
        try:
            layout = sampler.sample(policy, np.random.default_rng(ss))
        except BudgetFailure as exc:
            print(f"sample {i}: {exc}", file=sys.stderr)
            return EXIT_FAIL
        doc = LayoutDocument.from_layout(layout, spec)
        print(doc.to_json())
        if out is not None:
            (out / f"layout_{i:04d}.json").write_text(doc.to_json(indent=2) + "\n", encoding="utf-8")
            if args.svg:
                (out / f"layout_{i:04d}.svg").write_text(render_svg(doc), encoding="utf-8")
    return EXIT_OK


def _dataset_from_file(path: str):
    examples = []
    for lineno, line in enumerate(_read_text(path).splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = LayoutDocument.from_json(line)
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        spec = DesignSpec(tuple(ObjectDecl(o.id, o.type, o.properties) for o in doc.objects), TRUE)
        examples.append((spec, doc.boxes()))
    if not examples:
        raise InputError(f"{path}: no examples")
    return examples


def cmd_train(args) -> int:
    scenario = None
    if Path(args.source).is_file() and args.source.endswith((".jsonl", ".json")):
        dataset = _dataset_from_file(args.source)
        name = Path(args.source).stem
    else:
        scenario = _scenario(args.source)
        dataset = scenario.dataset(args.examples, args.seed)
        name = scenario.name
    vocab = tuple(sorted({o.type_name for spec, _ in dataset for o in spec.objects} - {None}))

    out = _output_dir(args.out_dir)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / f"{name}.ckpt.json"
    log_path = ckpt.with_name(ckpt.name.replace(".ckpt.json", "") + ".loss.csv")
    start, opt = 0, None
    if args.resume:
        try:
            params, start, opt = load_training_state(args.resume)
        except OSError as exc:
            raise InputError(f"cannot read checkpoint {args.resume}: {exc.strerror}") from None
        except CheckpointError as exc:
            raise InputError(str(exc)) from None
    else:
        params = PolicyParams.init(vocab, args.hidden_size, np.random.default_rng(args.seed))
    config = TrainConfig(lr=args.lr, batch=args.batch, epochs=args.epochs,
                         teacher_forcing_p=args.teacher_forcing, seed=args.seed)
    try:
        result = train(dataset, params, config, optimizer=opt, start_epoch=start)
    except NonFiniteError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    save_checkpoint(result.params, ckpt, epochs_done=result.epochs_done, optimizer=result.optimizer)
    mode = "a" if args.resume and log_path.exists() else "w"
    with open(log_path, mode, encoding="utf-8") as fh:
        fh.write(result.loss_log(start + 1))
    print(f"checkpoint: {ckpt}")
    print(f"loss log: {log_path}")
    print(f"epochs: {result.epochs_done}, final mean nll: {result.losses[-1]:.5f}")
    if scenario is not None and args.n > 0:
        m = evaluate(GRUPolicy(result.params), scenario, args.n, args.seed)
        print(f"preference accuracy: {m.preference_accuracy:.3f}")
        print(f"constraint accuracy: {m.constraint_accuracy:.3f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    scenario = _scenario(args.scenario)
    if args.checkpoint:
        params = _load_params(args.checkpoint)
        _check_vocab(params, scenario.spec())
        policy = GRUPolicy(params)
    else:
        policy = uniform_policy()
    m = evaluate(policy, scenario, args.n, args.seed, args.budget)
    print(f"constraint_accuracy: {m.constraint_accuracy:.3f}")
    print(f"preference_accuracy: {m.preference_accuracy:.3f}")
    print(m.line(scenario.name))
    if args.min_pref is not None and m.preference_accuracy < args.min_pref:
        return EXIT_FAIL
    return EXIT_OK


def cmd_render(args) -> int:
    text = _read_text(args.layout).strip()
    try:
        try:
            doc = LayoutDocument.from_json(text)
        except json.JSONDecodeError:
            # JSON-lines output of `sample`: render the first layout
            doc = LayoutDocument.from_json(text.splitlines()[0])
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise InputError(f"{args.layout}: {exc}") from None
    svg = render_svg(doc)
    if args.output:
        Path(args.output).write_text(svg, encoding="utf-8")
    else:
        sys.stdout.write(svg)
    return EXIT_OK


def cmd_gen_scenario(args) -> int:
    scenario = _scenario(args.scenario)
    if args.n == 0:
        sys.stdout.write(scenario.to_text())
        return EXIT_OK
    spec = scenario.spec()
    for _, layout in scenario.dataset(args.n, args.seed):
        print(LayoutDocument.from_layout(layout, spec).to_json())
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="constrained-layout",
                                description="Constraint-guaranteed layout sampling.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def spec_flags(sp):
        sp.add_argument("--default-min", type=int, default=256,
                        help="minimum width/height implied by default(o)")
        sp.add_argument("--default-max", type=int, default=512,
                        help="maximum width/height implied by default(o)")
        sp.add_argument("--budget", type=int, default=None,
                        help="node budget per feasibility search")

    sp = sub.add_parser("check", help="report whether a spec is satisfiable")
    sp.add_argument("spec")
    spec_flags(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("sample", help="sample layouts as JSON lines")
    sp.add_argument("spec")
    spec_flags(sp)
    sp.add_argument("--checkpoint", help="trained policy (uniform when omitted)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--save", action="store_true", help="also write files to the output dir")
    sp.add_argument("--svg", action="store_true", help="with --save, write SVG renders too")
    sp.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("train", help="train a policy on a scenario or a JSONL dataset")
    sp.add_argument("source", help="built-in scenario name, scenario file, or .jsonl layouts")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--examples", type=int, default=2048)
    sp.add_argument("--hidden-size", type=int, default=64)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--teacher-forcing", type=float, default=0.5)
    sp.add_argument("--checkpoint", help="checkpoint path to write")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--n", type=int, default=256, help="evaluation episodes (0 to skip)")
    sp.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="constraint and preference accuracy on a scenario")
    sp.add_argument("scenario")
    sp.add_argument("--checkpoint", help="trained policy (uniform when omitted)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--budget", type=int, default=None)
    sp.add_argument("--min-pref", type=float, default=None,
                    help="exit 1 if preference accuracy is below this")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("render", help="render a layout JSON document as SVG")
    sp.add_argument("layout")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("gen-scenario",
                        help="print a scenario definition, or generate --n layouts from it")
    sp.add_argument("scenario")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=0)
    sp.set_defaults(func=cmd_gen_scenario)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n", 0) < 0:
        print("error: --n must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
