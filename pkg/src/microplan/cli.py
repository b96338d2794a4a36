"""Command-line front end: generate, prove and realize."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .grammar import GrammarError, MorphGap, load_grammars
from .planner import MicroplanningProblem, ProblemError, generate_greedy, load_problem
from .prover import DEFAULT_DEPTH, FragmentError, load_kb, prove
from .report import to_json, to_text
from .sexpr import ParseError
from .tag import Derivation, ReplayError, replay_derivation, surface_tokens
from .terms import format_term

OK, FAILED, BAD_INPUT = 0, 1, 2


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microplan", description="Sentence planning with a lexicalized TAG.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--depth", type=_positive, default=DEFAULT_DEPTH, help="proof depth bound")
        p.add_argument("--trace", type=int, choices=(0, 1, 2), default=0, help="trace verbosity on stderr")
        p.add_argument("--format", choices=("text", "json"), default="text")

    gen = sub.add_parser("generate", help="plan a sentence for a problem")
    gen.add_argument("--grammar", action="append", required=True, help="grammar file; repeat to merge")
    gen.add_argument("--kb", required=True)
    gen.add_argument("--problem", required=True)
    gen.add_argument("--steps", type=_positive, help="step bound (default scales with the update count)")
    common(gen)

    pr = sub.add_parser("prove", help="answer a query against a knowledge base")
    pr.add_argument("--kb", required=True)
    pr.add_argument("--query", required=True)
    common(pr)

    rz = sub.add_parser("realize", help="replay a derivation and print its words")
    rz.add_argument("--grammar", action="append", required=True)
    rz.add_argument("--derivation", required=True, help="derivation record or full JSON report")
    common(rz)
    return parser


def cmd_generate(args) -> int:
    grammar = load_grammars(args.grammar)
    kb = load_kb(args.kb)
    problem = MicroplanningProblem(grammar, kb, load_problem(args.problem), args.depth)

    def on_step(entry, neighbors, rejections) -> None:
        if args.trace >= 1:
            print(entry.describe(), file=sys.stderr)
        if args.trace >= 2:
            for n in neighbors:
                s = n.last_step
                print(f"    candidate {s.lexeme}/{s.construction}@{'.'.join(map(str, s.site)) or 'root'} {n.key.to_dict()}", file=sys.stderr)
            for r in rejections:
                print(f"    rejected {r}", file=sys.stderr)

    result = generate_greedy(problem, args.steps, on_step)
    if args.format == "json":
        print(to_json(result))
    else:
        print(to_text(result))
    return OK if result.success else FAILED


def cmd_prove(args) -> int:
    kb = load_kb(args.kb)
    search = prove(kb, args.query, limit=args.depth)
    count = 0
    answers = []
    for answer in search:
        count += 1
        answers.append(answer)
        if args.format == "text":
            print(answer.describe() or "true")
            print("  proof: " + "; ".join(step.describe() for step in answer.proof))
    if args.format == "json":
        print(json.dumps(
            {
                "answers": [
                    {
                        "substitution": {v.name: format_term(t) for v, t in a.substitution.items()},
                        "proof": [step.describe() for step in a.proof],
                        "depth": a.depth,
                    }
                    for a in answers
                ],
                "depth_bound_reached": search.exhausted,
            },
            indent=2,
        ))
    elif count == 0:
        print("no answers" + (" (depth bound reached; not a refutation)" if search.exhausted else ""))
    elif search.exhausted and args.trace:
        print("note: depth bound cut some branches", file=sys.stderr)
    return OK if count else FAILED


def cmd_realize(args) -> int:
    grammar = load_grammars(args.grammar)
    try:
        data = json.loads(Path(args.derivation).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReplayError(f"{args.derivation}: not JSON: {exc}") from exc
    if isinstance(data, dict) and "derivation" in data and "element" not in data:
        data = data["derivation"]
    if not isinstance(data, dict):
        raise ReplayError(f"{args.derivation}: no derivation record")
    tree = replay_derivation(Derivation.from_dict(data), grammar)
    tokens = surface_tokens(tree, grammar)
    if args.format == "json":
        print(json.dumps({"tokens": tokens}))
    else:
        print(" ".join(tokens))
    return OK


COMMANDS = {"generate": cmd_generate, "prove": cmd_prove, "realize": cmd_realize}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.trace >= 2 else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (OSError, ParseError, GrammarError, ProblemError, FragmentError, ReplayError, MorphGap) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
