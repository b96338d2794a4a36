"""Serialize generation results as JSON-ready dicts and readable text."""
from __future__ import annotations

import json

from .planner import GenerationResult
from .tag import render_tree
from .terms import format_term


def intent_dict(result: GenerationResult) -> dict:
    """The communicative intent of the final state, plus its failure report if any."""
    state = result.state
    out = {
        "tokens": result.tokens,
        "derivation": state.derivation.to_dict(),
        "assertion": [format_term(a) for a in state.assertion],
        "presupposition": [format_term(a) for a in state.presupposition],
        "pragmatics": [format_term(a) for a in state.pragmatics],
        "sigma": {v.name: format_term(t) for v, t in state.sigma.items()},
        "assertion_links": [link.to_dict() for link in state.assertion_links],
        "presupposition_links": [link.to_dict() for link in state.presupposition_links],
        "pragmatics_links": [link.to_dict() for link in state.pragmatics_links],
        "update_proofs": [u.to_dict() for u in state.updates],
        "network_domains": state.network.to_dict(),
        "rank_trace": [entry.to_dict() for entry in result.trace],
    }
    if not result.success:
        out["failure"] = result.failure_report()
    return out


def to_json(result: GenerationResult) -> str:
    return json.dumps(intent_dict(result), indent=2, ensure_ascii=False)


def to_text(result: GenerationResult) -> str:
    data = intent_dict(result)
    lines = [" ".join(data["tokens"])]
    if not result.success:
        failure = data["failure"]
        lines.append(f"FAILED: {failure['reason']}")
        for u in failure["unachieved_updates"]:
            lines.append(f"  unachieved update: {u}")
        for v, dom in failure["ambiguous"].items():
            lines.append(f"  ambiguous {v}: {{{', '.join(dom)}}}")
        for v in failure["unresolved"]:
            lines.append(f"  unresolved anaphor {v}")
        for f in failure["flaws"]:
            lines.append(f"  flaw: {f}")
        for p in failure["problems"]:
            lines.append(f"  post-check: {p}")
    lines.append("")
    lines.append("derived tree:")
    lines.extend("  " + line for line in render_tree(result.state.tree).splitlines())
    lines.append("sigma: " + ", ".join(f"{k}={v}" for k, v in data["sigma"].items()))
    for section in ("assertion", "presupposition", "pragmatics"):
        lines.append(f"{section}:")
        for link in data[f"{section}_links"]:
            lines.append(f"  {link['instance']}  [{link['modality']}]  " + "; ".join(link["proof"]))
    lines.append("updates:")
    for u in data["update_proofs"]:
        mark = "achieved" if u["achieved"] else "NOT achieved"
        lines.append(f"  {u['update']}: {mark}" + (f"  via {'; '.join(u['proof'])}" if u["proof"] else ""))
    lines.append("hearer domains:")
    for v, dom in data["network_domains"].items():
        lines.append(f"  {v}: " + ("unresolved" if dom is None else "{" + ", ".join(dom) + "}"))
    lines.append("rank trace:")
    lines.extend("  " + entry.describe() for entry in result.trace)
    return "\n".join(lines)
