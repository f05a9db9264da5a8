"""JSON reading and writing for models, trees and line-oriented corpora."""

from __future__ import annotations

import json
import math
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Any, Iterator

from .core import (
    DIRECTIONS, EPS, STOP, TRANSITION, AcceptorAction, ConstrainedTransducerModel,
    HeadAcceptor, HeadTransducer, ModelFormatError, RelationalAcceptorModel,
    TransducerAction, TransductionModel, renormalize,
)

FORMAT_VERSION = 1

_KEYS = {
    "acceptor_model": {"vocab", "relations", "automata", "dependency_params",
                       "lexicon_params", "top_params"},
    "transduction_model": {"source_vocab", "target_vocab", "transducers",
                           "bilingual_lexicon", "top_params"},
    "constrained_transducer_model": {"source_vocab", "target_vocab", "params", "top_params"},
}
_ACCEPTOR_ACTION_KEYS = {"kind", "symbol", "next", "p"}
_TRANSDUCER_ACTION_KEYS = {"kind", "src", "tgt", "src_dir", "tgt_dir", "next", "p"}


def round12(x: Any) -> Any:
    """Recursively round floats to 12 significant digits for output."""
    if isinstance(x, float):
        if math.isfinite(x):
            return float(f"{x:.12g}")
        return x
    if isinstance(x, dict):
        return {k: round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round12(v) for v in x]
    return x


def dumps(obj: Any, indent=None) -> str:
    return json.dumps(round12(obj), ensure_ascii=False, indent=indent)


# ---------------------------------------------------------------------------
# reading helpers


def _expect(cond, where, msg):
    if not cond:
        raise ModelFormatError(f"{where}: {msg}")


def _check_keys(obj, allowed, where, required=()):
    _expect(isinstance(obj, dict), where, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    _expect(not unknown, where, f"unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    _expect(not missing, where, f"missing keys {missing}")


def _prob(x, where):
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool), where, f"probability must be a number, got {x!r}")
    return float(x)


def _strings(x, where) -> tuple[str, ...]:
    _expect(isinstance(x, list) and all(isinstance(s, str) for s in x), where, "expected an array of strings")
    return tuple(s for s in x if s != EPS)


def _map(x, where) -> dict:
    _expect(isinstance(x, dict), where, "expected an object")
    return x


def _state_index(key, where) -> int:
    try:
        return int(key)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{where}: state key {key!r} is not an integer") from None


def _acceptor(obj, where) -> HeadAcceptor:
    _check_keys(obj, {"id", "alphabet", "initial", "states"}, where, required=("id", "states"))
    states = []
    _expect(isinstance(obj["states"], list), where, "states must be an array")
    for q, acts in enumerate(obj["states"]):
        _expect(isinstance(acts, list), f"{where}.states[{q}]", "expected an array of actions")
        row = []
        for i, a in enumerate(acts):
            aw = f"{where}.states[{q}][{i}]"
            _check_keys(a, _ACCEPTOR_ACTION_KEYS, aw, required=("kind", "p"))
            _expect(a["kind"] in (STOP,) + DIRECTIONS, aw, f"bad action kind {a['kind']!r}")
            row.append(AcceptorAction(a["kind"], a.get("symbol"), a.get("next"), _prob(a["p"], aw)))
        states.append(tuple(row))
    alphabet = obj.get("alphabet", "relation")
    _expect(alphabet in ("word", "relation"), where, f"bad alphabet {alphabet!r}")
    return HeadAcceptor(str(obj["id"]), tuple(states), alphabet, int(obj.get("initial", 0)))


def _transducer(obj, where) -> HeadTransducer:
    _check_keys(obj, {"id", "initial", "states"}, where, required=("id", "states"))
    states = []
    _expect(isinstance(obj["states"], list), where, "states must be an array")
    for q, acts in enumerate(obj["states"]):
        _expect(isinstance(acts, list), f"{where}.states[{q}]", "expected an array of actions")
        row = []
        for i, a in enumerate(acts):
            aw = f"{where}.states[{q}][{i}]"
            _check_keys(a, _TRANSDUCER_ACTION_KEYS, aw, required=("kind", "p"))
            _expect(a["kind"] in (STOP, TRANSITION), aw, f"bad action kind {a['kind']!r}")
            row.append(TransducerAction(a["kind"], a.get("src"), a.get("tgt"), a.get("src_dir"),
                                        a.get("tgt_dir"), a.get("next"), _prob(a["p"], aw)))
        states.append(tuple(row))
    return HeadTransducer(str(obj["id"]), tuple(states), int(obj.get("initial", 0)))


def _pair_table(obj, where) -> dict:
    out = {}
    for w, row in _map(obj, where).items():
        for v, p in _map(row, f"{where}[{w}]").items():
            out[(w, v)] = _prob(p, f"{where}[{w}][{v}]")
    return out


def _state_table(obj, where) -> dict:
    """{m: {"q": p}} -> {(m, q): p}"""
    out = {}
    for m, row in _map(obj, where).items():
        for q, p in _map(row, f"{where}[{m}]").items():
            out[(m, _state_index(q, f"{where}[{m}]"))] = _prob(p, f"{where}[{m}][{q}]")
    return out


def model_from_json(doc: dict, renormalize_model: bool = False):
    """Build a model object from a parsed JSON document."""
    _expect(isinstance(doc, dict), "model", "top level must be an object")
    _expect(doc.get("format_version") == FORMAT_VERSION, "model.format_version",
            f"expected {FORMAT_VERSION}, got {doc.get('format_version')!r}")
    kind = doc.get("kind")
    _expect(kind in _KEYS, "model.kind", f"unknown kind {kind!r}")
    _check_keys(doc, _KEYS[kind] | {"format_version", "kind"}, "model")

    if kind == "acceptor_model":
        automata = {}
        for i, a in enumerate(doc.get("automata", [])):
            acc = _acceptor(a, f"automata[{i}]")
            _expect(acc.id not in automata, f"automata[{i}]", f"duplicate automaton id {acc.id!r}")
            automata[acc.id] = acc
        dep = {}
        for w, rows in _map(doc.get("dependency_params", {}), "dependency_params").items():
            for r, dist in _map(rows, f"dependency_params[{w}]").items():
                where = f"dependency_params[{w}][{r}]"
                dep[(w, r)] = {d: _prob(p, where) for d, p in _map(dist, where).items()}
        lex = {}
        for r, rows in _map(doc.get("lexicon_params", {}), "lexicon_params").items():
            for w, dist in _map(rows, f"lexicon_params[{r}]").items():
                lex[(r, w)] = _state_table(dist, f"lexicon_params[{r}][{w}]")
        top = {}
        for w, dist in _map(doc.get("top_params", {}), "top_params").items():
            for (m, q), p in _state_table(dist, f"top_params[{w}]").items():
                top[(w, m, q)] = p
        model = RelationalAcceptorModel(
            _strings(doc.get("vocab", []), "vocab"), _strings(doc.get("relations", []), "relations"),
            automata, dep, lex, top)
    elif kind == "transduction_model":
        transducers = {}
        for i, t in enumerate(doc.get("transducers", [])):
            tr = _transducer(t, f"transducers[{i}]")
            _expect(tr.id not in transducers, f"transducers[{i}]", f"duplicate transducer id {tr.id!r}")
            transducers[tr.id] = tr
        lexicon = {}
        for w, rows in _map(doc.get("bilingual_lexicon", {}), "bilingual_lexicon").items():
            for v, dist in _map(rows, f"bilingual_lexicon[{w}]").items():
                where = f"bilingual_lexicon[{w}][{v}]"
                lexicon[(w, v)] = {m: _prob(p, where) for m, p in _map(dist, where).items()}
        model = TransductionModel(
            _strings(doc.get("source_vocab", []), "source_vocab"),
            _strings(doc.get("target_vocab", []), "target_vocab"),
            transducers, lexicon, _pair_table(doc.get("top_params", {}), "top_params"))
    else:
        params = {}
        for w, rows in _map(doc.get("params", {}), "params").items():
            for v, row in _map(rows, f"params[{w}]").items():
                where = f"params[{w}][{v}]"
                _check_keys(row, {"stop", "transitions"}, where)
                dist = {}
                if "stop" in row:
                    dist[STOP] = _prob(row["stop"], where + ".stop")
                for dw, a in _map(row.get("transitions", {}), where + ".transitions").items():
                    for dv, b in _map(a, f"{where}.transitions[{dw}]").items():
                        for d1, c in _map(b, f"{where}.transitions[{dw}][{dv}]").items():
                            for d2, p in _map(c, f"{where}.transitions[{dw}][{dv}][{d1}]").items():
                                dist[(dw, dv, d1, d2)] = _prob(p, where)
                params[(w, v)] = dist
        model = ConstrainedTransducerModel(
            _strings(doc.get("source_vocab", []), "source_vocab"),
            _strings(doc.get("target_vocab", []), "target_vocab"),
            params, _pair_table(doc.get("top_params", {}), "top_params"))
    return renormalize(model) if renormalize_model else model


def load_model(path, renormalize_model: bool = False):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    try:
        return model_from_json(doc, renormalize_model)
    except ModelFormatError as e:
        raise ModelFormatError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# writing


def _acceptor_to_json(a: HeadAcceptor) -> dict:
    states = []
    for acts in a.states:
        row = []
        for act in acts:
            if act.kind == STOP:
                row.append({"kind": STOP, "p": act.prob})
            else:
                row.append({"kind": act.kind, "symbol": act.symbol, "next": act.next_state, "p": act.prob})
        states.append(row)
    return {"id": a.id, "alphabet": a.alphabet, "initial": a.initial, "states": states}


def _transducer_to_json(t: HeadTransducer) -> dict:
    states = []
    for acts in t.states:
        row = []
        for act in acts:
            if act.kind == STOP:
                row.append({"kind": STOP, "p": act.prob})
            else:
                row.append({"kind": TRANSITION, "src": act.src, "tgt": act.tgt, "src_dir": act.src_dir,
                            "tgt_dir": act.tgt_dir, "next": act.next_state, "p": act.prob})
        states.append(row)
    return {"id": t.id, "initial": t.initial, "states": states}


def _nest(table: dict, depth_keys) -> dict:
    out: dict = {}
    for key, p in table.items():
        node = out
        parts = depth_keys(key)
        for k in parts[:-1]:
            node = node.setdefault(k, {})
        node[parts[-1]] = p
    return out


def model_to_json(model) -> dict:
    if isinstance(model, RelationalAcceptorModel):
        return {
            "format_version": FORMAT_VERSION, "kind": "acceptor_model",
            "vocab": list(model.vocab), "relations": list(model.relations),
            "automata": [_acceptor_to_json(a) for a in model.automata.values()],
            "dependency_params": _nest(
                {(w, r, d): p for (w, r), dist in model.dependency_params.items() for d, p in dist.items()},
                lambda k: k),
            "lexicon_params": _nest(
                {(r, w, m, str(q)): p for (r, w), dist in model.lexicon_params.items()
                 for (m, q), p in dist.items()}, lambda k: k),
            "top_params": _nest({(w, m, str(q)): p for (w, m, q), p in model.top_params.items()}, lambda k: k),
        }
    if isinstance(model, TransductionModel):
        return {
            "format_version": FORMAT_VERSION, "kind": "transduction_model",
            "source_vocab": list(model.source_vocab), "target_vocab": list(model.target_vocab),
            "transducers": [_transducer_to_json(t) for t in model.transducers.values()],
            "bilingual_lexicon": _nest({(w, v, m): p for (w, v), dist in model.bilingual_lexicon.items()
                                        for m, p in dist.items()}, lambda k: k),
            "top_params": _nest(dict(model.top_params), lambda k: k),
        }
    if isinstance(model, ConstrainedTransducerModel):
        params: dict = {}
        for (w, v), dist in model.params.items():
            row: dict = {}
            if STOP in dist:
                row["stop"] = dist[STOP]
            trans = {e: p for e, p in dist.items() if e != STOP}
            if trans:
                row["transitions"] = _nest(trans, lambda k: k)
            params.setdefault(w, {})[v] = row
        return {
            "format_version": FORMAT_VERSION, "kind": "constrained_transducer_model",
            "source_vocab": list(model.source_vocab), "target_vocab": list(model.target_vocab),
            "params": params,
            "top_params": _nest(dict(model.top_params), lambda k: k),
        }
    raise TypeError(f"not a model: {type(model).__name__}")


def save_model(model, path):
    Path(path).write_text(dumps(model_to_json(model), indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# line-oriented inputs


def read_jsonl(path) -> Iterator[tuple[int, Any]]:
    """Yield (line number, parsed object) for every non-blank line; ``-`` reads stdin."""
    with nullcontext(sys.stdin) if str(path) == "-" else open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ModelFormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None


def read_dictionary(path) -> list[tuple[str, str]]:
    """Tab-separated source/target pairs, one per line."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ModelFormatError(f"{path}:{lineno}: expected 'source<TAB>target'")
            if parts[0] == EPS and parts[1] == EPS:
                raise ModelFormatError(f"{path}:{lineno}: the pair (<eps>, <eps>) is not allowed")
            if tuple(parts) not in pairs:
                pairs.append((parts[0], parts[1]))
    return pairs


def read_corpus(path) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    pairs = []
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            _check_keys(obj, {"src", "tgt"}, where, required=("src", "tgt"))
            src, tgt = obj["src"], obj["tgt"]
            _expect(isinstance(src, list) and isinstance(tgt, list) and src and tgt, where,
                    "src and tgt must be non-empty token arrays")
            _expect(all(isinstance(t, str) for t in src + tgt), where, "tokens must be strings")
        except ModelFormatError as e:
            raise ModelFormatError(str(e)) from None
        pairs.append((tuple(src), tuple(tgt)))
    return pairs
