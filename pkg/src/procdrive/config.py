"""Flat TOML-backed configuration for rewards, tracks, and scenarios.

The on-disk format keeps one section per reward term with the form's named
parameters as keys and gamma at top level. Serialization formats floats with
repr(), so parse -> serialize -> parse is bit-exact.
"""
from __future__ import annotations

import json
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .rewards import ConfigError, RewardSpec, RewardTerm, spec_from_dict, spec_to_dict


# ---------------------------------------------------------------- TOML out

def _fmt_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt_scalar(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def _is_table_array(value: Any) -> bool:
    return (isinstance(value, (list, tuple)) and len(value) > 0
            and all(isinstance(v, Mapping) for v in value))


def _emit(prefix: str, table: Mapping, lines: list[str]) -> None:
    tables = []
    arrays = []
    for key, value in table.items():
        if isinstance(value, Mapping):
            tables.append((key, value))
        elif _is_table_array(value):
            arrays.append((key, value))
        else:
            lines.append(f"{key} = {_fmt_scalar(value)}")
    for key, value in tables:
        path = f"{prefix}{key}"
        lines.append("")
        lines.append(f"[{path}]")
        _emit(path + ".", value, lines)
    for key, items in arrays:
        path = f"{prefix}{key}"
        for item in items:
            lines.append("")
            lines.append(f"[[{path}]]")
            _emit(path + ".", item, lines)


def dumps_toml(doc: Mapping) -> str:
    """Serialize a nested dict document to TOML text."""
    lines: list[str] = []
    _emit("", doc, lines)
    return "\n".join(lines).lstrip("\n") + "\n"


def loads_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


# ---------------------------------------------------------------- rewards

def reward_from_doc(doc: Mapping) -> RewardSpec:
    doc = dict(doc)
    try:
        gamma = doc.pop("gamma")
    except KeyError:
        raise ConfigError("reward config needs top-level 'gamma'") from None
    try:
        term_docs = doc.pop("term")
    except KeyError:
        raise ConfigError("reward config needs at least one [[term]]") from None
    if doc:
        raise ConfigError(f"unexpected top-level keys {sorted(doc)} in reward config")
    terms = []
    for i, td in enumerate(term_docs):
        td = dict(td)
        try:
            feature = td.pop("feature")
        except KeyError:
            raise ConfigError(f"term {i} needs a 'feature' key") from None
        terms.append(RewardTerm(str(feature), spec_from_dict(td)))
    return RewardSpec(tuple(terms), float(gamma))


def reward_to_doc(spec: RewardSpec) -> dict:
    terms = []
    for term in spec.terms:
        d = {"feature": term.feature}
        fn = spec_to_dict(term.fn)
        d["form"] = fn.pop("form")
        d.update(fn)
        terms.append(d)
    return {"gamma": spec.gamma, "term": terms}


def parse_reward(text: str) -> RewardSpec:
    return reward_from_doc(loads_toml(text))


def dump_reward(spec: RewardSpec) -> str:
    return dumps_toml(reward_to_doc(spec))


def load_reward(path) -> RewardSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_reward(fh.read())
