from collections import OrderedDict
from dataclasses import MISSING, Field, fields, is_dataclass
from enum import Enum
from typing import Any, Callable, Dict, Mapping, Type, TypeVar

from .errors import ArgumentError, UsageError

T_CONFIG = TypeVar("T_CONFIG")

_NONE_TEXTS = ("", "none", "null")
_TRUE_TEXTS = ("1", "true", "yes", "on")
_FALSE_TEXTS = ("0", "false", "no", "off")


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE_TEXTS:
        return True
    if lowered in _FALSE_TEXTS:
        return False
    raise ValueError(f"not a boolean: {text}")


def tuple_of(item_parser: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        return tuple(item_parser(item.strip()) for item in text.split(",") if item.strip())

    return parse


def optional(parser: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        if text.strip().lower() in _NONE_TEXTS:
            return None
        return parser(text)

    return parse


def _default_of(f: Field):
    if f.default is not MISSING:
        return f.default
    if f.default_factory is not MISSING:
        return f.default_factory()
    return None


def field_parser(f: Field) -> Callable[[str], Any]:
    """
    Parser of one config field: metadata["parse"] if given, otherwise derived from the default value's type.
    """
    parser = f.metadata.get("parse")
    if parser is not None:
        return parser
    default = _default_of(f)
    if isinstance(default, bool):
        return parse_bool
    if isinstance(default, Enum):
        return type(default).from_val
    if isinstance(default, (int, float)):
        return type(default)
    if isinstance(default, tuple):
        return tuple_of(type(default[0]) if default else str)
    return str


def config_items(config, section: str) -> "OrderedDict[str, str]":
    """
    :return: "section.key" -> formatted value, in field order
    """
    result = OrderedDict()
    for f in fields(config):
        if f.metadata.get("skip"):
            continue
        formatter = f.metadata.get("format", format_value)
        result[f"{section}.{f.name}"] = formatter(getattr(config, f.name))
    return result


def config_from_items(cls: Type[T_CONFIG], items: Mapping[str, str], section: str,
                      base: T_CONFIG = None) -> T_CONFIG:
    """
    Builds cls from "section.key" items, starting from base (or the defaults).
    Unknown keys of this section raise UsageError; keys of other sections are ignored.
    """
    assert is_dataclass(cls)
    known = {f.name: f for f in fields(cls) if not f.metadata.get("skip")}
    values: Dict[str, Any] = {}
    if base is not None:
        values.update({f.name: getattr(base, f.name) for f in fields(cls)})
    prefix = f"{section}."
    for key, text in items.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        f = known.get(name)
        if f is None:
            raise UsageError(f"Unknown config key: {key}. Expected one of {[prefix + k for k in known]}")
        try:
            values[name] = field_parser(f)(text)
        except (TypeError, ValueError) as e:
            raise ArgumentError(f"Invalid value for {key}: {text!r} ({e})") from e
    return cls(**values)
