"""Language registry: ISO 639-1 codes, display names, and rough token counting."""

from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass(frozen=True)
class LangCode:
    """A supported language: lowercase two-letter code plus display names."""

    code: str
    display_name: str  # English name, used as the interlinear line label
    native_name: str  # name in the language itself, used by instruction templates

    def __post_init__(self):
        if not re.fullmatch(r"[a-z]{2}", self.code):
            raise ValueError(f"language code must be two lowercase letters, got {self.code!r}")
        if not self.display_name or not self.native_name:
            raise ValueError(f"language {self.code!r} needs both display names")


_REGISTRY: dict[str, LangCode] = {}


def register_language(code: str, display_name: str, native_name: str) -> LangCode:
    lang = LangCode(code, display_name, native_name)
    _REGISTRY[code] = lang
    return lang


register_language("en", "English", "English")
register_language("de", "German", "Deutsch")
register_language("zh", "Chinese", "中文")


def get_language(code: str) -> LangCode:
    try:
        return _REGISTRY[code]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown language code {code!r} (registered: {known})") from None


def known_languages() -> list[str]:
    return sorted(_REGISTRY)


# CJK ideograph ranges (BMP + extensions), matching common zh tokenizer behavior.
_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0xF900, 0xFAFF),
    (0x2F800, 0x2FA1F),
)


def is_cjk_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def rough_token_count(text: str) -> int:
    """Language-independent token count used for corpus hygiene filters.

    Each CJK ideograph counts as one token; the remaining spans are split on
    whitespace. Cheap, deterministic, and sane for en/de/zh alike.
    """
    count = 0
    run_has_text = False
    for ch in text:
        if is_cjk_char(ch):
            if run_has_text:
                count += 1
                run_has_text = False
            count += 1
        elif ch.isspace():
            if run_has_text:
                count += 1
                run_has_text = False
        else:
            run_has_text = True
    if run_has_text:
        count += 1
    return count
