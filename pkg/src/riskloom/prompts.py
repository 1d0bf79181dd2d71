"""Prompt templates for the conversational agent and the evaluation agent.

Templates live in ``riskloom/prompts/*.txt`` with ``{USER_NAME}``, ``{SYMPTOM}`` and
``{CHAT}`` placeholders.  The first-turn files are verbatim; the ``*_next`` agent
files swap the fixed first symptom for ``{SYMPTOM}``, and ``eval_first`` drops
every mention of answering "None".
"""

from __future__ import annotations

import enum
import functools
import re
from importlib import resources
from typing import Iterable, Mapping


class StrategyKind(str, enum.Enum):
    SELF_DISCLOSURE = "run0"
    EMPATHY = "run1"
    DIRECT_QUESTION = "run2"


REQUIRED_FIELDS: dict[StrategyKind, tuple[str, ...]] = {
    StrategyKind.SELF_DISCLOSURE: ("reasoning", "message", "experience", "question"),
    StrategyKind.EMPATHY: ("reasoning", "message", "question"),
    StrategyKind.DIRECT_QUESTION: ("reasoning", "question"),
}


class TemplateId(str, enum.Enum):
    RUN0_FIRST = "run0_first"
    RUN1_FIRST = "run1_first"
    RUN2_FIRST = "run2_first"
    RUN0_NEXT = "run0_next"
    RUN1_NEXT = "run1_next"
    RUN2_NEXT = "run2_next"
    EVAL_FIRST = "eval_first"
    EVAL_NEXT = "eval_next"

    @property
    def system_file(self) -> str:
        return self.value.split("_")[0] + ".system.txt"

    @property
    def user_file(self) -> str:
        return self.value + ".user.txt"

    @classmethod
    def agent(cls, strategy: StrategyKind, first: bool) -> "TemplateId":
        return cls(f"{strategy.value}_{'first' if first else 'next'}")

    @classmethod
    def evaluator(cls, first: bool) -> "TemplateId":
        return cls.EVAL_FIRST if first else cls.EVAL_NEXT


class MissingVariable(KeyError):
    def __init__(self, name: str, template: str):
        super().__init__(f"template {template!r} needs {{{name}}}")
        self.name = name


_PLACEHOLDER = re.compile(r"\{([A-Z_]+)\}")
AGENT_LABEL = "Assistant"


@functools.lru_cache(maxsize=None)
def load_template(filename: str) -> str:
    return (resources.files("riskloom") / "prompts" / filename).read_text(encoding="utf-8").rstrip("\n")


def placeholders(text: str) -> set[str]:
    return set(_PLACEHOLDER.findall(text))


def _substitute(text: str, variables: Mapping[str, str], template: str) -> str:
    def repl(m: re.Match) -> str:
        try:
            return str(variables[m.group(1)])
        except KeyError:
            raise MissingVariable(m.group(1), template) from None

    # single pass, so substituted values are never re-expanded
    return _PLACEHOLDER.sub(repl, text)


def render_prompt(template_id: TemplateId | str, variables: Mapping[str, str]) -> tuple[str, str]:
    tid = TemplateId(template_id)
    system = _substitute(load_template(tid.system_file), variables, tid.value)
    user = _substitute(load_template(tid.user_file), variables, tid.value)
    return system, user


def format_chat(turns: Iterable[tuple[str, str]]) -> str:
    """One ``speaker: text`` line per turn, on its own lines so it reads as a block."""
    lines = [f"{speaker}: {' '.join(text.split())}" for speaker, text in turns]
    return "\n" + "\n".join(lines) + "\n"
