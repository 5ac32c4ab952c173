from __future__ import annotations

import enum

from affordmap.basic import ValidationError


__all__ = ["PromptVariant", "build_prompt", "ANSWER_TEMPLATE", "MASK_TOKEN"]


MASK_TOKEN = "<mask_token>"
ANSWER_TEMPLATE = f"You should interact with the {MASK_TOKEN} region."


class PromptVariant(str, enum.Enum):
    HI = "Hi"
    ACTION = "Action"
    OBJECT_ACTION = "ObjectAction"
    FULL = "Full"

    @classmethod
    def parse(cls, value: "str | PromptVariant") -> "PromptVariant":
        if isinstance(value, PromptVariant):
            return value
        for variant in cls:
            if value.replace("+", "").replace(" ", "").lower() == variant.value.lower():
                return variant
        raise ValidationError(
            f"Unknown prompt variant '{value}'; choose from {[v.value for v in cls]}."
        )


def _require(value: str, what: str, variant: PromptVariant) -> str:
    value = value.strip()
    if not value:
        raise ValidationError(f"Prompt variant {variant.value} needs a non-empty {what}.")
    return value


def build_prompt(object_name: str, action_name: str, variant: "PromptVariant | str") -> str:
    variant = PromptVariant.parse(variant)
    if variant is PromptVariant.HI:
        return "Hi"
    action = _require(action_name, "action name", variant)
    if variant is PromptVariant.ACTION:
        return action
    obj = _require(object_name, "object name", variant)
    if variant is PromptVariant.OBJECT_ACTION:
        return f"{action}, {obj}"
    return f"What part of the {obj} should we interact with in order to {action} it?"
