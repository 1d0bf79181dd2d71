import pytest

from riskloom.prompts import (
    MissingVariable,
    StrategyKind,
    TemplateId,
    format_chat,
    load_template,
    placeholders,
    render_prompt,
)

AGENT_VARS = {"USER_NAME": "Alex", "SYMPTOM": "Crying"}
EVAL_VARS = {"USER_NAME": "Alex", "CHAT": "\nAssistant: hi\nAlex: hello\n"}


@pytest.mark.parametrize("tid", list(TemplateId))
def test_substitution_is_total(tid):
    variables = EVAL_VARS if tid.value.startswith("eval") else AGENT_VARS
    system, user = render_prompt(tid, variables)
    assert not placeholders(system) and not placeholders(user)


def test_first_message_mentions_user_name():
    _, user = render_prompt(TemplateId.RUN0_FIRST, {"USER_NAME": "Alex"})
    assert "The user name is Alex" in user
    assert "Sadness" in user


def test_next_templates_target_planned_symptom():
    for strategy in StrategyKind:
        _, user = render_prompt(TemplateId.agent(strategy, first=False), AGENT_VARS)
        assert "'Crying'" in user and "Sadness" not in user


def test_eval_next_embeds_chat():
    _, user = render_prompt(TemplateId.EVAL_NEXT, EVAL_VARS)
    assert EVAL_VARS["CHAT"] in user


def test_eval_first_cannot_offer_none():
    _, first = render_prompt(TemplateId.EVAL_FIRST, EVAL_VARS)
    _, later = render_prompt(TemplateId.EVAL_NEXT, EVAL_VARS)
    assert "None" not in first
    assert "None" in later


def test_missing_variable():
    with pytest.raises(MissingVariable) as err:
        render_prompt(TemplateId.RUN2_FIRST, {})
    assert err.value.name == "USER_NAME"


def test_values_are_not_reexpanded():
    _, user = render_prompt(TemplateId.EVAL_NEXT, {"USER_NAME": "{CHAT}", "CHAT": "x"})
    assert "{CHAT}" in user


def test_strategy_system_prompts_name_their_fields():
    assert '"experience"' in load_template(TemplateId.RUN0_FIRST.system_file)
    assert '"experience"' not in load_template(TemplateId.RUN1_FIRST.system_file)
    assert '"message"' not in load_template(TemplateId.RUN2_FIRST.system_file)


def test_format_chat():
    assert format_chat([("Assistant", "hi\nthere"), ("Alex", "hello")]) == "\nAssistant: hi there\nAlex: hello\n"
