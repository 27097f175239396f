import pytest

from opsdiag.session import AgentProfile, AgentRegistry, create_session


def make_registry() -> AgentRegistry:
    registry = AgentRegistry()
    registry.register(AgentProfile(
        agent_id="sup",
        display_name="Supervisor",
        allowed_tools={"get_app_metric"},
        sub_agents=["worker"],
        system_prompt="You supervise.",
    ))
    registry.register(AgentProfile(
        agent_id="worker",
        display_name="Worker",
        allowed_tools={"get_app_metric"},
        system_prompt="You work.",
    ))
    return registry


@pytest.fixture
def registry():
    return make_registry()


@pytest.fixture
def session(registry):
    return create_session(registry, "diagnose the incident", "v1_basic_react", "sup", "s1")
