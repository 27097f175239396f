"""Multi-agent AIOps incident-diagnosis framework.

Core pieces: session/transcript management with scoped visibility, a scripted
LLM gateway, a JSON-RPC tool layer with a monitoring data server, a
budget-aware context engine, ReAct/SOP reasoning engines, a hybrid knowledge
index, the orchestration presets (single-agent, phased, multi-specialist), an
incident simulator, and an HTTP gateway for interactive use.
"""

__version__ = "0.1.0"
