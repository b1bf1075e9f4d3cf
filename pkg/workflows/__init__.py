"""LangGraph workflow orchestration."""
