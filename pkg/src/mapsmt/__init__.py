"""Knowledge-guided LLM translation pipeline and evaluation harness."""

__version__ = "0.1.0"
