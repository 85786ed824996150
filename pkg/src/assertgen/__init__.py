"""Test-assert mining, chat-driven assert generation, and scoring."""

__version__ = "0.1.0"
