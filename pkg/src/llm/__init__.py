"""Prompt construction, chat-completion client and response parsing."""
