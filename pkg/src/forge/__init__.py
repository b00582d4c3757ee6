"""Corpus, instruction-data, checkpoint-surgery and evaluation toolchain for mainframe/COBOL LLM work."""

__version__ = "0.1.0"
