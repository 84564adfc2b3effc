"""rexforge: execute reasoning programs over scene graphs, compile
grounded explanations with #i region tokens, and evaluate them."""

__version__ = "0.1.0"
