"""patchpad: a line-editing DSL environment for multi-turn code repair.

The toolkit covers everything around the language model: the editing DSL and
scratchpad editor, sandboxed verification with structured feedback, synthetic
demonstration and repair-benchmark pipelines, engineered rewards with per-turn
group-normalized advantages, a multi-turn episode engine, and a line-JSON
episode server for external trainers.
"""

__version__ = "0.1.0"
