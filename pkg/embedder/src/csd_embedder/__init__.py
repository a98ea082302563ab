"""Reference embedding provider for the CSD pipeline.

Turns sentence corpora into embedding files (JSONL or CSDE binary) and
serves the POST /embed protocol.  Vectors are always unit L2-normalized
provider-side, and the model identity is recorded in every file and
response.
"""

__version__ = "0.1.0"
