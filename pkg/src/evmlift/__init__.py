"""EVM bytecode analysis and neural decompilation toolchain.

Pipeline stages, each usable on its own:

- disasm: total disassembly of runtime bytecode, metadata stripping
- cfg: basic blocks, jump resolution by abstract stack interpretation,
  function-dispatcher and selector recovery
- lift: symbolic-stack lifting to three-address code plus normalization
- tac: the three-address-code types, renderer, and parser
- bridge: prompt construction, token budgeting, and the decompilation
  backend wire protocol (with a deterministic mock)
- dataset: paired TAC/source corpus construction from verified contracts
- metrics: edit-distance, similarity, length, and entropy reporting
- cli: the `evmlift` command line
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
