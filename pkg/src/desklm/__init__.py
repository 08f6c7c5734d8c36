"""desklm: a desk-scale transformer-encoder laboratory.

Everything runs on the CPU in 64-bit floats on top of a small
reverse-mode differentiation core, sized so that every training
mechanism can be exercised and verified by property tests in minutes.
"""

__version__ = "0.1.0"

from . import corpus, errors, finetune, harness, model, optim, pretrain, tensor  # noqa: E402,F401
