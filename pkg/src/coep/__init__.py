"""Future-event generation with commonsense explanation prompts.

Two encoder-decoder modules cooperate: an inference module fine-tuned on
inferential triples produces relation-conditioned encoder states that prompt
a generation module fine-tuned on sequential event pairs.  A frozen
contrastive discriminator supervises the prompts through a straight-through
Gumbel-Softmax decode of the explanations.
"""

__version__ = "0.1.0"
