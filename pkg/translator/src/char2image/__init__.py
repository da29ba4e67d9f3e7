"""char2image: attentive conditional GAN translating part-based character
renderings (conditioning stacks) into shaded imagery."""

__version__ = "0.1.0"
