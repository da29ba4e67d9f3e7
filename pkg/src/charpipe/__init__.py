"""charpipe: skeletal motion retargeting, part-based character rendering,
and paired dataset assembly for character-to-image translation."""

__version__ = "0.1.0"
