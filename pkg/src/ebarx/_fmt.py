"""Full-precision number formatting shared by the CSV writers."""

import math


def num(x):
    """Format a float with 17 significant digits (round-trip exact)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")
