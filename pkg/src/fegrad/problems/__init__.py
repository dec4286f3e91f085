"""Registry of the verification examples."""

from __future__ import annotations

from importlib import import_module

from ..errors import UnknownExample

# name -> (module, config class)
EXAMPLES = {
    "kirsch": ("kirsch", "KirschConfig"),
    "cohesive": ("cohesive_dcb", "DcbConfig"),
    "homogenization": ("homogenization", "HomogenizationConfig"),
    "sphere": ("sphere", "SphereConfig"),
    "mpc": ("mpc", "MpcConfig"),
    "neural": ("neural", "NeuralConfig"),
    "contact": ("contact_patch", "ContactConfig"),
    "coloring-bound": ("coloring_bound", "ColoringBoundConfig"),
}


def get_example(name):
    """(run function, config class) of a registered example."""
    if name not in EXAMPLES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(sorted(EXAMPLES))}")
    mod_name, cfg_name = EXAMPLES[name]
    mod = import_module(f"{__name__}.{mod_name}")
    return mod.run, getattr(mod, cfg_name)
