"""Built-in DNN profiles.

``resnet18_blocks`` is a coarse block-level stand-in for ResNet-18 on an
embedded GPU paired with a desktop GPU; the numbers are illustrative, not
measurements. ``toy5`` is the small profile used in tests and examples.
"""

from .cost_model import DnnProfile

# stem conv, maxpool, 8 residual blocks, avgpool+fc
_RESNET18_EDGE = [0.0120, 0.0030, 0.0075, 0.0075, 0.0090, 0.0070, 0.0095, 0.0070, 0.0110, 0.0085, 0.0020]
_RESNET18_SERVER = [0.00080, 0.00010, 0.00045, 0.00045, 0.00060, 0.00045, 0.00060, 0.00045, 0.00075, 0.00055, 0.00010]
# int8 activations, megabits
_RESNET18_SIZES = [6.42, 1.61, 1.61, 1.61, 0.80, 0.80, 0.40, 0.40, 0.20, 0.20, 0.008]
_RESNET18_INPUT = 4.82


def resnet18_blocks() -> DnnProfile:
    return DnnProfile.from_lists(_RESNET18_EDGE, _RESNET18_SERVER, _RESNET18_SIZES,
                                 _RESNET18_INPUT, name="resnet18_blocks")


def toy5() -> DnnProfile:
    """Five layers, output sizes 8, 4, 2, 1, 0.5, 0.1 Mb (d_0 first)."""
    return DnnProfile.from_lists(
        edge=[0.010, 0.020, 0.030, 0.040, 0.050],
        server=[0.001, 0.002, 0.003, 0.004, 0.005],
        sizes=[4.0, 2.0, 1.0, 0.5, 0.1],
        input_size=8.0,
        name="toy5",
    )


PROFILES = {
    "resnet18_blocks": resnet18_blocks,
    "toy5": toy5,
}


def get_profile(name: str) -> DnnProfile:
    try:
        return PROFILES[name]()
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
