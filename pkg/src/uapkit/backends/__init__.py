"""Backend registry keyed by name, as referenced from config files."""

from ..errors import EncoderBackendError
from .base import EncoderBackend, gradient_probe
from .texture import TextureBankEncoder
from .toy import ToyConvEncoder

_REGISTRY = {}


def register_backend(name, factory):
    _REGISTRY[name] = factory


def backend_names():
    return sorted(_REGISTRY)


def create_backend(name, **options):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise EncoderBackendError(
            f"unknown backend {name!r}; available: {', '.join(backend_names())}") from None
    return factory(**options)


def _make_hf_clip(**options):
    from .hf_clip import HfClipEncoder

    return HfClipEncoder(**options)


register_backend("toyconv", ToyConvEncoder)
register_backend("texture", TextureBankEncoder)
register_backend("hf-clip", _make_hf_clip)

__all__ = [
    "EncoderBackend",
    "TextureBankEncoder",
    "ToyConvEncoder",
    "backend_names",
    "create_backend",
    "gradient_probe",
    "register_backend",
]
