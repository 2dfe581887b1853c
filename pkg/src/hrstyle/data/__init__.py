"""Bundled sample images."""

from importlib.resources import files

from ..image_io import ImageTensor, load_image


def smoke_pair() -> tuple[ImageTensor, ImageTensor]:
    """The 64x64 (content, style) pair used by tests and demos."""
    root = files(__name__)
    return load_image(root / "smoke_content.png"), load_image(root / "smoke_style.png")
