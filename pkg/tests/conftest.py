import numpy as np
import pytest
from scipy import ndimage


def vegetation_texture(rng, h, w):
    """Stripe-and-clump texture with enough structure for keypoints."""
    field = rng.random((h, w))
    fine = ndimage.gaussian_filter(field, 1.5)
    coarse = ndimage.gaussian_filter(rng.random((h, w)), 6.0)
    ys = np.arange(h)[:, None]
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * ys / 48.0 + 3.0 * coarse)
    img = 0.45 * fine + 0.35 * coarse + 0.2 * stripes
    img = (img - img.min()) / (img.max() - img.min())
    return (img * 255).astype(np.uint8)


@pytest.fixture
def texture_image():
    return vegetation_texture(np.random.default_rng(1234), 240, 320)
