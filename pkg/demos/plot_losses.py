"""
Content, style and smoothness terms on toy feature maps
=======================================================

The objective has three parts. This walk-through evaluates each one on tiny
hand-built tensors so the numbers can be checked by eye.
"""

import torch

from hrstyle.losses import content_loss, gram_matrix, style_loss_layer, tv_loss

# %%
# Content loss is a mean squared difference over every feature value.
# Shifting a map by a constant 1 therefore costs exactly 1.
y = torch.randn(2, 2, 2, dtype=torch.float64)
print("content(y, y + 1) =", float(content_loss(y, y + 1)))

# %%
# The Gram matrix holds channel-by-channel inner products, averaged over
# C*H*W. It forgets *where* things are, so shuffling pixels leaves it intact.
f = torch.arange(12, dtype=torch.float64).view(3, 2, 2)
g = gram_matrix(f)
perm = torch.randperm(4, generator=torch.Generator().manual_seed(0))
g_shuffled = gram_matrix(f.view(3, 4)[:, perm].view(3, 2, 2))
print(g)
print("unchanged by shuffling:", torch.allclose(g, g_shuffled))

# %%
# That is also why the style image can have any size: the Gram matrix is
# always C x C. Here a 3x3 map is compared with a 5x2 map.
a, b = torch.randn(4, 3, 3), torch.randn(4, 5, 2)
print("style loss across sizes:", float(style_loss_layer(a, b)))

# %%
# Total variation penalizes squared differences between neighbouring pixels.
# A 1x2 image with a jump of 0.5 costs 0.25.
img = torch.tensor([0.2, 0.7]).view(1, 1, 2).repeat(3, 1, 1)
print("tv =", float(tv_loss(img)))
