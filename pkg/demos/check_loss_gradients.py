"""
Inpainting losses and their gradients
=====================================

The contextual loss compares generated and original pixels where the mask
keeps them; the gradient-difference loss compares forward differences whose
stencils stay inside kept pixels; the realism loss is log(1 - D). All three
are checked here against central finite differences in float64.
"""
import numpy as np
import torch

from priorinpaint.losses import LossWeights, combined_loss, contextual_loss, gradient_diff_loss, realism_loss

torch.manual_seed(0)
orig = torch.rand(1, 1, 6, 6, dtype=torch.float64)
mask = (torch.rand(1, 1, 6, 6) > 0.4).double()
gen = torch.rand(1, 1, 6, 6, dtype=torch.float64, requires_grad=True)

print("contextual:", contextual_loss(orig, gen, mask).item())
print("gradient difference:", gradient_diff_loss(orig, gen, mask).item())
print("realism at D = 0.5:", realism_loss(0.5).item())


def fd(f, x, eps=1e-6):
    g = torch.zeros_like(x)
    flat = x.detach().clone().view(-1)
    for i in range(flat.numel()):
        old = flat[i].item()
        flat[i] = old + eps
        hi = f(flat.view_as(x)).item()
        flat[i] = old - eps
        lo = f(flat.view_as(x)).item()
        flat[i] = old
        g.view(-1)[i] = (hi - lo) / (2 * eps)
    return g


for name, f in [("contextual", lambda g: contextual_loss(orig, g, mask)),
                ("gradient difference", lambda g: gradient_diff_loss(orig, g, mask))]:
    (analytic,) = torch.autograd.grad(f(gen), gen)
    numeric = fd(f, gen)
    print(f"{name}: relative error {((analytic - numeric).norm() / analytic.norm()).item():.2e}")

# the combined loss is linear in its weights
score = torch.tensor([0.3], dtype=torch.float64)
w = LossWeights(1.0, 0.05, 0.2)
total = combined_loss(orig, gen, mask, score, w)
parts = contextual_loss(orig, gen, mask) + 0.05 * realism_loss(score) + 0.2 * gradient_diff_loss(orig, gen, mask)
print("combined == weighted sum:", np.isclose(total.item(), parts.item()))
