"""Independent oracles shared by unit and acceptance tests."""
import numpy as np
import torch

from freqmix.losses import LossConfig, total_loss
from freqmix.network import ChannelAttention, ModelConfig, SpatialAttention, build_network


def conv_params(c_in, c_out, k, bias):
    return c_in * c_out * k * k + (c_out if bias else 0)


def count_parameters(depth, base, channels, max_channels=512, reduction=8, kernel=7, attention=True):
    """Layer-by-layer bookkeeping of the coupled network (instance norm, bias-free convs)."""
    ch = [min(base * 2 ** l, max_channels) for l in range(depth + 1)]

    def block(c_in, c_out):
        return conv_params(c_in, c_out, 3, False) + 2 * c_out + conv_params(c_out, c_out, 3, False) + 2 * c_out

    total = block(channels, ch[0]) + sum(block(ch[l - 1], ch[l]) for l in range(1, depth + 1))
    for r in range(depth - 1, -1, -1):
        up = ch[r + 1] * ch[r] * 4 + ch[r]
        total += 2 * up + 2 * block(2 * ch[r], ch[r])  # one decoder step in each decoder
        if attention:
            c = 2 * ch[r]
            hidden = max(1, c // reduction)
            total += 2 * c * hidden + 2 * kernel * kernel
    total += conv_params(ch[0], channels, 1, True) + conv_params(ch[0], 1, 1, True)
    return total


def tiny_problem(seed=0, depth=2, base=4, size=16, batch=2):
    """Tiny double-precision network with data kept away from the L1 kink.

    The reconstruction target sits at least 0.5 away from the initial output,
    so no residual changes sign under small parameter perturbations.
    """
    cfg = ModelConfig(depth=depth, base_channels=base, image_size=size)
    net = build_network(cfg, seed).double()
    g = torch.Generator().manual_seed(seed + 1)
    x = torch.randn(batch, 3, size, size, generator=g, dtype=torch.float64)
    with torch.no_grad():
        recon = net(x).recon
    offset = 0.5 + 0.5 * torch.rand(recon.shape, generator=g, dtype=torch.float64)
    sign = torch.where(torch.rand(recon.shape, generator=g, dtype=torch.float64) > 0.5, 1.0, -1.0)
    target = recon + sign * offset
    mask = (torch.rand(batch, 1, size, size, generator=g, dtype=torch.float64) > 0.7).double()
    return net, x, target, mask


def loss_fn(net, x, target, mask, alpha=1.0):
    out = net(x)
    return total_loss(out.recon, out.seg_prob, target, mask, LossConfig(alpha=alpha)).total


class KinkTracker:
    """Records which branch every non-smooth operation takes in a forward pass.

    Covers the CBAM max descriptors (spatial max per channel, channel max per
    pixel), the L1 residual signs and the BCE clamp.  A central difference is
    only valid when the branch pattern is the same at +h and -h.
    """

    def __init__(self, net):
        self.pattern = []
        self.handles = []
        for m in net.modules():
            if isinstance(m, ChannelAttention):
                self.handles.append(m.register_forward_pre_hook(
                    lambda mod, inp: self.pattern.append(inp[0].flatten(2).argmax(-1))))
            elif isinstance(m, SpatialAttention):
                self.handles.append(m.register_forward_pre_hook(
                    lambda mod, inp: self.pattern.append(inp[0].argmax(1))))

    def run(self, net, x, target, mask):
        self.pattern = []
        out = net(x)
        self.pattern.append(torch.sign(out.recon - target))
        p = out.seg_prob
        self.pattern.append((p < 1e-7) | (p > 1 - 1e-7))
        loss = total_loss(out.recon, p, target, mask, LossConfig()).total
        return loss.item(), list(self.pattern)

    def close(self):
        for h in self.handles:
            h.remove()


def _same(a, b):
    return all(torch.equal(u, v) for u, v in zip(a, b))


def finite_difference_check(net, x, target, mask, step=1e-3):
    """Central differences against autograd for every parameter element.

    Returns {tensor name: (relative error, excluded element count)} where the
    relative error is ||g_autograd - g_fd|| / max(||g_autograd||, ||g_fd||)
    over elements whose perturbation does not cross a kink.
    """
    net.zero_grad()
    loss_fn(net, x, target, mask).backward()
    tracker = KinkTracker(net)
    _, base = tracker.run(net, x, target, mask)
    results = {}
    with torch.no_grad():
        for name, p in net.named_parameters():
            grad = p.grad if p.grad is not None else torch.zeros_like(p)
            analytic = grad.detach().clone().ravel()
            numeric = torch.zeros_like(analytic)
            valid = torch.ones_like(analytic, dtype=torch.bool)
            flat = p.data.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up, pat_up = tracker.run(net, x, target, mask)
                flat[i] = orig - step
                down, pat_down = tracker.run(net, x, target, mask)
                flat[i] = orig
                numeric[i] = (up - down) / (2 * step)
                valid[i] = _same(pat_up, base) and _same(pat_down, base)
            a, n = analytic[valid], numeric[valid]
            scale = max(a.norm().item(), n.norm().item(), 1e-12)
            results[name] = ((a - n).norm().item() / scale, int((~valid).sum()))
    tracker.close()
    return results


def confusion_oracle(pred, mask, threshold=0.5):
    tp = fp = tn = fn = 0
    for p, m in zip(np.ravel(pred), np.ravel(mask)):
        hit = p >= threshold
        if hit and m:
            tp += 1
        elif hit:
            fp += 1
        elif m:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn
