"""Independent reference implementations shared by the network tests."""

import numpy as np

SLOPE = 0.2


def lrelu(x):
    return np.maximum(x, 0) + SLOPE * np.minimum(x, 0)


def sigm(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def conv_same(x, w, b, stride=1, dilation=1):
    """Same-padded cross-correlation accumulated tap by tap over shifted views."""
    n, h, wd, _ = x.shape
    kh, kw, _, co = w.shape
    ho, wo = -(-h // stride), -(-wd // stride)
    ext_h, ext_w = (kh - 1) * dilation + 1, (kw - 1) * dilation + 1
    tot_h = max((ho - 1) * stride + ext_h - h, 0)
    tot_w = max((wo - 1) * stride + ext_w - wd, 0)
    xp = np.zeros((n, h + tot_h, wd + tot_w, x.shape[3]))
    xp[:, tot_h // 2 : tot_h // 2 + h, tot_w // 2 : tot_w // 2 + wd] = x
    out = np.zeros((n, ho, wo, co))
    for a in range(kh):
        for c in range(kw):
            view = xp[:, a * dilation :, c * dilation :][:, : ho * stride : stride, : wo * stride : stride]
            out += np.einsum("nhwi,io->nhwo", view[:, :ho, :wo], w[a, c])
    return out + b


def deconv_x2(x, w, b):
    """4x4 stride-2 transposed conv: scatter each input pixel's taps, crop the padded border."""
    n, h, wd, _ = x.shape
    kh, kw, _, co = w.shape
    buf = np.zeros((n, 2 * h + kh - 2, 2 * wd + kw - 2, co))
    for i in range(h):
        for j in range(wd):
            buf[:, 2 * i : 2 * i + kh, 2 * j : 2 * j + kw] += np.einsum("ni,abio->nabo", x[:, i, j], w)
    pad = (kh - 2) // 2
    return buf[:, pad : pad + 2 * h, pad : pad + 2 * wd] + b


def kpac_oracle(h1, P, prefix, cfg):
    def p(name):
        return P[f"{prefix}.{name}.w"], P[f"{prefix}.{name}.b"]

    a = h1
    for j in range(1, len(cfg.attn_widths) + 1):
        a = lrelu(conv_same(a, *p(f"scale{j}"), dilation=cfg.attn_dilation))
    alpha = sigm(conv_same(a, *p("scale_out")))
    gap = h1.mean(axis=(1, 2))
    w1, b1 = p("shape_fc1")
    w2, b2 = p("shape_fc2")
    beta = sigm(lrelu(gap @ w1 + b1) @ w2 + b2)[:, None, None, :]
    parts = []
    for i in range(1, cfg.n + 1):
        taps = p("atrous") if cfg.share_weights else p(f"atrous{i}")
        parts.append(alpha[..., i - 1 : i] * (beta * lrelu(conv_same(h1, *taps, dilation=i))))
    return lrelu(conv_same(np.concatenate(parts, axis=-1), *p("fuse")))


def forward_oracle(x, P, cfg):
    """Straight-line encoder / KPAC / decoder forward pass."""

    def c(name, inp, stride=1, act=True):
        y = conv_same(inp, P[f"{name}.w"], P[f"{name}.b"], stride)
        return lrelu(y) if act else y

    def up(name, inp):
        return lrelu(deconv_x2(inp, P[f"{name}.w"], P[f"{name}.b"]))

    e1 = c("conv1_2", c("conv1_1", x))
    e2 = c("conv2_2", c("conv2_1", e1, 2))
    e3 = c("conv3_2", c("conv3_1", e2, 2))
    bottom = c("conv4_2", c("conv4_1", e3, 2)) if cfg.levels == 3 else e3
    feats = [bottom]
    for k in range(1, cfg.blocks + 1):
        feats.append(kpac_oracle(feats[-1], P, f"kpac{k}", cfg))
    d = c("conv5_2", c("conv5_1", np.concatenate(feats, axis=-1)))
    if cfg.levels == 3:
        d = c("conv6", np.concatenate([up("deconv1", d), e3], axis=-1))
    d = c("conv7", np.concatenate([up("deconv2", d), e2], axis=-1))
    d = c("conv8", np.concatenate([up("deconv3", d), e1], axis=-1), act=False)
    return d + x


def fd_check(loss, params, grads, rng, per_tensor=None, step=1e-5):
    """Central differences against analytic gradients.

    Returns ``(max relative error, worst entry, checks)``. The relative error
    of an entry is ``|a - n| / max(|a|, |n|, floor)`` where ``floor`` is
    1e-6 of the largest analytic gradient: below it the finite difference is
    dominated by rounding of the loss, not by the gradient.
    """
    floor = 1e-6 * max(float(np.abs(g).max()) for g in grads.values())
    worst, where, count = 0.0, None, 0
    for name, p in params.items():
        flat = p.reshape(-1)
        gflat = grads[name].reshape(-1)
        idx = np.arange(flat.size)
        if per_tensor is not None and flat.size > per_tensor:
            idx = rng.choice(flat.size, per_tensor, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            lp = loss()
            flat[i] = old - step
            lm = loss()
            flat[i] = old
            num = (lp - lm) / (2 * step)
            denom = max(abs(num), abs(gflat[i]), floor)
            err = abs(num - gflat[i]) / denom if denom > 0 else 0.0
            count += 1
            if err > worst:
                worst, where = err, (name, int(i), num, float(gflat[i]))
    return worst, where, count


def directional_check(loss, params, grads, rng, trials=3, step=1e-5):
    """Worst relative error of ``<grad, v>`` against central differences along random ``v``."""
    worst = 0.0
    for _ in range(trials):
        dirs = {k: rng.standard_normal(p.shape) for k, p in params.items()}
        base = {k: p.copy() for k, p in params.items()}
        vals = []
        for sgn in (1.0, -1.0):
            for k, p in params.items():
                p[...] = base[k] + sgn * step * dirs[k]
            vals.append(loss())
        for k, p in params.items():
            p[...] = base[k]
        num = (vals[0] - vals[1]) / (2 * step)
        ana = sum(float(np.sum(grads[k] * dirs[k])) for k in params)
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana)))
    return worst
