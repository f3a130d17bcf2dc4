"""Finite-difference oracle for autoencoder gradients."""
import numpy as np

from mimo_ae import ae, nn


def randomize_softmax_layers(system, seed=0):
    # receivers start with zero softmax weights, which hides their upstream gradients
    rng = np.random.default_rng(seed)
    for r in system.rx:
        w = r.layers[-1].weight
        w[...] = rng.normal(scale=1 / np.sqrt(w.shape[0]), size=w.shape)
    for model in system.models():
        for layer in model.layers:
            layer.bias[...] = 0.05 * rng.normal(size=layer.bias.shape)


def _loss_and_pattern(system, batch):
    tr = ae._run(system, batch)
    loss = sum(nn.cross_entropy(p, lab) for p, lab in zip(tr.probs, tr.labels))
    # ReLU on/off pattern of every hidden unit; a change means the probe crossed a kink
    hidden = tr.tx_acts[1:-1] + [a for acts in tr.rx_acts for a in acts[1:-1]]
    return loss, np.concatenate([(h > 0).ravel() for h in hidden])


def fd_relative_errors(system, batch, per_array=12, step=1e-6, directions=3, seed=0):
    """Relative errors of backprop against central differences.

    Per parameter array the error is ``|num - ana| / max(|num|, |ana|)`` over
    a coordinate sample (largest analytic entries plus random ones). Random
    directions over all parameters are checked the same way. The loss is only
    piecewise smooth, so probes whose +-step evaluations change any ReLU
    pattern are discarded and replaced; ``fd_relative_errors.discarded``
    holds their count after a call.
    """
    rng = np.random.default_rng(seed)
    params = system.parameters()
    _, grads = ae.loss_and_grads(system, batch)
    _, base = _loss_and_pattern(system, batch)
    discarded = 0

    def central(apply):
        apply(+step)
        lp, pp = _loss_and_pattern(system, batch)
        apply(-2 * step)
        lm, pm = _loss_and_pattern(system, batch)
        apply(+step)
        smooth = np.array_equal(pp, base) and np.array_equal(pm, base)
        return (lp - lm) / (2 * step), smooth

    errs = []
    for p, g in zip(params, grads):
        flat_g = g.ravel()
        flat = p.reshape(-1)
        k = min(per_array, flat_g.size)
        order = list(np.argsort(-np.abs(flat_g))[: k // 2]) + list(rng.permutation(flat_g.size))
        seen, num, ana = set(), [], []
        for i in order:
            if len(num) == k or len(seen) >= 4 * k + flat_g.size // 50:
                break
            if i in seen:
                continue
            seen.add(i)

            def bump(h, i=i):
                flat[i] += h

            d, smooth = central(bump)
            if not smooth:
                discarded += 1
                continue
            num.append(d)
            ana.append(flat_g[i])
        num, ana = np.array(num), np.array(ana)
        scale = max(np.linalg.norm(num), np.linalg.norm(ana))
        if num.size and scale > 0:
            errs.append(np.linalg.norm(num - ana) / scale)

    accepted = attempts = 0
    while accepted < directions and attempts < 20 * directions:
        attempts += 1
        # half along the gradient, half random: keeps the directional derivative
        # well above rounding while every parameter is still exercised
        rand = [rng.normal(size=p.shape) for p in params]
        rn = np.sqrt(sum(float(np.sum(d * d)) for d in rand))
        gn = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        dirs = [0.5 * r / rn + 0.5 * g / gn for r, g in zip(rand, grads)]

        def bump(h):
            for p, d in zip(params, dirs):
                p += h * d

        num, smooth = central(bump)
        if not smooth:
            discarded += 1
            continue
        accepted += 1
        ana = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        errs.append(abs(num - ana) / max(abs(num), abs(ana)))
    fd_relative_errors.discarded = discarded
    if accepted < directions:
        raise AssertionError(f"only {accepted} of {directions} directional probes avoided ReLU kinks")
    return np.array(errs)
