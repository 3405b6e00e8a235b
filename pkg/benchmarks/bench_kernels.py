"""Compare the compiled and numpy kernel backends.

Times each fused kernel on CE-Net-sized arrays (N=32, batch 80), one full
training step (forward, backward, Adam) of CE-Net and FUS-Net, and the
single-frame deployed receiver.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from rispilot import kernels
from rispilot.models import CeNet, FusNet
from rispilot.neuralnet import AdamState, adam_step, backward, forward
from rispilot.pipeline import SystemConfig, compile_receiver, simulate_frames


def kernel_cases(rng, n=32, batch=80):
    z = rng.standard_normal((batch, 6 * n))
    b = rng.standard_normal(6 * n)
    x = rng.standard_normal((batch, 2 * n))
    g, be = rng.standard_normal(2 * n), rng.standard_normal(2 * n)
    p = rng.standard_normal(30 * n * n)
    y = rng.standard_normal((batch, n)) + 1j * rng.standard_normal((batch, n))
    h = rng.standard_normal((batch, n)) + 1j * rng.standard_normal((batch, n))
    pt = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    m, v = np.zeros_like(p), np.zeros_like(p)
    return {
        "bias_relu": lambda: kernels.bias_relu(z.copy(), b),
        "relu_backward": lambda: kernels.relu_backward(z.copy(), z),
        "bn_forward_train": lambda: kernels.bn_forward_train(x, g, be, 1e-5),
        "bn_backward_params": lambda: kernels.bn_backward_params(x, x),
        "adam_update": lambda: kernels.adam_update(p, p, m, v, 1e-3, 0.99, 0.999, 1e-8, 0.5, 0.5),
        "zf_cancel": lambda: kernels.zf_cancel(y, h, pt, 1e-8),
    }


def train_step_case(model_cls, rng, n=32, batch=80):
    model = model_cls.initialize(n, rng)
    state = AdamState.for_net(model.net)
    x = rng.standard_normal((batch, model.net.in_dim))
    t = rng.standard_normal((batch, model.net.out_dim))

    def step():
        _, cache = forward(model.net, x, "train")
        adam_step(model.net, backward(model.net, cache, t), state)
    return step


def receiver_case(rng, n=32):
    sys_cfg = SystemConfig()
    rx = compile_receiver(CeNet.initialize(n, rng), FusNet.initialize(n, rng), sys_cfg)
    y = simulate_frames(sys_cfg, 1, 0, (9,), (12,)).y[0]
    return lambda: rx.run(y)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    results = {}
    with threadpool_limits(limits=1):
        for backend in backends:
            with kernels.use_backend(backend):
                rng = np.random.default_rng(0)
                cases = kernel_cases(rng)
                cases["train_step_ce_net"] = train_step_case(CeNet, rng)
                cases["train_step_fus_net"] = train_step_case(FusNet, rng)
                cases["frame_receiver"] = receiver_case(rng)
                for name, fn in cases.items():
                    fn()
                    t = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
                    results.setdefault(name, {})[backend] = t
    header = f"{'case':22s}" + "".join(f"{b + ' [us]':>16s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, per in results.items():
        line = f"{name:22s}" + "".join(f"{per[b] * 1e6:16.1f}" for b in backends)
        if len(backends) == 2:
            line += f"{per['python'] / per['cython']:10.2f}"
        print(line)
    return results


if __name__ == "__main__":
    main()
