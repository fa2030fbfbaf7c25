"""Finite-difference audit of the decoder's analytic gradients.

Builds a reduced decoder, wires a scalar MSE loss over a handful of rows,
and compares every parameter tensor's backpropagated gradient against
central differences on sampled coordinates.

    python3 demos/demo_gradcheck.py --coords 80
"""

import argparse
import time

import numpy as np

import neuroincept.autodiff as ad
from neuroincept.model import InceptionConfig, ModelConfig, NeuroInceptDecoder


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coords", type=int, default=80,
                    help="sampled coordinates per tensor")
    ap.add_argument("--rows", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = ModelConfig(n_channels=2, context_len=9, gru_units=(8, 12),
                      dense_units=(24,), output_dim=10,
                      inception=InceptionConfig(branch_filters=3,
                                                post_conv_filters=4))
    decoder = NeuroInceptDecoder(cfg, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.rows, cfg.input_dim))
    Y = rng.normal(size=(args.rows, cfg.output_dim))

    def loss():
        return ad.mse(decoder.forward(ad.param(X)), Y)

    named = list(decoder.params.named())
    print(f"decoder: {decoder.params.num_params()} parameters "
          f"in {len(named)} tensors")
    t0 = time.perf_counter()
    worst = 0.0
    for name, p in named:
        err = ad.grad_check(loss, [p], n_sample=args.coords, seed=args.seed)
        flag = "ok" if err < 1e-4 else "SUSPECT"
        print(f"  {name:12s} {str(p.value.shape):14s} rel err {err:.3e}  {flag}")
        worst = max(worst, err)
    print(f"worst relative error {worst:.3e} "
          f"({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
