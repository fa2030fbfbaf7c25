"""Train a reduced decoder on synthetic data and run the fold protocol.

Uses a scaled-down decoder so the whole loop finishes in about a minute;
pass --full to train the full-size architecture instead (much slower).

    python3 demos/demo_train_decoder.py --epochs 60
"""

import argparse

from neuroincept.dsp import extract_hg_features, zscore_apply, zscore_fit
from neuroincept.evaluation import evaluate_protocol
from neuroincept.model import InceptionConfig, ModelConfig, NeuroInceptDecoder
from neuroincept.synthetic import SyntheticSpec, generate_synthetic
from neuroincept.training import (TrainConfig, mse, ridge_baseline,
                                  ridge_predict, split_80_20, split_indices,
                                  train)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration", type=float, default=30.0, help="seconds")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--full", action="store_true",
                    help="train the full-size architecture")
    args = ap.parse_args()

    data = generate_synthetic(SyntheticSpec(duration_s=args.duration,
                                            seed=args.seed))
    feats = extract_hg_features(data.recording)
    X_raw, Y = feats.values, data.targets.values
    tr, _ = split_indices(X_raw.shape[0])
    mean, std, degenerate = zscore_fit(X_raw[tr])
    X = zscore_apply(X_raw, mean, std, degenerate)
    (Xtr, Ytr), (Xva, Yva) = split_80_20(X, Y)

    if args.full:
        mcfg = ModelConfig()
    else:
        mcfg = ModelConfig(gru_units=(16, 24), dense_units=(64,),
                           inception=InceptionConfig(branch_filters=4,
                                                     post_conv_filters=8))
    decoder = NeuroInceptDecoder(mcfg, seed=args.seed)
    print(f"decoder: {decoder.params.num_params()} parameters")

    tcfg = TrainConfig(max_epochs=args.epochs, seed=args.seed)
    decoder, report = train(Xtr, Ytr, tcfg, decoder=decoder)
    for e, (tl, ml) in enumerate(zip(report.train_loss,
                                     report.monitor_loss), 1):
        marker = "  <- best" if e == report.best_epoch else ""
        print(f"epoch {e:3d}: train {tl:.5f}  monitor {ml:.5f}{marker}")
    print(f"stopped after {report.stopped_epoch} epochs "
          f"({report.wall_time_s:.1f}s), restored epoch {report.best_epoch}")

    pred = decoder.predict_chunked(Xva)
    W = ridge_baseline(Xtr, Ytr, 1e-3)
    print(f"held-out MSE {mse(pred, Yva):.5f} "
          f"(ridge baseline {mse(ridge_predict(Xva, W), Yva):.5f})")

    report = evaluate_protocol(pred, Yva, participant="demo", seed=0)
    print(f"protocol over {report.n_rows_used} rows: "
          f"PCC {report.pcc_mean:.4f} +/- {report.pcc_std:.4f}, "
          f"STGI {report.stgi_mean:.4f} +/- {report.stgi_std:.4f}")


if __name__ == "__main__":
    main()
