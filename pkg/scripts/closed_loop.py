"""Closed-loop 2x2 autoencoder (M=16, 15 dB) against SVD precoding.

The references are equal-power QPSK on both eigen-streams and the per-channel
bit and power allocation.
"""
from _common import out_dir, parser, run, sweep_flags, train_flags


def main():
    args = parser(__doc__, "closed_loop").parse_args()
    d = out_dir(args)
    model = d / "closed_loop16.bin"
    run("train", "--system", "closed-loop", "--m", 16, *train_flags(args), "--out", model, "--loss-out", d / "closed_loop16_loss.csv")
    run("compare", "--model", model, *sweep_flags(args), "--out", d / "closed_loop16_ser.csv")


if __name__ == "__main__":
    main()
