"""Learned constellations from the SISO autoencoder at M=4 and M=16 (12 dB AWGN).

Writes each constellation file, its loss trace and an SER comparison against
the regular QAM of the same size.
"""
from _common import out_dir, parser, run, sweep_flags, train_flags


def main():
    args = parser(__doc__, "shaping").parse_args()
    d = out_dir(args)
    for m, ref in ((4, "qpsk"), (16, "qam16")):
        run("shape", "--m", m, *train_flags(args), "--out", d / f"shaped{m}.txt", "--model-out", d / f"siso{m}.bin", "--loss-out", d / f"siso{m}_loss.csv")
        run("compare", "--model", d / f"siso{m}.bin", "--baselines", "awgn", "--constellation", ref, *sweep_flags(args), "--scatter", d / f"siso{m}_scatter.csv", "--out", d / f"siso{m}_ser.csv")


if __name__ == "__main__":
    main()
