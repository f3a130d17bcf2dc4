"""Open-loop 2x1 autoencoder against Alamouti.

M=4 is compared with Alamouti-QPSK. M=16 is compared with Alamouti over
16-QAM and over a 16-point constellation learned by the SISO autoencoder.
"""
from _common import out_dir, parser, run, sweep_flags, train_flags


def main():
    p = parser(__doc__, "open_loop")
    p.add_argument("--m", type=int, nargs="+", default=[4, 16])
    args = p.parse_args()
    d = out_dir(args)
    for m in args.m:
        model = d / f"open_loop{m}.bin"
        run("train", "--system", "open-loop", "--m", m, *train_flags(args), "--out", model, "--loss-out", d / f"open_loop{m}_loss.csv")
        ref = "qpsk" if m == 4 else "qam16"
        run("compare", "--model", model, "--constellation", ref, *sweep_flags(args), "--scatter", d / f"open_loop{m}_scatter.csv", "--out", d / f"open_loop{m}_ser.csv")
        if m == 16:
            shaped = d / "shaped16.txt"
            run("shape", "--m", 16, *train_flags(args), "--out", shaped, "--loss-out", d / "shaped16_loss.csv")
            run("baseline", "--scheme", "alamouti", "--constellation", shaped, *sweep_flags(args), "--out", d / "alamouti_shaped16_ser.csv")


if __name__ == "__main__":
    main()
