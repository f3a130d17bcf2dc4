"""Two-user MU-MIMO autoencoder against zero-forcing precoding (15 dB training).

``--m`` is the per-user alphabet. The default of 4 compares against ZF-QPSK;
``--m 16`` compares against ZF-16QAM. Per-user curves are written next to the
aggregate.
"""
from _common import out_dir, parser, run, sweep_flags, train_flags

_REF = {4: "qpsk", 16: "qam16"}


def main():
    p = parser(__doc__, "mu_mimo")
    p.add_argument("--m", type=int, nargs="+", default=[4])
    args = p.parse_args()
    d = out_dir(args)
    for m in args.m:
        model = d / f"mu_mimo{m}.bin"
        run("train", "--system", "mu-mimo", "--m", m, *train_flags(args), "--out", model, "--loss-out", d / f"mu_mimo{m}_loss.csv")
        run("eval", "--model", model, *sweep_flags(args), "--per-user", "--out", d / f"mu_mimo{m}_ae.csv")
        run("baseline", "--scheme", "zf", "--constellation", _REF[m], *sweep_flags(args), "--per-user", "--out", d / f"zf_{_REF[m]}.csv")
        run("compare", "--model", model, "--constellation", _REF[m], *sweep_flags(args), "--out", d / f"mu_mimo{m}_ser.csv")


if __name__ == "__main__":
    main()
