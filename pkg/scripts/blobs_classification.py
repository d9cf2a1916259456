"""Desk-scale classification on four 20-D blobs with label noise on the training set."""
import argparse
import logging

from ifl.experiments import desk_net, run_blobs_classification
from ifl.export import export_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("-r", "--folds", type=int, default=10)
    ap.add_argument("--technique", type=int, choices=(1, 2), default=2)
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--ae-epochs", type=int, default=30)
    ap.add_argument("--dec-max-iter", type=int, default=300)
    ap.add_argument("--out", default="blobs_classification.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    report = run_blobs_classification(args.seed, args.repeats, args.folds, args.technique,
                                      desk_net(args.ae_epochs, args.dec_max_iter),
                                      args.data_seed, args.noise)
    print(f"{'cell':<20}{'mean acc':>10}  per repeat")
    for key, cell in sorted(report.cells.items()):
        if cell["mean"] is None:
            print(f"{key:<20}{'failed':>10}  {cell['errors'][0]}")
        else:
            print(f"{key:<20}{cell['mean']:>10.4f}  {cell['raw']}")
    print(f"total {report.timing['total']:.1f}s; report written to {args.out}")
    export_report(report, args.out)


if __name__ == "__main__":
    main()
