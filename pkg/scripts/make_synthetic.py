#!/usr/bin/env python3
"""Write the built-in synthetic flow dataset to CSV + schema files.

Useful for exercising the file-backed data path (`data.path=<csv>` with
`data.schema=<schema>`) instead of the in-memory generator.
"""

import argparse

from semiwtc.synth import SynthConfig, write_synthetic


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", default="synthetic_flows.csv")
    parser.add_argument("--schema", default="synthetic_flows.schema")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--total", type=int, default=32772)
    args = parser.parse_args()
    write_synthetic(args.csv, args.schema, args.seed,
                    SynthConfig(n_total=args.total))
    print(f"wrote {args.total} rows to {args.csv} (schema: {args.schema})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
