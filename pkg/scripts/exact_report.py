#!/usr/bin/env python3
"""Dump the exact layer: shape laws, generating functions, spectrum, moments."""

from __future__ import annotations

import argparse
import json
import sys

from gasket_lerw.exact import exact_report


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--moments", type=int, default=8, help="moment order K (1..12)")
    parser.add_argument("--out", default=None, help="write JSON here instead of stdout")
    args = parser.parse_args()
    doc = json.dumps(exact_report(moment_order=args.moments), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(doc + "\n")
    else:
        print(doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
