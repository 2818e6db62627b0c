"""Fetch the Wooldridge housing-price data (88 rows) into data/hprice1.csv.

The file ships inside the ``wooldridge`` Python package as a bz2-compressed
CSV. This script downloads that wheel with pip, extracts the CSV and checks
its SHA-256.

    python3 scripts/fetch_hprice1.py [--out data/hprice1.csv]
"""

import argparse
import bz2
import hashlib
import pathlib
import subprocess
import sys
import tempfile
import zipfile

SHA256 = "953a68f311728f134e089b49e4fb6c376707bc00b5c410c86b072630478f6b65"
MEMBER = "wooldridge/datasets/hprice1.csv.bz2"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "hprice1.csv"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "wooldridge", "--no-deps", "--only-binary", ":all:",
             "--timeout", "120", "-d", tmp],
            check=True,
        )
        wheels = list(pathlib.Path(tmp).glob("wooldridge-*.whl"))
        if not wheels:
            print("no wooldridge wheel downloaded", file=sys.stderr)
            return 1
        with zipfile.ZipFile(wheels[0]) as zf:
            payload = bz2.decompress(zf.read(MEMBER))
    digest = hashlib.sha256(payload).hexdigest()
    if digest != SHA256:
        print(f"checksum mismatch: got {digest}, expected {SHA256}", file=sys.stderr)
        return 1
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(payload)
    print(f"wrote {out} ({len(payload)} bytes, sha256 ok)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
