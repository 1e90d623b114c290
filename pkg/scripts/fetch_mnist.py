"""Download the four MNIST IDX files into DATA_DIR (or the given directory).

Usage: python scripts/fetch_mnist.py [target_dir]

The library itself never touches the network; this helper exists for
machines that can reach the public mirrors.
"""

import gzip
import os
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]

FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def fetch(target):
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        out = target / name[:-3]
        if out.exists():
            print(f"{out} already present")
            continue
        last_err = None
        for mirror in MIRRORS:
            url = mirror + name
            try:
                print(f"fetching {url}")
                with urllib.request.urlopen(url, timeout=60) as resp:
                    raw = resp.read()
                out.write_bytes(gzip.decompress(raw))
                break
            except OSError as err:
                last_err = err
        else:
            raise SystemExit(f"could not fetch {name}: {last_err}")
    print(f"done; set DATA_DIR={target}")


if __name__ == "__main__":
    directory = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("DATA_DIR")
    if not directory:
        raise SystemExit("pass a target directory or set DATA_DIR")
    fetch(directory)
