#!/usr/bin/env python3
"""Fetch the Cora and MUTAG datasets into ``data/``.

Both datasets ship inside published Python wheels, so they are fetched with
``pip download`` (no package is installed) and pulled out with ``zipfile``:

* Cora  (citation format) from ``pgl==2.2.6``, ``pgl/data/cora/``
* MUTAG (TU format)       from ``grakel==0.1.11``, ``grakel/tests/data/MUTAG/``

``cora.content`` is stored gzip-compressed; the loader reads either form.
"""
import argparse
import gzip
import shutil
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

SOURCES = {
    "cora": ("pgl==2.2.6", "pgl/data/cora/"),
    "MUTAG": ("grakel==0.1.11", "grakel/tests/data/MUTAG/"),
}
WHEEL_TAGS = ["--only-binary=:all:", "--python-version", "3.10",
              "--platform", "manylinux_2_28_x86_64",
              "--platform", "manylinux1_x86_64"]
COMPRESS = {"cora.content"}


def fetch_wheel(requirement, workdir):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--quiet",
                    *WHEEL_TAGS, "-d", str(workdir), requirement], check=True)
    wheels = sorted(Path(workdir).glob("*.whl"))
    if not wheels:
        raise SystemExit(f"pip did not produce a wheel for {requirement}")
    return wheels[0]


def extract(wheel, prefix, target):
    target.mkdir(parents=True, exist_ok=True)
    written = []
    with zipfile.ZipFile(wheel) as zf:
        for member in zf.namelist():
            name = member[len(prefix):]
            if not member.startswith(prefix) or not name or "/" in name:
                continue
            with zf.open(member) as src:
                if name in COMPRESS:
                    name += ".gz"
                    with gzip.open(target / name, "wb", compresslevel=9) as dst:
                        shutil.copyfileobj(src, dst)
                else:
                    with open(target / name, "wb") as dst:
                        shutil.copyfileobj(src, dst)
            written.append(name)
    if not written:
        raise SystemExit(f"{wheel.name} has no files under {prefix}")
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", type=Path,
                        default=Path(__file__).resolve().parents[1] / "data")
    parser.add_argument("--force", action="store_true", help="overwrite existing datasets")
    parser.add_argument("names", nargs="*", metavar="NAME",
                        help=f"datasets to fetch, from {sorted(SOURCES)} (default: all)")
    args = parser.parse_args(argv)
    unknown = set(args.names) - set(SOURCES)
    if unknown:
        parser.error(f"unknown dataset(s): {sorted(unknown)}")
    for name in args.names or sorted(SOURCES):
        target = args.data_dir / name
        if target.is_dir() and any(target.iterdir()) and not args.force:
            print(f"{name}: already present at {target}")
            continue
        requirement, prefix = SOURCES[name]
        with tempfile.TemporaryDirectory() as tmp:
            files = extract(fetch_wheel(requirement, tmp), prefix, target)
        print(f"{name}: wrote {len(files)} files to {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
