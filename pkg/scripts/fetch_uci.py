#!/usr/bin/env python3
"""Download the public UCI benchmark datasets listed in data/uci_manifest.json.

Usage:
    python scripts/fetch_uci.py [name ...]     # default: all entries

Files land in data/uci/<name>.csv (raw bytes, no preprocessing).  Entries
whose "notes" field mentions preprocessing need a manual pass before they can
be loaded by quantloss.data.load_csv; the manifest records the target column,
delimiter, and header flag to use once the file is numeric.
"""

import json
import sys
import urllib.request
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
MANIFEST = ROOT / "data" / "uci_manifest.json"
DEST = ROOT / "data" / "uci"


def fetch(name: str, entry: dict) -> None:
    DEST.mkdir(parents=True, exist_ok=True)
    out = DEST / f"{name}.csv"
    print(f"fetching {name}: {entry['url']}")
    with urllib.request.urlopen(entry["url"], timeout=60) as resp:
        out.write_bytes(resp.read())
    note = entry.get("notes")
    if note:
        print(f"  note: {note}")
    print(f"  -> {out}")


def main(argv) -> int:
    manifest = json.loads(MANIFEST.read_text())
    names = argv or sorted(manifest)
    unknown = [n for n in names if n not in manifest]
    if unknown:
        print(f"unknown dataset(s): {unknown}; known: {sorted(manifest)}", file=sys.stderr)
        return 1
    failures = []
    for name in names:
        try:
            fetch(name, manifest[name])
        except Exception as e:
            print(f"  failed: {e}", file=sys.stderr)
            failures.append(name)
    if failures:
        print(f"failed: {failures}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
