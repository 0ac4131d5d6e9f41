"""Shared helpers for the figure scripts."""
import argparse
import os


def parse_out(default: str, doc: str) -> str:
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--out", default=default, help="output directory")
    out = ap.parse_args().out
    os.makedirs(out, exist_ok=True)
    return out


def write(out: str, name: str, text: str) -> None:
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(text)
    print(f"wrote {path}")
