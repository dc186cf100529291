import argparse
import json
from pathlib import Path


def parser(description, out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=out)
    p.add_argument("--seeds", type=int, default=5)
    return p


def dump(out, name, obj):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    print(f"wrote {out / name}")
