#!/usr/bin/env python3
"""Rebuild the bundled demo dataset and the golden CSVs.

Usage: python3 tools/make_demo_dataset.py [--root fixtures/demo] [--goldens tests/golden]

Rebuilding with the default seed reproduces the committed bytes; run this
only when the dataset or an export format intentionally changes, and commit
the results.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from wheatai.cli import main as cli_main  # noqa: E402
from wheatai.demo import DEMO_RUN_FLAGS, build_demo_dataset  # noqa: E402
from wheatai.export import CSV_SCHEMAS  # noqa: E402


def regenerate(root: Path, goldens: Path) -> None:
    if root.exists():
        shutil.rmtree(root)
    build_demo_dataset(root)
    print(f"dataset written to {root}")

    goldens.mkdir(parents=True, exist_ok=True)
    for pipeline_id, flags in DEMO_RUN_FLAGS.items():
        with tempfile.TemporaryDirectory() as tmp:
            rc = cli_main(
                [
                    "run",
                    "--pipeline", pipeline_id,
                    "--input", str(root / pipeline_id / "images"),
                    "--backend", str(root / pipeline_id / "preds"),
                    "--out", tmp,
                    "--no-overlays",
                    *flags,
                ]
            )
            if rc != 0:
                raise SystemExit(f"{pipeline_id}: cli exited {rc}")
            shutil.copy(Path(tmp) / f"{pipeline_id}.csv", goldens / f"{pipeline_id}.csv")
            if CSV_SCHEMAS[pipeline_id]["summary"] is not None:
                shutil.copy(
                    Path(tmp) / f"{pipeline_id}_summary.csv",
                    goldens / f"{pipeline_id}_summary.csv",
                )
        print(f"golden written for {pipeline_id}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--root", default=str(REPO / "fixtures" / "demo"))
    parser.add_argument("--goldens", default=str(REPO / "tests" / "golden"))
    args = parser.parse_args()
    regenerate(Path(args.root), Path(args.goldens))
