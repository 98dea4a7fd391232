"""Regenerate the bundled test images under src/trtls/data.

The scenes are fully deterministic, so rerunning this script reproduces the
shipped files byte for byte. Run from the repository root:

    python3 tools/make_assets.py
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from trtls.imgio import write_image
from trtls.pipeline import synthetic_city


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "src" / "trtls" / "data"
    out.mkdir(parents=True, exist_ok=True)
    for side in (64, 256):
        path = out / f"city_{side}.pgm"
        write_image(path, synthetic_city(side))
        print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
