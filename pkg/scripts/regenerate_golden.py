"""
Golden file regeneration script
Overwrites tests/golden/ with the current derivations; review the diff before committing
"""
import sys
import os

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.main import derived_blocks, format_blocks
from app.presets import get_preset

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "tests", "golden")

# (preset, side) pairs covered by golden files
GOLDEN = [
    ("so3", "el"),
    ("so3", "hamilton"),
    ("standard", "el"),
    ("standard_connection", "el"),
    ("time_dependent", "el"),
    ("atiyah", "el"),
    ("atiyah_u1", "el"),
    ("poisson_sigma", "el"),
]


def regenerate():
    print("⚠️ WARNING: This overwrites the hand-checked golden files!")
    confirmation = input("Type 'yes' to continue: ")
    if confirmation.lower() != 'yes':
        print("Operation cancelled.")
        return

    os.makedirs(GOLDEN_DIR, exist_ok=True)
    for name, side in GOLDEN:
        preset = get_preset(name)
        lines = format_blocks(derived_blocks(preset.model, side))
        path = os.path.join(GOLDEN_DIR, f"{name}_{side}.txt")
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        print(f"✅ {path} ({len(lines)} equations)")


if __name__ == "__main__":
    regenerate()
