"""
Preset export script
Writes every built-in preset as a spec file under the presets directory
"""
import sys
import os

# Add the parent directory to the path so we can import from app
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.errors import EngineError
from app.presets import check_identities, get_preset, list_presets
from app.storage import export_model
from config.settings import settings


def main():
    """Export all presets, checking their identities first"""
    target = sys.argv[1] if len(sys.argv) > 1 else settings.presets_dir
    print(f"🚀 Exporting presets to {target}/ ...")
    failed = 0
    for name in list_presets():
        try:
            preset = get_preset(name)
            deviations = check_identities(preset)
            worst = max(deviations.values(), default=0.0)
            if worst > 1e-9:
                print(f"⚠️ {name}: identity deviation {worst:.3e}")
            export_model(preset.model, os.path.join(target, f"{name}.json"))
            print(f"✅ {name}")
        except EngineError as e:
            failed += 1
            print(f"❌ {name}: {e.detail}")

    if failed:
        print(f"❌ {failed} preset(s) failed")
        sys.exit(1)
    print("🎉 Export complete!")


if __name__ == "__main__":
    main()
