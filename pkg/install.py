#!/usr/bin/env python3
"""
Installation script for the adaptive-rate compressive sensing toolkit
Creates a virtual environment, installs requirements.txt and checks imports
"""
import os
import platform
import subprocess
import sys
from pathlib import Path

VERIFY_IMPORTS = [
    ('numpy', 'numpy'),
    ('scipy', 'scipy'),
    ('filterpy', 'filterpy'),
    ('matplotlib', 'matplotlib'),
    ('PIL', 'Pillow'),
    ('yaml', 'PyYAML'),
    ('rich', 'rich'),
    ('pytest', 'pytest'),
]


def run_command(cmd):
    """Run a command list; returns (ok, stdout, stderr)"""
    try:
        result = subprocess.run(cmd, capture_output=True, text=True)
        return result.returncode == 0, result.stdout, result.stderr
    except OSError as e:
        return False, "", str(e)


def check_python_version() -> bool:
    print("🐍 Checking Python version...")
    version = sys.version_info
    if version < (3, 8):
        print(f"❌ Python {version.major}.{version.minor} is not supported. Please use Python 3.8 or higher.")
        return False
    print(f"✅ Python {version.major}.{version.minor}.{version.micro} is compatible")
    return True


def in_virtual_environment() -> bool:
    return sys.prefix != getattr(sys, 'base_prefix', sys.prefix)


def managed_environment() -> bool:
    """Containers and codespaces install into the system interpreter"""
    return os.environ.get('REMOTE_CONTAINERS') == 'true' or os.environ.get('CODESPACES') == 'true'


def venv_python():
    for candidate in (Path('.venv/bin/python'), Path('.venv/Scripts/python.exe')):
        if candidate.exists():
            return str(candidate)
    return None


def setup_virtual_environment() -> bool:
    if managed_environment():
        print("🏗️ Managed environment detected, skipping virtual environment creation")
        return True
    if in_virtual_environment() or venv_python():
        print("✅ Virtual environment available")
        return True
    print("🏗️ Creating virtual environment...")
    ok, _, stderr = run_command([sys.executable, '-m', 'venv', '.venv'])
    if not ok:
        print(f"❌ Failed to create virtual environment: {stderr}")
    return ok


def install_requirements(python_cmd: str) -> bool:
    if not Path('requirements.txt').exists():
        print("❌ requirements.txt not found")
        return False
    print("📥 Installing packages from requirements.txt...")
    cmd = [python_cmd, '-m', 'pip', 'install', '-r', 'requirements.txt']
    ok, _, stderr = run_command(cmd)
    if not ok and 'externally-managed-environment' in stderr:
        print("⚠️ Retrying with --break-system-packages...")
        ok, _, stderr = run_command(cmd + ['--break-system-packages'])
    if ok:
        print("✅ All dependencies installed successfully")
    else:
        print(f"❌ Failed to install dependencies: {stderr}")
    return ok


def verify_installation(python_cmd: str) -> bool:
    print("🔍 Verifying installation...")
    all_ok = True
    for import_name, package_name in VERIFY_IMPORTS:
        ok, _, stderr = run_command([python_cmd, '-c', f"import {import_name}"])
        print(f"   {'✅' if ok else '❌'} {package_name}{'' if ok else ' - ' + stderr.strip()}")
        all_ok = all_ok and ok
    return all_ok


def main():
    print("🚀 Adaptive-Rate Compressive Sensing Toolkit Installation")
    print("=" * 50)
    if not check_python_version() or not setup_virtual_environment():
        sys.exit(1)

    python_cmd = venv_python() or sys.executable
    print(f"📍 Using interpreter: {python_cmd}")
    if not install_requirements(python_cmd) or not verify_installation(python_cmd):
        print("❌ Installation failed")
        sys.exit(1)

    print("\n🎉 Installation completed successfully!")
    print("\n📋 Next steps:")
    if venv_python() and not in_virtual_environment():
        print("1. Activate the virtual environment:")
        print("   .venv\\Scripts\\activate" if platform.system() == 'Windows' else "   source .venv/bin/activate")
    print("2. Configure an experiment:")
    print("   cp config/config.yml.example config/config.yml")
    print("3. Build a phase diagram and run a strategy:")
    print("   python src/arcs_toolkit.py phase-diagram generate")
    print("   python src/arcs_toolkit.py run --strategy arcs_cv")
    print("4. Run the tests:")
    print("   python -m pytest tests")


if __name__ == "__main__":
    main()
