#!/usr/bin/env python3
"""
Dependency check for the compressive-sensing toolkit
Finds missing numerical, plotting and console packages and installs them with pip
"""
import importlib
import subprocess
import sys
from typing import Dict, List, Tuple


class DependencyInstaller:
    """Checks the toolkit's imports and installs missing packages with pip"""

    # import name -> pip requirement
    REQUIRED_PACKAGES: Dict[str, str] = {
        'numpy': 'numpy>=1.22',
        'scipy': 'scipy>=1.8',
        'filterpy': 'filterpy>=1.4.5',
        'matplotlib': 'matplotlib>=3.5',
        'PIL': 'Pillow>=9.0',
        'yaml': 'PyYAML>=6.0',
        'rich': 'rich>=13.0.0',
    }

    def __init__(self, quiet: bool = False):
        self.quiet = quiet
        self.installed_packages: List[str] = []
        self.failed_packages: List[str] = []

    def check_package(self, module_name: str) -> bool:
        """True when `module_name` imports"""
        try:
            importlib.import_module(module_name)
            return True
        except ImportError:
            return False

    def missing_requirements(self) -> Tuple[List[str], List[str]]:
        """(installed import names, missing pip requirements)"""
        installed, missing = [], []
        for module_name, requirement in self.REQUIRED_PACKAGES.items():
            if self.check_package(module_name):
                installed.append(module_name)
            else:
                missing.append(requirement)
        return installed, missing

    def pip_install(self, requirements: List[str]) -> bool:
        """
        Install requirements with the running interpreter's pip

        Args:
            requirements: pip requirement strings

        Returns:
            True when pip exited cleanly
        """
        if not requirements:
            return True
        cmd = [sys.executable, '-m', 'pip', 'install', *requirements]
        if not self.quiet:
            print(f"📦 Installing {', '.join(requirements)}...")
        result = subprocess.run(cmd, capture_output=True, text=True, check=False)
        if result.returncode != 0 and 'externally-managed-environment' in result.stderr:
            if not self.quiet:
                print("⚠️ Externally managed environment detected, using --break-system-packages")
            result = subprocess.run(cmd + ['--break-system-packages'], capture_output=True, text=True, check=False)
        if result.returncode != 0:
            if not self.quiet:
                print(f"❌ pip failed: {result.stderr.strip()}")
            self.failed_packages.extend(requirements)
        return result.returncode == 0

    def install_all_dependencies(self) -> bool:
        """Install whatever is missing and confirm every package now imports"""
        _, missing = self.missing_requirements()
        if not missing:
            if not self.quiet:
                print("✓ All dependencies are installed")
            return True
        if not self.pip_install(missing):
            return False
        importlib.invalidate_caches()
        _, still_missing = self.missing_requirements()
        self.installed_packages.extend(r for r in missing if r not in still_missing)
        self.failed_packages.extend(still_missing)
        return not still_missing

    def get_summary(self) -> Dict:
        return {
            'total_required': len(self.REQUIRED_PACKAGES),
            'installed_packages': list(self.installed_packages),
            'failed_packages': list(self.failed_packages),
        }


def auto_install_dependencies(quiet: bool = False) -> bool:
    """Install missing packages and print a short summary"""
    installer = DependencyInstaller(quiet=quiet)
    success = installer.install_all_dependencies()
    summary = installer.get_summary()
    if not quiet and (summary['installed_packages'] or summary['failed_packages']):
        print(f"\n📊 Installed {len(summary['installed_packages'])} missing packages")
        for requirement in summary['failed_packages']:
            print(f"   ❌ {requirement}")
    return success


def check_dependencies_only() -> Tuple[List[str], List[str]]:
    """(installed import names, missing pip requirements) without installing"""
    return DependencyInstaller(quiet=True).missing_requirements()


def ensure_dependencies():
    """Entry-point guard: install missing packages or exit with status 2"""
    _, missing = check_dependencies_only()
    if not missing:
        return
    print("🔧 Missing dependencies detected. Installing automatically...")
    if not auto_install_dependencies(quiet=False):
        print("❌ Failed to install some dependencies. Please install manually:")
        print("  pip install -r requirements.txt")
        sys.exit(2)
    print("✅ All dependencies installed successfully!")


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Toolkit dependency installer")
    parser.add_argument('--quiet', '-q', action='store_true', help='Quiet mode')
    parser.add_argument('--check-only', '-c', action='store_true', help='Only check dependencies')
    args = parser.parse_args()

    if args.check_only:
        installed, missing = check_dependencies_only()
        print(f"Installed: {installed}")
        print(f"Missing: {missing}")
        sys.exit(0 if not missing else 1)

    sys.exit(0 if auto_install_dependencies(quiet=args.quiet) else 1)
