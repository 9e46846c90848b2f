#!/usr/bin/env python3
"""
Health check script for burgers-lab
Checks that the interpreter, packages, config and JIT compiler are usable
"""

import importlib
import os
import sys
from typing import List, Tuple

REQUIRED_PACKAGES = ["numpy", "scipy", "numba", "pandas", "pytest"]
CONFIG_FILES = ["config.json", "requirements.txt", "pytest.ini"]
ROOT = os.path.dirname(os.path.abspath(__file__))


def check_python_version() -> bool:
    """Check Python version"""
    print(f"🐍 Python version: {sys.version.split()[0]}")
    return sys.version_info >= (3, 9)


def check_dependencies() -> Tuple[bool, List[str]]:
    """Check that all required packages are installed"""
    missing = []
    for package in REQUIRED_PACKAGES:
        try:
            module = importlib.import_module(package)
            print(f"✅ {package} {getattr(module, '__version__', '')} - OK")
        except ImportError:
            print(f"❌ {package} - MISSING")
            missing.append(package)
    return len(missing) == 0, missing


def check_config_files() -> bool:
    """Check that configuration files exist"""
    all_exist = True
    for name in CONFIG_FILES:
        exists = os.path.exists(os.path.join(ROOT, name))
        print(f"📁 {name}: {'✅' if exists else '❌'}")
        if not exists:
            all_exist = False
    return all_exist


def check_numba_jit() -> bool:
    """Solve a small cyclic system through the compiled Thomas sweep"""
    try:
        import numpy as np

        from assembly import mass_matrix, cyclic_tridiag_solve
        from mesh_field import Mesh

        m = mass_matrix(Mesh(8))
        x = np.arange(8, dtype=float)
        ok = bool(np.allclose(cyclic_tridiag_solve(m, m.matvec(x)), x))
        print(f"⚙️  Numba tridiagonal kernel: {'✅' if ok else '❌'}")
        return ok
    except Exception as e:
        print(f"⚙️  Numba tridiagonal kernel: ❌ ({e})")
        return False


def main() -> bool:
    print("🌊 burgers-lab - Health Check")
    print("=" * 40)

    issues = []
    if not check_python_version():
        issues.append("Python version too old (need 3.9+)")

    deps_ok, missing = check_dependencies()
    if not deps_ok:
        issues.append(f"Missing packages: {', '.join(missing)}")

    if not check_config_files():
        issues.append("Missing configuration files")

    if deps_ok and not check_numba_jit():
        issues.append("Numba could not compile the tridiagonal kernel")

    print("\n" + "=" * 40)
    if issues:
        print("❌ Issues found:")
        for issue in issues:
            print(f"  - {issue}")
        print("\n🔧 To fix, run: pip install -r requirements.txt")
        return False

    print("✅ All checks passed! The lab should work correctly.")
    print("\n🚀 To run the checks: python cli.py checks")
    return True


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
