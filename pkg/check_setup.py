"""Quick setup verification script."""

import os
import sys


def check_environment():
    """Check if environment is properly configured."""
    print("🔍 Checking PGRU forecaster setup...\n")

    # Check Python version
    python_version = sys.version_info
    print(f"✅ Python Version: {python_version.major}.{python_version.minor}.{python_version.micro}")
    if python_version < (3, 9):
        print("⚠️  Warning: Python 3.9+ required")

    # .env is optional: every setting has a default
    env_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), ".env")
    if os.path.exists(env_path):
        print("✅ .env file found")
        try:
            from dotenv import load_dotenv
            load_dotenv(env_path)
        except ImportError:
            print("⚠️  python-dotenv not installed (install with: pip install python-dotenv)")
    else:
        print("ℹ️  No .env file; using defaults (see ENV_TEMPLATE.txt)")

    print("\n📋 Settings:")
    settings = {
        "PGRU_OUTPUT_DIR": "runs",
        "PGRU_LOG_LEVEL": "INFO",
        "PGRU_JOBS": "1",
    }
    for key, default in settings.items():
        value = os.getenv(key)
        if value:
            print(f"  ✅ {key}={value}")
        else:
            print(f"  ➖ {key} not set (default {default})")

    # Check dependencies
    print("\n📦 Checking Dependencies:")
    required_packages = {
        "numpy": "numpy",
        "scipy": "scipy",
        "pandas": "pandas",
        "sklearn": "scikit-learn",
        "langgraph": "langgraph",
        "tenacity": "tenacity",
        "joblib": "joblib",
        "click": "click",
        "dotenv": "python-dotenv",
        "typing_extensions": "typing-extensions",
    }

    missing_packages = []
    for module, package in required_packages.items():
        try:
            __import__(module)
            print(f"  ✅ {package}")
        except ImportError:
            print(f"  ❌ {package} (install with: pip install {package})")
            missing_packages.append(package)

    if missing_packages:
        print(f"\n⚠️  Missing packages. Install with:")
        print(f"   pip install -r requirements.txt")
        return False

    print("\n✅ Setup looks good! Try:")
    print("   python run.py synth --seed 1 --days 400 --out-dir data")
    print("   python run.py train data/price.csv data/structural.csv --out-dir runs/demo")

    return True


if __name__ == "__main__":
    success = check_environment()
    sys.exit(0 if success else 1)
