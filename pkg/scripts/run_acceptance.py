"""Run the acceptance suite and print only its per-criterion summary lines.

Pass --fast to skip the end-to-end benchmark runs (marked slow).
"""

import subprocess
import sys

args = ["-m", "pytest", "tests/test_acceptance.py", "-q", "-p", "no:cacheprovider"]
if "--fast" in sys.argv[1:]:
    args += ["-m", "not slow"]
proc = subprocess.run([sys.executable, *args], capture_output=True, text=True)
lines = proc.stdout.splitlines()
start = next((i for i, ln in enumerate(lines) if "acceptance criteria" in ln), None)
print("\n".join(lines[start:] if start is not None else lines[-20:]))
sys.exit(proc.returncode)
