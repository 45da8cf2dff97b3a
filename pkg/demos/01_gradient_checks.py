"""Every layer's hand-written backward pass checked against central finite differences.

Run: python3 demos/01_gradient_checks.py
"""
from dsc.gradcheck import CHECKS, worst_error

print(f"{'check':<22}{'worst rel. error (50 instances)':>34}")
for name in CHECKS:
    print(f"{name:<22}{worst_error(name, instances=50):>34.2e}")
