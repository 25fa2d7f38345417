import sys

import requests

BASE_URL = "http://127.0.0.1:8000"


def check_health():
    print(f"Checking Health ({BASE_URL}/)...", end=" ")
    try:
        r = requests.get(f"{BASE_URL}/", timeout=5)
        if r.status_code == 200:
            print("✅ OK")
            return True
        print(f"❌ Failed: {r.status_code}")
        return False
    except Exception as e:
        print(f"❌ Connection Error: {e}")
        return False


def check_solve():
    print("Checking Solve (/solve)...", end=" ")
    payload = {"cost": [1.0, -2.0], "lambda_smooth": 1.0,
               "G": [[1.0, 0.0], [0.0, 1.0]], "l": [0.0, 0.0], "u": [1.0, 1.0]}
    try:
        r = requests.post(f"{BASE_URL}/solve", json=payload, timeout=30)
        if r.status_code == 200 and r.json()["status"] == "Solved":
            print("✅ OK")
            print(f"   z = {r.json()['z']}, active = {r.json()['active']}")
            return True
        print(f"❌ Failed: {r.status_code} - {r.text}")
        return False
    except Exception as e:
        print(f"❌ Error: {e}")
        return False


def check_gradient():
    print("Checking Gradient (/gradient)...", end=" ")
    payload = {"cost": [1.0, 0.0], "true_cost": [0.0, 0.0], "H": [[1.0, 0.0], [0.0, 1.0]],
               "A": [[1.0, 1.0]], "b": [1.0]}
    try:
        r = requests.post(f"{BASE_URL}/gradient", json=payload, timeout=30)
        if r.status_code == 200:
            print("✅ OK")
            print(f"   gradient = {r.json()['gradient']}")
            return True
        print(f"❌ Failed: {r.status_code} - {r.text}")
        return False
    except Exception as e:
        print(f"❌ Error: {e}")
        return False


if __name__ == "__main__":
    if not check_health():
        print("\n⚠️ Service is NOT running. Please run 'uvicorn main:app --reload'")
        sys.exit(1)

    print("-" * 20)
    ok = check_solve() & check_gradient()
    print("-" * 20)
    print("Verification Complete.")
    sys.exit(0 if ok else 1)
