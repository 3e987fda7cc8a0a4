"""Shared store for the acceptance lines so the terminal summary can print them together."""
RESULTS: dict = {}


def record(num: int, ok: bool, title: str, detail: str) -> str:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
    RESULTS[num] = line
    print(line)
    return line
