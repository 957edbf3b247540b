"""Registry of acceptance outcomes, printed in the pytest terminal summary."""

RESULTS: list = []


def record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
    RESULTS.append((number, line))
    print(line)
    return line
