"""Run every built-in example and print per-check residuals."""
from fluxframe import cli
from fluxframe import corpus as K


def main():
    failed = 0
    for case in K.CASES + K.AUXILIARY:
        verdicts = cli.check_case(case)
        bad = [v for v in verdicts if not v.holds]
        failed += bool(bad)
        print(f"{case.name:18s} {'pass' if not bad else 'FAIL'}  ({len(verdicts)} checks)")
        for v in verdicts:
            mark = "ok " if v.holds else "!! "
            print(f"    {mark}{v.name:40s} {v.max_residual:.3e} {v.note}")
    return failed


if __name__ == "__main__":
    raise SystemExit(1 if main() else 0)
