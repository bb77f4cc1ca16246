"""End-to-end smoke test of the Python bindings.

Run after an editable install:

    pip install -e . --no-build-isolation
    python3 python/smoke_test.py
"""

from pathlib import Path

import linchk_py

MODELS = Path(__file__).resolve().parent.parent / "models"

OVERFLOWING = """
object tiny {
    shared c : int[0..1] = 0;
    method inc() {
        I: atomic { c := c + 1; } goto D;
        D: return;
    }
    spec {
        on inc() { }
    }
}
"""


def check(label, ok):
    status = "ok" if ok else "FAIL"
    print(f"{status}: {label}")
    if not ok:
        raise SystemExit(1)


def main():
    treiber = (MODELS / "treiber_stack.obj").read_text()
    spinlock = (MODELS / "spinlock_queue.obj").read_text()
    hw = (MODELS / "hw_queue.obj").read_text()

    lts = linchk_py.explore(treiber)
    check(f"explore treiber_stack -> {lts!r}", lts.state_count() > 1000)

    small = lts.minimize()
    check(
        f"minimize -> {small!r}",
        small.state_count() < lts.state_count()
        and linchk_py.bisimilar(lts, small, eq="branching"),
    )

    round_trip = linchk_py.Lts.from_aut(small.to_aut())
    check("aut round trip", round_trip.state_count() == small.state_count())

    spec_side = linchk_py.explore(hw, spec=True)
    check(
        "spec side is coarser than the implementation",
        spec_side.state_count() < linchk_py.explore(hw).state_count(),
    )

    verdict = linchk_py.check_linearizability(hw)
    check("hw_queue linearizable", verdict["pass"] and verdict["counterexample"] is None)
    check("hw_queue stats present", "impl" in verdict["stats"])

    verdict = linchk_py.check_lockfree(spinlock)
    lasso = verdict["counterexample"]
    check(
        "spinlock_queue not lock-free, with a lasso",
        not verdict["pass"] and lasso is not None and len(lasso["cycle"]) > 0,
    )

    verdict = linchk_py.check_lockfree(treiber)
    check("treiber_stack lock-free", verdict["pass"])

    diagnostics = linchk_py.validate(OVERFLOWING)
    check("overflow diagnostics reported", any("domain" in d for d in diagnostics))

    names = [b["name"] for b in linchk_py.list_benchmarks()]
    check(f"benchmark registry lists {len(names)} entries", len(names) == 7)

    report = linchk_py.run_benchmark("buggy_hw_queue")
    check(
        "buggy_hw_queue fails linearizability as expected",
        not report["linearizable"] and report["as_expected"],
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
