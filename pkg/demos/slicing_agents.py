"""Compare the non-learning slicing policies on a short desk-scale run.

Each policy fields the same request stream: 20 users roaming a five cell
layout, ~2 requests per user-arrival cycle, 8 of 16 channels usable per cell.

Run:  python3 demos/slicing_agents.py      (about a minute)
"""
from slicesim.harness import Scenario, compare_table, run_experiment


def main():
    rows = []
    for victim in ("random", "max_rate", "fifo", "hard_slicing"):
        sc = Scenario.desk(victim=victim, seed=11)
        sc.t_train = 0
        sc.t_test = 2000
        s = run_experiment(sc)
        s.pop("_recorder")
        rows.append(s)
        print(f"{victim:<14} reward/slot {s['avg_reward']:7.2f}   "
              f"completion {s['completion_ratio']:6.1%}   "
              f"denied {s['denials']}")

    print()
    print("fifo spreads the channel budget over the oldest requests and wins;")
    print("max_rate dumps every channel on whoever fades best and starves the")
    print("rest; the learning agents have to discover the middle ground.")
    print()
    print(compare_table(rows, table="slicing"))


if __name__ == "__main__":
    main()
