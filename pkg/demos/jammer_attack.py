"""Show the listening/jamming loop: the adversary alternates overhearing the
downlink with jamming its top channels, learns the interference drift factor
beta on the fly, and pulls the victim's completion ratio down.

Run:  python3 demos/jammer_attack.py      (couple of minutes)
"""
import numpy as np

from slicesim.harness import Scenario, run_experiment


def run(jammer):
    sc = Scenario.desk(victim="fifo", jammer=jammer, seed=21)
    sc.t_train = 0
    sc.jam_warmup = 200 if jammer else 0
    sc.t_jam_train = 3000 if jammer else 0
    sc.t_test = 2000
    return run_experiment(sc)


def main():
    quiet = run(None)
    print(f"no jammer        reward {quiet['avg_reward']:6.2f}   "
          f"completion {quiet['completion_ratio']:6.1%}")

    for kind in ("last", "ac"):
        s = run(kind)
        drop = s["avg_reward"] - quiet["avg_reward"]
        print(f"jammer = {kind:<7} reward {s['avg_reward']:6.2f} ({drop:+.2f})   "
              f"completion {s['completion_ratio']:6.1%}")

    # peek at what the learning jammer figured out
    s = run("ac")
    rec = s["_recorder"]
    jam_share = np.mean([r[6] for r in rec.slot_rows if r[1] == "test"])
    print(f"\njamming on {jam_share:.0%} of test slots "
          f"(one jam per listen/jam cycle)")
    print("the 'last' baseline replays yesterday's interference map; the")
    print("learning jammer interpolates where the traffic is about to be.")


if __name__ == "__main__":
    main()
