"""Desk-scale heterogeneity sweep on synthetic subjects.

One replication at idiosyncrasy strength 0.6 and one at 0 (no profile
effect). Takes a couple of minutes on a single core.

Run:  python3 demos/03_desk_study.py
"""

from harbias.desk import run_desk_replication


def show(res):
    print(f"strength {res.strength}, replication {res.replication}")
    for hm, s in res.summaries.items():
        print(f"  {hm:5s} acc {100 * s.mean_acc:6.2f}  sd {100 * s.sd_acc:5.2f}"
              f"  trial sd {100 * s.mean_trial_sd_acc:5.2f}")
    print(f"  spread of group means: {100 * res.spread():.2f} pp")


if __name__ == "__main__":
    for strength in (0.6, 0.0):
        show(run_desk_replication(strength, replication=0, settings_per_group=3))
