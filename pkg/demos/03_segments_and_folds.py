"""
Overlapping segments and leak-free folds
=========================================

3 s windows every 0.5 s overlap heavily, so a training window may not share
any sample with the test or validation window of its own trial.
"""

from connscale.dataset import (TrialInfo, check_plan, enumerate_segments, fold_test_starts, make_folds,
                               make_split)

# one 60 s trial at 128 Hz
starts = enumerate_segments(60 * 128, 384, 64)
print(f"{len(starts)} segments per 60 s trial, last start {starts[-1] / 128:.1f} s")

# the four fold test positions sit on a quarter grid
print("fold test starts (s):", [s / 128 for s in fold_test_starts(7680, 4, 384, 64)])

# a full-size split: 32 participants x 40 trials with interior test/val picks
trials = [TrialInfo(p, t, 7680, t) for p in range(32) for t in range(40)]
plan = make_split(trials, [3648] * len(trials), val_pick=[1280] * len(trials))
print("interior split counts:", plan.counts())

# each fold's plan is checked for overlaps and lost segments
for plan in make_folds(trials[:8], n_folds=4, seed=0):
    check_plan(plan, trials[:8])
    print(f"fold {plan.fold_id}: {plan.counts()}")
