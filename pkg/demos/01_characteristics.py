"""Cross-tabulate subject characteristics of LARa and MotionSense.

Run:  python3 demos/01_characteristics.py
"""

from harbias import reference
from harbias.curation import binarize_profiles, profile_counts
from harbias.experiment import audit_characteristics

lara = reference.lara_subjects()
ms = reference.motionsense_subjects()

for name, subjects in (("LARa", lara), ("MotionSense", ms)):
    counts = profile_counts(binarize_profiles(subjects))
    print(name, {k: counts.get(k, 0) for k in ("YF", "OF", "YM", "OM")})

# pooled cohorts: weight and height both track gender
print()
print(audit_characteristics([lara, ms]).format())
