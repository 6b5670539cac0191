"""Enumerate feasible training sets per HM label and re-check the
published setting lists against the subject metadata.

Run:  python3 demos/02_curation.py
"""

from harbias import reference
from harbias.curation import HMLabel, binarize_profiles, check_manifest, feasible_subsets

for dataset, subjects in (("lara", reference.lara_subjects()),
                          ("motionsense", reference.motionsense_subjects())):
    profiles = binarize_profiles(subjects)
    sizes = {hm.value: len(feasible_subsets(profiles, hm)) for hm in HMLabel}
    print(f"{dataset}: feasible 4-subject sets per label {sizes}")

    entries = reference.published_settings(dataset)
    bad = check_manifest(entries, subjects)
    print(f"  {len(entries) - len(bad)}/{len(entries)} published settings agree with the metadata")
    for sid, declared, computed in bad:
        print(f"  {sid}: declared {declared}, computed {computed}")
