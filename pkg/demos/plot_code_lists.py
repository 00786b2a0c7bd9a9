"""
From diagnosis code lists to a binary matrix
============================================

Records often arrive in long format, one ``(record, code)`` pair per line.
Keeping the most frequent codes turns them into the 0/1 matrix the models
work with.

"""

import tensorgen as tg

# %%
# A handful of visits. Record ``v4`` carries only rare codes.

pairs = [
    ("v1", "428.0"), ("v1", "401.9"), ("v1", "250.00"),
    ("v2", "401.9"), ("v2", "427.31"),
    ("v3", "428.0"), ("v3", "427.31"), ("v3", "401.9"),
    ("v4", "V45.81"),
    ("v5", "250.00"), ("v5", "401.9"),
]
records = tg.dataset.records_from_pairs(pairs)

# %%
# Keep the three most frequent codes. Ties are broken by the code string, so
# the result never depends on input order. ``v4`` stays as an all-zero row.

matrix = tg.binarize_code_list(records, top_k=3)
print(",".join(matrix.feature_names))
print(matrix.values)

# %%
# The same steps from the command line::
#
#     tensorgen fit --input codes.csv --format codelist --top-k 100 --k 10 --out run/
