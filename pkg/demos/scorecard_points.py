"""
From coefficients to an integer scorecard
=========================================

Coefficients of a binned logistic model become points: each variable's
lowest-risk category scores zero, and the maxima add up to at most 100.

Run:  python demos/scorecard_points.py
"""

import numpy as np

from fedscore.glm import DesignEncoding
from fedscore.scorecard import apply, derive_points

enc = DesignEncoding((
    ("age", ("<40", "[40,65)", "[65,80)", ">=80")),
    ("spo2", ("<92", "[92,95)", ">=95")),
    ("triage", ("P1", "P2", "P3")),
))
#                intercept  age.........   spo2.......  triage....
beta = np.array([-2.1, 0.4, 1.1, 1.9, -0.6, -1.3, -0.8, -1.7])

card = derive_points(beta, enc, s_max=100)
print(card.to_markdown({"spo2": "SpO2 (%)", "triage": "Triage class"}))
print("highest attainable total:", card.max_total)

patient = {"age": "[65,80)", "spo2": "<92", "triage": "P1"}
print("patient", patient, "scores", apply(card, patient))

# doubling every slope leaves the card untouched: only relative effects matter
doubled = beta.copy()
doubled[1:] *= 2
print("card unchanged under rescaling:", derive_points(doubled, enc).table_equals(card))
