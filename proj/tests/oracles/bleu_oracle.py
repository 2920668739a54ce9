"""Independent BLEU values for the C++ fixtures, computed with sacrebleu."""
import re

import sacrebleu


def tok(s):
    return " ".join(re.findall(r"[A-Za-z0-9]+|[^\sA-Za-z0-9]", s))


def bleu(hyps, refs, smooth=True):
    b = sacrebleu.metrics.BLEU(
        tokenize="none",
        smooth_method="floor" if smooth else "none",
        smooth_value=0.1,
        effective_order=True,
    )
    return b.corpus_score([tok(h) for h in hyps], [[tok(r) for r in refs]]).score


THREE_H = ["ALQ BEQ CEX DOV EMU", "FAR GIB HOT", "# ALQ KIP"]
THREE_R = ["ALQ BEQ CEX EMU DOV", "FAR GIB HOT JUN", "# ALQ KIP LOM"]
print("three", repr(bleu(THREE_H, THREE_R)))
print("three_nosmooth", repr(bleu(THREE_H, THREE_R, smooth=False)))
print("short", repr(bleu(["ALQ BEQ"], ["BEQ ALQ"])))

FORM_H = ["ALQ BEQ CEX $x+y=1$ DOV EMU", "FAR GIB $z=2$ HOT"]
FORM_R = ["ALQ BEQ CEX $y=z+3$ DOV EMU", "FAR GIB $x+1=y$ HOT"]
FORM_H_PT = ["ALQ BEQ CEX DOV EMU", "FAR GIB HOT"]
FORM_R_PT = ["ALQ BEQ CEX DOV EMU", "FAR GIB HOT"]
print("formula_bleu", repr(bleu(FORM_H, FORM_R)))
print("formula_bleu_pt", repr(bleu(FORM_H_PT, FORM_R_PT)))
