"""A short walk through the diversity and accuracy metrics on hand-made text.

Run with ``python demos/metrics_tour.py``.
"""

from natalign import metrics
from natalign.corpus import tokenize

bland = "het was zeer mooi . het was zeer stil . het was zeer koud .".split()
varied = "het was heel mooi . alles bleef stil . buiten vroor het flink .".split()

print("lexical diversity")
for name, text in (("bland", bland), ("varied", varied)):
    print(f"  {name:7s} TTR {metrics.ttr(text):.3f}  Yule's I {metrics.yules_i(text):.3f}  "
          f"MTLD {metrics.mtld(text):.2f}")

# B1 counts how much of a text comes from a list of frequent words
top = metrics.top_words([bland, varied], 5)
print(f"\ntop words {top}")
print(f"  B1 bland {metrics.b1(bland, top):.3f}  varied {metrics.b1(varied, top):.3f}")

# a tiny parallel corpus where "very" has two renderings
train = [(tokenize(s).tokens, tokenize(t).tokens) for s, t in [
    ("it is very nice", "het is zeer mooi"),
    ("it is very quiet", "het is zeer stil"),
    ("very cold", "heel koud"),
    ("it is very late", "het is zeer laat"),
    ("very good", "heel goed"),
    ("it is late", "het is laat"),
    ("it is here", "het is hier"),
    ("nice", "mooi"),
    ("cold", "koud"),
    ("quiet", "stil"),
] * 3]
table = metrics.build_translation_table(train, iters=20, min_source_freq=5)
print(f"\nrelevant source words: {table.relevant}")
print(f"  options for 'very': {table.options['very']}  most frequent: {table.most_frequent_option('very')}")

outputs = [(tokenize("very nice").tokens, tokenize("zeer mooi").tokens),
           (tokenize("very cold").tokens, tokenize("heel koud").tokens),
           (tokenize("very late").tokens, tokenize("zeer laat").tokens)]
print(f"  PTF {metrics.ptf(outputs, table):.3f} (share of the most frequent option)")
print(f"  CDU {metrics.cdu(outputs, table):.3f} (cosine to a uniform option distribution)")

hyps = [tokenize("het is zeer mooi").tokens, tokenize("heel koud").tokens]
refs = [tokenize("het is heel mooi").tokens, tokenize("heel koud").tokens]
print(f"\nBLEU {metrics.bleu(hyps, refs):.2f}")
