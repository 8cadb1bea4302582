"""How the naturalness and content rewards combine for a few candidate translations.

A linear classifier is trained to tell machine output (always "zeer") from
human renderings (always "heel"). Each candidate then gets a naturalness score
from the classifier, a chrF content score against the reference, and the
thresholded harmonic mean of the two.
"""

from natalign.classifier import train_classifier
from natalign.corpus import make_classifier_dataset, tokenize
from natalign.reward import CharFScorer, RewardConfig, compute_reward

human = [tokenize(f"t{i} t{i + 1} t{i + 2} t{i + 3} heel .") for i in range(30)]
machine = [tokenize(f"t{i} t{i + 1} t{i + 2} t{i + 3} zeer .") for i in range(30)]
clf = train_classifier(make_classifier_dataset("MT-HT", {"HT": human, "MT": machine}))
print(f"classifier training accuracy {clf.train_accuracy:.3f}\n")

reference = tokenize("t13 t14 t15 t16 heel .")
candidates = ["t13 t14 t15 t16 heel .", "t13 t14 t15 t16 zeer .", "t13 t14 t15 t9 heel .",
              "t13 heel ."]
scorer = CharFScorer()

for sigma_c in (0.85, 0.6):
    cfg = RewardConfig(sigma_t=0.5, sigma_c=sigma_c)
    print(f"sigma_t {cfg.sigma_t}  sigma_c {cfg.sigma_c}")
    for text in candidates:
        y_hat = tokenize(text)
        b = compute_reward(clf.score(y_hat), scorer(None, reference, y_hat), cfg)
        print(f"  {text:22s} p(natural) {b.p_natural:.3f}  content {b.content:.3f}  "
              f"r_t {b.r_t:.3f}  r_c {b.r_c:.3f}  r {b.r:.3f}")
    print()

# the ablation modes keep one side of the reward only
for mode in ("classifier", "content"):
    y_hat = tokenize("t13 heel .")
    b = compute_reward(clf.score(y_hat), scorer(None, reference, y_hat), RewardConfig(mode=mode))
    print(f"mode {mode:10s} r {b.r:.3f}")
