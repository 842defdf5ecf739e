"""Independent reference implementations used as test oracles.

These recount everything from raw session tuples and raw lexicon entries
with plain loops; they share no code with the package beyond the data types.
"""

import numpy as np


def _marks(lexica, word, lex_name, category):
    for lex in lexica:
        if lex.name == lex_name:
            vec = lex.entries.get(word)
            return vec is not None and vec[lex.categories.index(category)] != 0
    raise KeyError(lex_name)


def turn_stats(corpus):
    turns = [t for s in corpus for t in s.turns]
    client = [len(t.tokens) for t in turns if t.speaker.value == "client"]
    therapist = [len(t.tokens) for t in turns if t.speaker.value == "therapist"]
    tokens = 0
    for t in turns:
        for _ in t.tokens:
            tokens += 1
    return (
        len(turns) / len(corpus),
        tokens / len(turns),
        sum(client) / len(client) if client else 0.0,
        sum(therapist) / len(therapist) if therapist else 0.0,
    )


def class_tokens(corpus, speakers):
    out = {}
    for s in corpus:
        if s.label is None:
            continue
        row = out.setdefault(int(s.label), {"samples": 0, "turns": 0, "tokens": []})
        row["samples"] += 1
        for t in s.turns:
            if t.speaker in speakers:
                row["turns"] += 1
                row["tokens"].extend(t.tokens)
    return out


def class_vocab(corpus, lexica, categories, speakers):
    out = {}
    for label, row in class_tokens(corpus, speakers).items():
        vocab = set(row["tokens"])
        affective = [w for w in vocab if any(_marks(lexica, w, lex, cat) for lex, cat in categories)]
        out[label] = (row["samples"], row["turns"], len(vocab), len(affective),
                      len(affective) / len(vocab) if vocab else 0.0)
    return out


def occurrence(corpus, lexica, categories, speakers):
    out = {}
    for label, row in class_tokens(corpus, speakers).items():
        toks = row["tokens"]
        per = {}
        for lex, cat in categories:
            n = len([w for w in toks if _marks(lexica, w, lex, cat)])
            per[f"{lex}:{cat}"] = (n, n / len(toks) if toks else 0.0)
        out[label] = per
    return out


def confusion(preds, labels, classes=2):
    m = [[0] * classes for _ in range(classes)]
    for p, y in zip(preds, labels):
        m[y][p] += 1
    return m


def metrics(preds, labels, classes=2):
    m = confusion(preds, labels, classes)
    f1s, recalls, precisions = [], [], []
    for c in range(classes):
        tp = m[c][c]
        fn = sum(m[c]) - tp
        fp = sum(m[r][c] for r in range(classes)) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return m, precisions, recalls, sum(f1s) / classes, sum(recalls) / classes


def adam_trace(w0, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written out longhand with Python floats."""
    w, m, v = float(w0), 0.0, 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w = w - lr * m_hat / (v_hat**0.5 + eps)
        trace.append(w)
    return trace


def attention_by_hand(rows, W_a, b_a, v_a):
    """Additive attention over a list of row vectors, computed with scalar math."""
    import math

    scores = []
    for h in rows:
        s = 0.0
        for j in range(len(v_a)):
            s += v_a[j] * math.tanh(sum(W_a[j][i] * h[i] for i in range(len(h))) + b_a[j])
        scores.append(s)
    mx = max(scores)
    e = [math.exp(s - mx) for s in scores]
    alpha = [x / sum(e) for x in e]
    pooled = [sum(alpha[k] * rows[k][i] for k in range(len(rows))) for i in range(len(rows[0]))]
    return np.array(alpha), np.array(pooled)
