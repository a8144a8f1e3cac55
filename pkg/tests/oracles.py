"""Independent reference implementations used as test oracles.

Nothing here calls into the code under test except for plain data types.
"""

import math
import operator
import random

import numpy as np

from qclkg.kg.terms import XSD_DOUBLE, Graph, Iri, Literal, Triple

SPLITMIX64_SEED0_FIRST = 0xE220A8397B1DCDAF


def splitmix64_numpy(seed, count):
    """SplitMix64 in numpy uint64 arithmetic, where overflow wraps by definition."""
    out = []
    state = np.uint64(seed)
    with np.errstate(over="ignore"):
        for _ in range(count):
            state = state + np.uint64(0x9E3779B97F4A7C15)
            z = state
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            out.append(int(z ^ (z >> np.uint64(31))))
    return out


def fisher_yates_numpy(items, seed):
    """Descending Fisher-Yates driven by the numpy SplitMix64 stream."""
    out = list(items)
    draws = splitmix64_numpy(seed, max(len(out) - 1, 0))
    for step, i in enumerate(range(len(out) - 1, 0, -1)):
        j = draws[step] % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def brute_top_k(matrix, query, k):
    """Cosine with correctly rounded sums, so identical rows score identically.

    A stable sort on the negated score keeps insertion order for ties.
    """
    q = [float(x) for x in query]
    q_norm = math.sqrt(math.fsum(x * x for x in q))
    scores = []
    for row in matrix:
        dot = math.fsum(a * b for a, b in zip(row, q))
        scores.append(dot / (math.sqrt(math.fsum(a * a for a in row)) * q_norm))
    order = np.argsort(-np.asarray(scores), kind="stable")[:k]
    return [(int(i), scores[i]) for i in order]


# ---- SPARQL basic graph patterns ---------------------------------------

EX = "http://example.org/r/"
_OPS = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge, "=": operator.eq}


def random_graph(rng, n_subjects=6, n_predicates=3, n_triples=30):
    subjects = [Iri(f"{EX}s{i}") for i in range(n_subjects)]
    predicates = [Iri(f"{EX}p{i}") for i in range(n_predicates)]
    triples = set()
    for _ in range(n_triples):
        s = rng.choice(subjects)
        p = rng.choice(predicates)
        if rng.random() < 0.4:
            o = Literal(repr(float(rng.randint(0, 9))), XSD_DOUBLE)
        else:
            o = rng.choice(subjects)
        triples.add(Triple(s, p, o))
    return Graph(frozenset(triples)), subjects, predicates


def random_bgp(rng, subjects, predicates, max_patterns=3):
    """A random query as (text, patterns, filters, projection, distinct)."""
    pool = ["a", "b", "c", "d"]
    patterns = []
    for _ in range(rng.randint(1, max_patterns)):
        s = ("var", rng.choice(pool)) if rng.random() < 0.7 else ("iri", rng.choice(subjects))
        p = ("var", rng.choice(pool[2:])) if rng.random() < 0.15 else ("iri", rng.choice(predicates))
        o = ("var", rng.choice(pool)) if rng.random() < 0.7 else ("iri", rng.choice(subjects))
        patterns.append((s, p, o))
    used = sorted({t[1] for pat in patterns for t in pat if t[0] == "var"})
    filters = []
    if used and rng.random() < 0.5:
        filters.append((rng.choice(used), rng.choice(sorted(_OPS)), rng.randint(0, 9)))
    if used and rng.random() < 0.5:
        projection = sorted(rng.sample(used, rng.randint(1, len(used))))
    else:
        projection = used
    distinct = rng.random() < 0.5

    def show(t):
        return f"?{t[1]}" if t[0] == "var" else f"<{t[1].value}>"

    body = " .\n  ".join(" ".join(show(t) for t in pat) for pat in patterns)
    for var, op, num in filters:
        body += f" .\n  FILTER(?{var} {op} {num})"
    head = "SELECT " + ("DISTINCT " if distinct else "") + (" ".join(f"?{v}" for v in projection) or "*")
    return f"{head} WHERE {{\n  {body}\n}}", patterns, filters, projection, distinct


def _matches(pattern, triple):
    binding = {}
    for (kind, val), term in zip(pattern, triple):
        if kind == "iri":
            if term != val:
                return None
        elif binding.setdefault(val, term) != term:
            return None
    return binding


def _filter_ok(binding, var, op, num):
    term = binding.get(var)
    if not isinstance(term, Literal):
        # an IRI compared with a number is an error, and errors are false
        return False
    return _OPS[op](float(term.lexical), float(num))


def brute_force_bgp(graph, patterns, filters, projection, distinct):
    """Every pattern is matched against every triple, then the matches are joined pairwise.

    Conflicting partial joins are dropped as soon as they appear, which keeps
    the nested loop affordable on graphs of a few hundred triples.
    """
    triples = list(graph)
    per_pattern = [[b for t in triples if (b := _matches(p, tuple(t))) is not None] for p in patterns]
    partial = [{}]
    for matches in per_pattern:
        joined = []
        for left in partial:
            for right in matches:
                if all(left.get(k, v) == v for k, v in right.items()):
                    joined.append({**left, **right})
        partial = joined
    rows = [tuple(m[v] for v in projection) for m in partial if all(_filter_ok(m, *f) for f in filters)]
    if distinct:
        rows = list(dict.fromkeys(rows))
    return sorted(rows, key=repr)


def random_instance(seed, max_triples=40, n_subjects=6):
    rng = random.Random(seed)
    graph, subjects, predicates = random_graph(rng, n_subjects=n_subjects, n_triples=rng.randint(0, max_triples))
    return (graph,) + random_bgp(rng, subjects, predicates)
