"""Words, sentences and the counting behind the moment method.

Letters are plain ints.  An edge is the sorted pair ``(min, max)``; a
self-loop ``(s, s)`` is allowed and corresponds to a diagonal matrix entry.
All counting is exact (``int`` / ``Fraction``); only :func:`wick_moment`
works in floating point.
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

Edge = tuple[int, int]


def _edge(s: int, t: int) -> Edge:
    return (s, t) if s <= t else (t, s)


@dataclass(frozen=True)
class Word:
    letters: tuple[int, ...]

    def __init__(self, letters: Iterable[int]):
        letters = tuple(int(s) for s in letters)
        if not letters:
            raise ValueError("a word has at least one letter")
        object.__setattr__(self, "letters", letters)

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def closed(self) -> bool:
        return self.letters[0] == self.letters[-1]

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self.letters)

    @property
    def weight(self) -> int:
        return len(self.support)

    def steps(self) -> list[Edge]:
        """Edges in traversal order (``length - 1`` of them)."""
        s = self.letters
        return [_edge(s[k], s[k + 1]) for k in range(len(s) - 1)]

    def passages(self) -> Counter:
        return Counter(self.steps())


@dataclass(frozen=True)
class WordGraph:
    vertices: frozenset[int]
    edges: frozenset[Edge]
    passages: dict[Edge, int] = field(compare=False)

    def components(self) -> list[tuple[frozenset[int], frozenset[Edge]]]:
        parent = {v: v for v in self.vertices}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for s, t in self.edges:
            parent[find(s)] = find(t)
        groups: dict[int, set[int]] = {}
        for v in self.vertices:
            groups.setdefault(find(v), set()).add(v)
        out = []
        for vs in groups.values():
            es = frozenset(e for e in self.edges if e[0] in vs)
            out.append((frozenset(vs), es))
        return out


def _graph(words: Sequence[Word]) -> WordGraph:
    passages: Counter = Counter()
    vertices: set[int] = set()
    for w in words:
        passages.update(w.passages())
        vertices |= w.support
    return WordGraph(frozenset(vertices), frozenset(passages), dict(passages))


@dataclass(frozen=True)
class WordStats:
    length: int
    weight: int
    closed: bool
    graph: WordGraph


def word_stats(w: Word | Sequence[int]) -> WordStats:
    if not isinstance(w, Word):
        w = Word(w)
    return WordStats(len(w), w.weight, w.closed, _graph([w]))


@dataclass(frozen=True)
class Sentence:
    words: tuple[Word, ...]

    def __init__(self, words: Iterable[Word | Sequence[int]]):
        ws = tuple(w if isinstance(w, Word) else Word(w) for w in words)
        if not ws:
            raise ValueError("a sentence has at least one word")
        object.__setattr__(self, "words", ws)

    @property
    def support(self) -> frozenset[int]:
        return frozenset().union(*(w.support for w in self.words))

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def graph(self) -> WordGraph:
        return _graph(self.words)


def canonical(letters: Sequence[int]) -> tuple[int, ...]:
    """Rename letters in order of first appearance (0, 1, 2, ...)."""
    names: dict[int, int] = {}
    return tuple(names.setdefault(s, len(names)) for s in letters)


def canonical_sentence(a: Sentence) -> tuple[tuple[int, ...], ...]:
    names: dict[int, int] = {}
    return tuple(tuple(names.setdefault(s, len(names)) for s in w.letters) for w in a.words)


# ---------------------------------------------------------------------------
# CLT sentences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CLTReport:
    weight: int
    bound: Fraction
    equality: bool
    all_open: bool
    edges_at_least_twice: bool
    every_word_shares: bool
    cond_a: bool
    cond_b: bool
    cond_c: bool
    cond_d: bool
    stem_endpoints: bool

    @property
    def preconditions(self) -> bool:
        return self.all_open and self.edges_at_least_twice and self.every_word_shares

    @property
    def conditions(self) -> bool:
        return self.cond_a and self.cond_b and self.cond_c and self.cond_d

    @property
    def slack(self) -> Fraction:
        return self.bound - self.weight


def _is_simple_path(edges: frozenset[Edge]) -> tuple[bool, tuple[int, ...]]:
    """Whether ``edges`` form one simple path; returns its two end vertices."""
    if not edges or any(s == t for s, t in edges):
        return False, ()
    deg: Counter = Counter()
    for s, t in edges:
        deg[s] += 1
        deg[t] += 1
    if max(deg.values()) > 2 or len(deg) != len(edges) + 1:
        return False, ()
    g = WordGraph(frozenset(deg), edges, {})
    if len(g.components()) != 1:
        return False, ()
    return True, tuple(sorted(v for v, d in deg.items() if d == 1))


def check_clt_sentence(a: Sentence | Sequence[Sequence[int]]) -> CLTReport:
    """Weight bound and the equality characterization for one sentence.

    Precondition violations are reported in the flags, never raised.
    """
    if not isinstance(a, Sentence):
        a = Sentence(a)
    words = a.words
    m = len(words)
    g = a.graph
    wt = g.vertices.__len__()
    bound = Fraction(sum(len(w) for w in words), 2)

    word_edges = [frozenset(w.passages()) for w in words]
    word_pass = [w.passages() for w in words]
    partners = [
        [j for j in range(m) if j != i and word_edges[i] & word_edges[j]] for i in range(m)
    ]

    all_open = all(not w.closed for w in words)
    at_least_twice = all(c >= 2 for c in g.passages.values())
    shares = all(partners[i] for i in range(m))

    cond_a = all(c == 2 for c in g.passages.values())

    comps = g.components()
    cond_b = m % 2 == 0 and len(comps) == m // 2
    if cond_b:
        for vs, es in comps:
            in_comp = [i for i in range(m) if words[i].letters[0] in vs]
            if len(in_comp) != 2 or any(s == t for s, t in es) or len(es) != len(vs) - 1:
                cond_b = False
                break

    cond_c = all(len(p) == 1 for p in partners)

    cond_d = True
    stem_ends = True
    for i in range(m):
        for j in partners[i]:
            if j < i:
                continue
            shared = word_edges[i] & word_edges[j]
            ok, ends = _is_simple_path(shared)
            if not ok or any(word_pass[i][e] != 1 or word_pass[j][e] != 1 for e in shared):
                cond_d = False
                stem_ends = False
                continue
            for e in (word_edges[i] | word_edges[j]) - shared:
                if word_pass[i][e] + word_pass[j][e] != 2:
                    cond_d = False
            end_i = tuple(sorted((words[i].letters[0], words[i].letters[-1])))
            end_j = tuple(sorted((words[j].letters[0], words[j].letters[-1])))
            if not (end_i == ends == end_j):
                stem_ends = False
    if not all(partners):
        cond_d = False
        stem_ends = False

    return CLTReport(
        weight=wt,
        bound=bound,
        equality=wt == bound,
        all_open=all_open,
        edges_at_least_twice=at_least_twice,
        every_word_shares=shares,
        cond_a=cond_a,
        cond_b=cond_b,
        cond_c=cond_c,
        cond_d=cond_d,
        stem_endpoints=stem_ends,
    )


@dataclass
class ScanSummary:
    max_word_len: int
    max_words: int
    max_letters: int
    allow_loops: bool
    examined: int = 0
    passing: int = 0
    equality_cases: int = 0
    by_words: dict[int, dict[str, int]] = field(default_factory=dict)
    by_lengths: dict[tuple[int, ...], int] = field(default_factory=dict)
    counterexamples: list[tuple[str, tuple[tuple[int, ...], ...]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples


class BudgetExceeded(ValueError):
    pass


SCAN_BUDGET = 6 ** 16


def _sentences(lengths: Sequence[int], max_letters: int, allow_loops: bool) -> Iterator[tuple]:
    """Canonical sentences with the given word lengths that can still satisfy
    'every edge traversed at least twice' and 'no word is closed'."""
    total = sum(lengths)
    starts = set(itertools.accumulate(lengths[:-1]))
    word_start = []
    k0 = 0
    for ln in lengths:
        word_start.extend([k0] * ln)
        k0 += ln
    steps_after = []
    acc = sum(ln - 1 for ln in lengths)
    for pos in range(total):
        if pos not in starts and pos != 0:
            acc -= 1
        steps_after.append(acc)
    buf = [0] * total
    counts: Counter = Counter()

    def rec(pos: int, nlet: int, singles: int):
        if pos == total:
            yield tuple(buf)
            return
        new_word = pos == 0 or pos in starts
        prev = buf[pos - 1]
        last_of_word = (pos + 1 == total) or (pos + 1 in starts)
        for s in range(min(nlet + 1, max_letters)):
            if not new_word:
                if s == prev and not allow_loops:
                    continue
                if last_of_word and s == buf[word_start[pos]]:
                    continue
                e = (prev, s) if prev <= s else (s, prev)
                c = counts[e]
                d_single = 1 if c == 0 else (-1 if c == 1 else 0)
                if singles + d_single > steps_after[pos]:
                    continue
                counts[e] = c + 1
                buf[pos] = s
                yield from rec(pos + 1, max(nlet, s + 1), singles + d_single)
                counts[e] = c
            else:
                buf[pos] = s
                yield from rec(pos + 1, max(nlet, s + 1), singles)

    yield from rec(0, 0, 0)


def exhaustive_clt_scan(
    max_word_len: int = 4,
    max_words: int = 4,
    max_letters: int = 6,
    min_words: int = 2,
    allow_loops: bool = True,
) -> ScanSummary:
    """Check the CLT-sentence lemma on every sentence within the budget.

    Sentences are enumerated up to letter relabeling (first-occurrence
    canonical form).  Word lengths range over ``2..max_word_len``; a
    one-letter word has no edge and can never share one.  Claims checked on
    every sentence meeting the preconditions:

    * ``bound``: wt <= sum of lengths / 2;
    * ``iff``: equality exactly when (a)-(d) all hold;
    * ``slack``: wt <= bound - 1/2 whenever one of (a)-(d) fails;
    * ``stem``: in equality cases the stem joins the words' endpoints.
    """
    if max_letters ** (max_word_len * max_words) > SCAN_BUDGET:
        raise BudgetExceeded(
            f"{max_letters}^{max_word_len * max_words} sentences exceeds scan budget"
        )
    summary = ScanSummary(max_word_len, max_words, max_letters, allow_loops)
    for m in range(min_words, max_words + 1):
        row = summary.by_words.setdefault(m, {"examined": 0, "passing": 0, "equality": 0})
        for lengths in itertools.product(range(2, max_word_len + 1), repeat=m):
            _scan_lengths(lengths, max_letters, allow_loops, summary, row)
        summary.examined += row["examined"]
        summary.passing += row["passing"]
        summary.equality_cases += row["equality"]
    return summary


def _scan_lengths(lengths, max_letters, allow_loops, summary: ScanSummary, row: dict) -> None:
    """Scan one word-length profile.

    Same enumeration as :func:`_sentences`, written as a plain recursion with
    a leaf callback: a generator chain costs O(depth) per yielded sentence,
    which dominated the default scan.  Leaves that cannot be equality cases
    and visibly violate (a) or (b) are settled without the full checker.
    """
    m = len(lengths)
    total = sum(lengths)
    half = Fraction(total, 2)
    starts = set(itertools.accumulate(lengths[:-1]))
    word_of = []
    word_start = []
    k0 = 0
    for w, ln in enumerate(lengths):
        word_of.extend([w] * ln)
        word_start.extend([k0] * ln)
        k0 += ln
    steps_after = []
    acc = total - m
    for pos in range(total):
        if pos not in starts and pos != 0:
            acc -= 1
        steps_after.append(acc)
    cuts = list(itertools.accumulate(lengths))
    full = (1 << m) - 1
    buf = [0] * total
    counts: dict = {}
    wmask: dict = {}  # edge -> {word: passages}
    state = {"bad": 0}

    def leaf(nlet: int) -> None:
        row["examined"] += 1
        shared = 0
        for e, per in wmask.items():
            ws = [w for w, c in per.items() if c]
            if len(ws) >= 2:
                for w in ws:
                    shared |= 1 << w
        if shared != full:
            return
        row["passing"] += 1
        wt = nlet
        if wt > half:
            summary.counterexamples.append(("bound", _split(buf, cuts, lengths)))
        if wt != half:
            if state["bad"]:
                return  # (a) fails; wt <= half - 1/2 since wt is an integer
            if m % 2:
                return  # (b) fails: a perfect matching of words needs even m
            if not _forest_with(counts, nlet, m // 2):
                return  # (b) fails: not m/2 loop-free tree components
        words = _split(buf, cuts, lengths)
        rep = check_clt_sentence(words)
        if rep.weight != wt or not rep.preconditions:
            summary.counterexamples.append(("internal", words))
        if rep.equality != rep.conditions:
            summary.counterexamples.append(("iff", words))
        if not rep.conditions and rep.slack < Fraction(1, 2):
            summary.counterexamples.append(("slack", words))
        if rep.equality:
            row["equality"] += 1
            summary.by_lengths[tuple(lengths)] = summary.by_lengths.get(tuple(lengths), 0) + 1
            if not rep.stem_endpoints:
                summary.counterexamples.append(("stem", words))

    def rec(pos: int, nlet: int, singles: int) -> None:
        if pos == total:
            leaf(nlet)
            return
        top = min(nlet + 1, max_letters)
        if pos == 0 or pos in starts:
            for s in range(top):
                buf[pos] = s
                rec(pos + 1, max(nlet, s + 1), singles)
            return
        prev = buf[pos - 1]
        last_of_word = (pos + 1 == total) or (pos + 1 in starts)
        first = buf[word_start[pos]]
        w = word_of[pos]
        budget = steps_after[pos]
        for s in range(top):
            if s == prev and not allow_loops:
                continue
            if last_of_word and s == first:
                continue
            e = (prev, s) if prev <= s else (s, prev)
            c = counts.get(e, 0)
            d_single = 1 if c == 0 else (-1 if c == 1 else 0)
            if singles + d_single > budget:
                continue
            d_bad = (c + 1 != 2) - (c != 0 and c != 2)
            counts[e] = c + 1
            per = wmask.setdefault(e, {})
            per[w] = per.get(w, 0) + 1
            state["bad"] += d_bad
            buf[pos] = s
            rec(pos + 1, max(nlet, s + 1), singles + d_single)
            state["bad"] -= d_bad
            per[w] -= 1
            if c:
                counts[e] = c
            else:
                del counts[e]
                del wmask[e]

    rec(0, 0, 0)


def _forest_with(edges, nverts: int, ncomp: int) -> bool:
    """Is the graph on 0..nverts-1 a loop-free forest with ``ncomp`` trees?"""
    parent = list(range(nverts))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for s, t in edges:
        if s == t:
            return False
        rs, rt = find(s), find(t)
        if rs == rt:
            return False
        parent[rs] = rt
    return nverts - len(edges) == ncomp


def _split(buf, cuts, lengths) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(buf[c - ln:c]) for c, ln in zip(cuts, lengths))


# ---------------------------------------------------------------------------
# Catalan numbers, semicircle moments, stem coefficients
# ---------------------------------------------------------------------------


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def beta(l: int) -> Fraction:
    """l-th moment of the standard semicircle law."""
    if l < 0:
        raise ValueError("l must be non-negative")
    if l % 2:
        return Fraction(0)
    return Fraction(math.comb(l, l // 2), l // 2 + 1)


def _check_parity(l: int, m: int) -> None:
    if not (1 <= m <= l) or (l - m) % 2:
        raise ValueError(f"need 1 <= m <= l with l - m even, got l={l}, m={m}")


def stem_coeff(l: int, m: int) -> Fraction:
    """(m+1)/(l+1) * C(l+1, (l-m)/2): Dyck decorations of a length-m stem."""
    _check_parity(l, m)
    return Fraction(m + 1, l + 1) * math.comb(l + 1, (l - m) // 2)


def dyck_forest_count(l: int, m: int) -> int:
    """Coefficient of x^((l-m)/2) in C(x)^(m+1), by series multiplication."""
    _check_parity(l, m)
    k = (l - m) // 2
    cat = [1] * (k + 1)
    for j in range(1, k + 1):
        cat[j] = sum(cat[i] * cat[j - 1 - i] for i in range(j))
    poly = [1] + [0] * k
    for _ in range(m + 1):
        poly = [sum(poly[i] * cat[j - i] for i in range(j + 1)) for j in range(k + 1)]
    return poly[k]


def stems(l: int) -> list[int]:
    """Stem lengths m contributing at level l."""
    return list(range(2 - l % 2, l + 1, 2)) if l >= 1 else []


def coefficient_table(lmax: int) -> list[tuple[int, int, int]]:
    rows = []
    for l in range(1, lmax + 1):
        for m in stems(l):
            c = stem_coeff(l, m)
            rows.append((l, m, int(c)))
    return rows


def write_coefficient_csv(path, lmax: int = 12) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l", "m", "coefficient"])
        w.writerows(coefficient_table(lmax))


def count_dyck_words(k: int) -> int:
    """Closed words of length 2k+1 from a fixed root whose graph is a tree
    with every edge walked exactly twice, counted up to relabeling."""
    if k == 0:
        return 1
    found = set()
    for tail in itertools.product(range(k + 1), repeat=2 * k - 1):
        letters = (0, *tail, 0)
        c = canonical(letters)
        if c in found:
            continue
        w = Word(c)
        p = w.passages()
        if w.weight == k + 1 and all(v == 2 for v in p.values()) and len(p) == k:
            found.add(c)
    return len(found)


# ---------------------------------------------------------------------------
# Wick pairings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairPartition:
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        flat = [i for b in self.blocks for i in b]
        if len(flat) != len(set(flat)) or any(len(b) != 2 for b in self.blocks):
            raise ValueError("blocks must be disjoint pairs")


def pair_partitions(m: int) -> Iterator[PairPartition]:
    def rec(rest):
        if not rest:
            yield ()
            return
        first = rest[0]
        for k in range(1, len(rest)):
            rem = rest[1:k] + rest[k + 1:]
            for tail in rec(rem):
                yield ((first, rest[k]),) + tail

    if m % 2:
        return
    for blocks in rec(tuple(range(m))):
        yield PairPartition(blocks)


def wick_moment(cov, indices: Sequence[int]) -> float:
    """E[Z_{i1} ... Z_{ik}] for a centered Gaussian vector with covariance ``cov``."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("cov must be square")
    idx = list(indices)
    if any(not 0 <= i < cov.shape[0] for i in idx):
        raise ValueError("index outside covariance dimension")
    if len(idx) % 2:
        return 0.0

    def rec(rest):
        if not rest:
            return 1.0
        a = rest[0]
        total = 0.0
        for k in range(1, len(rest)):
            c = cov[a, rest[k]]
            if c != 0.0:
                total += c * rec(rest[1:k] + rest[k + 1:])
        return total

    return rec(tuple(idx))
