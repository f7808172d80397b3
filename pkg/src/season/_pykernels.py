"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``."""


def lcs_length(a, b):
    if len(a) < len(b):
        a, b = b, a
    n = len(b)
    if n == 0:
        return 0
    prev = [0] * (n + 1)
    for x in a:
        cur = [0] * (n + 1)
        for j in range(n):
            if x == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[n]


def greedy_fragments(article, summary):
    """Lengths of the greedy maximal shared fragments, in summary order."""
    frags = []
    m, n = len(summary), len(article)
    i = 0
    while i < m:
        best = 0
        for j in range(n):
            k = 0
            while i + k < m and j + k < n and summary[i + k] == article[j + k]:
                k += 1
            if k > best:
                best = k
        if best:
            frags.append(best)
            i += best
        else:
            i += 1
    return frags
