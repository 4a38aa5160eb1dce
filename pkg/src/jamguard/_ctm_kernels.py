"""Numba kernels for the convolutional Tsetlin machine.

The hot loops work on literal-major bitmaps: for every literal k, a
packed uint64 bitmap over patch positions says where k is true.  A
clause's firing set is then the AND of the bitmaps of its included
literals, so evaluation costs (included literals) x (bitmap words)
instead of (patches) x (literals).

All randomness is a counter-based SplitMix64 stream keyed per clause, so
training is bit-reproducible regardless of scheduling.  The Python-side
mirror lives in ``jamguard.rng``; the two must stay identical.
"""
import numpy as np
from numba import njit

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIXA = np.uint64(0xBF58476D1CE4E5B9)
_MIXB = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_U0 = np.uint64(0)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_CTR_STRIDE = np.uint64(4096)  # draw slots per clause per sample; > 2 + 2*n_literals
_TO_UNIT = 2.0 ** -64

_P1 = np.uint64(0x5555555555555555)
_P2 = np.uint64(0x3333333333333333)
_P4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_PH = np.uint64(0x0101010101010101)
_B1 = np.uint64(1)
_B2 = np.uint64(2)
_B4 = np.uint64(4)
_B56 = np.uint64(56)


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GOLD
    z = (z ^ (z >> _S30)) * _MIXA
    z = (z ^ (z >> _S27)) * _MIXB
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _rand01(key, ctr):
    return _mix64(key ^ _mix64(ctr)) * _TO_UNIT


@njit(cache=True, inline="always")
def _popcount64(x):
    x = x - ((x >> _B1) & _P1)
    x = (x & _P2) + ((x >> _B2) & _P2)
    x = (x + (x >> _B4)) & _P4
    return (x * _PH) >> _B56


@njit(cache=True)
def _fill_patch_bitmaps(img, ph, pw, L, n_words, tail_mask):
    """Write patch-pixel literal bitmaps (and their negations) into L.

    Coordinate-literal rows of L are left untouched; the caller keeps
    them prefilled from the per-shape template.
    """
    H, W = img.shape
    nr = H - ph + 1
    nc = W - pw + 1
    n_pb = ph * pw
    for dr in range(ph):
        for dc in range(pw):
            lit = dr * pw + dc
            for w in range(n_words):
                L[lit, w] = _U0
            p = 0
            for r in range(nr):
                for c in range(nc):
                    if img[r + dr, c + dc] != 0:
                        L[lit, p >> 6] |= _U1 << np.uint64(p & 63)
                    p += 1
            for w in range(n_words):
                L[n_pb + lit, w] = ~L[lit, w]
            L[n_pb + lit, n_words - 1] &= tail_mask


@njit(cache=True)
def _clause_any_match(ta_row, n_states, L, valid, n_words, inc_list):
    """-1 for an empty clause, else 1 if any patch satisfies it, else 0."""
    n_inc = 0
    for k in range(ta_row.size):
        if ta_row[k] > n_states:
            inc_list[n_inc] = k
            n_inc += 1
    if n_inc == 0:
        return -1
    for w in range(n_words):
        acc = valid[w]
        if acc == _U0:
            continue
        for i in range(n_inc):
            acc &= L[inc_list[i], w]
            if acc == _U0:
                break
        if acc != _U0:
            return 1
    return 0


@njit(cache=True)
def _fired_bitmap(ta_row, n_states, L, valid, n_words, fired, inc_list):
    """Fill ``fired`` with the matching-patch bitmap; return the count."""
    n_inc = 0
    for k in range(ta_row.size):
        if ta_row[k] > n_states:
            inc_list[n_inc] = k
            n_inc += 1
    for w in range(n_words):
        fired[w] = valid[w]
    for i in range(n_inc):
        row = inc_list[i]
        nz = _U0
        for w in range(n_words):
            fired[w] &= L[row, w]
            nz |= fired[w]
        if nz == _U0:
            return 0
    cnt = 0
    for w in range(n_words):
        cnt += int(_popcount64(fired[w]))
    return cnt


@njit(cache=True)
def _select_bit(fired, n_words, r):
    """Patch index of the (r+1)-th set bit of the fired bitmap."""
    for w in range(n_words):
        c = int(_popcount64(fired[w]))
        if r < c:
            word = fired[w]
            for b in range(64):
                if ((word >> np.uint64(b)) & _U1) != _U0:
                    if r == 0:
                        return (w << 6) + b
                    r -= 1
        else:
            r -= c
    return -1


@njit(cache=True)
def _shuffle_literals(perm, key, ctr0):
    """Fisher-Yates permutation of 0..n-1, driven by counter draws.

    Feedback visits literals in this order so that admissions under the
    included-literal cap are unbiased in the literal index; a fixed scan
    order would always fill clauses with the lowest-indexed literals.
    """
    n = perm.size
    for i in range(n):
        perm[i] = i
    for i in range(n - 1, 0, -1):
        j = int(_rand01(key, ctr0 + np.uint64(i)) * (i + 1))
        if j > i:
            j = i
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


@njit(cache=True)
def _type_i_fire(ta_row, L, p, key, ctr0, inv_s, comp_s, n_states, max_inc,
                 boost, inc_count, perm):
    """Strengthen a firing clause toward the matched patch p.

    True literals step toward inclusion with probability (s-1)/s, false
    literals step toward exclusion with probability 1/s.  A step that
    would cross the exclude->include boundary is blocked once the clause
    already holds ``max_inc`` literals.
    """
    two_n = 2 * n_states
    inc = inc_count
    wp = p >> 6
    bp = np.uint64(p & 63)
    for i in range(ta_row.size):
        k = perm[i]
        u = _rand01(key, ctr0 + np.uint64(i))
        st = ta_row[k]
        if ((L[k, wp] >> bp) & _U1) != _U0:
            if boost or u < comp_s:
                if st < two_n:
                    if st == n_states:
                        if inc < max_inc:
                            ta_row[k] = st + 1
                            inc += 1
                    else:
                        ta_row[k] = st + 1
        else:
            if u < inv_s:
                if st > 1:
                    ta_row[k] = st - 1
                    if st == n_states + 1:
                        inc -= 1
    return inc


@njit(cache=True)
def _type_i_miss(ta_row, key, ctr0, inv_s, n_states, inc_count):
    """Erode a non-firing clause: every literal steps out w.p. 1/s."""
    inc = inc_count
    for k in range(ta_row.size):
        u = _rand01(key, ctr0 + np.uint64(k))
        if u < inv_s:
            st = ta_row[k]
            if st > 1:
                ta_row[k] = st - 1
                if st == n_states + 1:
                    inc -= 1
    return inc


@njit(cache=True)
def _type_ii_fire(ta_row, L, p, n_states, max_inc, inc_count, perm):
    """Push excluded literals that are false in the matched patch toward
    inclusion, so they will block this false-positive in the future."""
    inc = inc_count
    wp = p >> 6
    bp = np.uint64(p & 63)
    for i in range(ta_row.size):
        k = perm[i]
        if ((L[k, wp] >> bp) & _U1) == _U0:
            st = ta_row[k]
            if st <= n_states:
                if st == n_states:
                    if inc < max_inc:
                        ta_row[k] = st + 1
                        inc += 1
                else:
                    ta_row[k] = st + 1
    return inc


@njit(cache=True)
def _make_valid_mask(n_patches, n_words):
    valid = np.zeros(n_words, dtype=np.uint64)
    for p in range(n_patches):
        valid[p >> 6] |= _U1 << np.uint64(p & 63)
    return valid


@njit(cache=True)
def train_epoch_kernel(ta, inc_counts, clause_keys, images, labels, order,
                       coord_template, ph, pw, threshold, spec_s, n_states,
                       max_inc, boost, base_step):
    """One pass over ``order``; updates ta and inc_counts in place.

    For every sample both class banks are scored (empty clauses fire
    during training), then each bank receives feedback: the target bank
    gates clauses with probability (T - sum)/(2T) (Type I to positive
    polarity, Type II to negative), the other bank with (T + sum)/(2T)
    and the roles swapped.
    """
    n_classes, n_clauses, n_lit = ta.shape
    half = n_clauses // 2
    H = images.shape[1]
    W = images.shape[2]
    nr = H - ph + 1
    nc = W - pw + 1
    n_patches = nr * nc
    n_words = (n_patches + 63) // 64
    inv_s = 1.0 / spec_s
    comp_s = (spec_s - 1.0) / spec_s

    L = coord_template.copy()
    valid = _make_valid_mask(n_patches, n_words)
    tail_mask = valid[n_words - 1]
    fired = np.empty(n_words, dtype=np.uint64)
    inc_list = np.empty(n_lit, dtype=np.int64)
    perm = np.empty(n_lit, dtype=np.int64)
    sums = np.empty(n_classes, dtype=np.int64)
    shuffle_ctr = np.uint64(2 + n_lit)  # draw slots after the literal draws

    for pos in range(order.size):
        idx = order[pos]
        _fill_patch_bitmaps(images[idx], ph, pw, L, n_words, tail_mask)
        y = labels[idx]
        step = np.uint64(base_step + pos) * _CTR_STRIDE

        for cls in range(n_classes):
            s = 0
            for j in range(n_clauses):
                out = _clause_any_match(ta[cls, j], n_states, L, valid, n_words, inc_list)
                o = 0 if out == 0 else 1
                if j < half:
                    s += o
                else:
                    s -= o
            if s > threshold:
                s = threshold
            if s < -threshold:
                s = -threshold
            sums[cls] = s

        for cls in range(n_classes):
            if cls == y:
                p_up = (threshold - sums[cls]) / (2.0 * threshold)
            else:
                p_up = (threshold + sums[cls]) / (2.0 * threshold)
            for j in range(n_clauses):
                key = clause_keys[cls, j]
                if _rand01(key, step) >= p_up:
                    continue
                positive = j < half
                type_one = positive == (cls == y)
                cnt = _fired_bitmap(ta[cls, j], n_states, L, valid, n_words,
                                    fired, inc_list)
                if type_one:
                    if cnt > 0:
                        r = int(_rand01(key, step + _U1) * cnt)
                        if r >= cnt:
                            r = cnt - 1
                        p = _select_bit(fired, n_words, r)
                        _shuffle_literals(perm, key, step + shuffle_ctr)
                        inc_counts[cls, j] = _type_i_fire(
                            ta[cls, j], L, p, key, step + _U2, inv_s, comp_s,
                            n_states, max_inc, boost, inc_counts[cls, j], perm)
                    else:
                        inc_counts[cls, j] = _type_i_miss(
                            ta[cls, j], key, step + _U2, inv_s, n_states,
                            inc_counts[cls, j])
                else:
                    if cnt > 0:
                        r = int(_rand01(key, step + _U1) * cnt)
                        if r >= cnt:
                            r = cnt - 1
                        p = _select_bit(fired, n_words, r)
                        _shuffle_literals(perm, key, step + shuffle_ctr)
                        inc_counts[cls, j] = _type_ii_fire(
                            ta[cls, j], L, p, n_states, max_inc,
                            inc_counts[cls, j], perm)


@njit(cache=True)
def class_sums_kernel(ta, images, coord_template, ph, pw, threshold, n_states,
                      out_sums):
    """Inference-mode clamped class sums for a batch of images."""
    n_classes, n_clauses, n_lit = ta.shape
    half = n_clauses // 2
    H = images.shape[1]
    W = images.shape[2]
    nr = H - ph + 1
    nc = W - pw + 1
    n_patches = nr * nc
    n_words = (n_patches + 63) // 64

    L = coord_template.copy()
    valid = _make_valid_mask(n_patches, n_words)
    tail_mask = valid[n_words - 1]
    inc_list = np.empty(n_lit, dtype=np.int64)

    for i in range(images.shape[0]):
        _fill_patch_bitmaps(images[i], ph, pw, L, n_words, tail_mask)
        for cls in range(n_classes):
            s = 0
            for j in range(n_clauses):
                out = _clause_any_match(ta[cls, j], n_states, L, valid, n_words, inc_list)
                o = 1 if out == 1 else 0
                if j < half:
                    s += o
                else:
                    s -= o
            if s > threshold:
                s = threshold
            if s < -threshold:
                s = -threshold
            out_sums[i, cls] = s
