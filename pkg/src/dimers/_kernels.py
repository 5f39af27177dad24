"""Numba kernels for the flip chains.

The configuration layout, flip rule and height anchoring mirror
``sampler``; see its module docstring.  Randomness is numba's MT19937,
seeded inside the kernel, so trajectories are reproducible bit for bit
for a fixed (seed, kernel version).
"""

import numpy as np
from numba import njit

BIT_N, BIT_W, BIT_S, BIT_E = 1, 2, 4, 8


@njit(cache=True)
def _do_flip(nf, fx, fy):
    fh, fw = nf.shape
    nf[fy, fx] ^= 15
    if fy + 1 < fh:
        nf[fy + 1, fx] ^= BIT_S
    if fy - 1 >= 0:
        nf[fy - 1, fx] ^= BIT_N
    if fx - 1 >= 0:
        nf[fy, fx - 1] ^= BIT_E
    if fx + 1 < fw:
        nf[fy, fx + 1] ^= BIT_W


@njit(cache=True)
def _height_add(nf, out):
    fh, fw = nf.shape
    prev_row = np.empty(fw)
    h00 = ((nf[0, 0] >> 1) & 1) - 0.25
    prev_row[0] = h00
    for x in range(1, fw):
        s = 1.0 if (x - 1) % 2 == 1 else -1.0
        ebit = (nf[0, x - 1] >> 3) & 1
        prev_row[x] = prev_row[x - 1] + (ebit - 0.25) * s
    for x in range(fw):
        out[0, x] += prev_row[x]
    for y in range(1, fh):
        for x in range(fw):
            s = 1.0 if (x + y - 1) % 2 == 0 else -1.0
            nbit = nf[y - 1, x] & 1
            prev_row[x] = prev_row[x] + (nbit - 0.25) * s
        for x in range(fw):
            out[y, x] += prev_row[x]


@njit(cache=True)
def _config_key(nf):
    key = np.int64(0)
    fh, fw = nf.shape
    shift = 0
    for y in range(fh):
        for x in range(fw):
            key |= np.int64(nf[y, x]) << shift
            shift += 4
    return key


@njit(cache=True)
def plain_chain(nf, wgrid, proposals, seed, record_every, mean_h, hist, use_hist):
    np.random.seed(seed & 0xFFFFFFFF)
    fh, fw = nf.shape
    nfaces = fh * fw
    acc = 0
    nrec = 0
    for step in range(proposals):
        k = int(np.random.random() * nfaces)
        if k >= nfaces:
            k = nfaces - 1
        fy = k // fw
        fx = k - fy * fw
        code = nf[fy, fx]
        if code == 5 or code == 10:
            w = wgrid[fy, fx]
            r = 1.0 / w if code == 5 else w
            if r >= 1.0 or np.random.random() < r:
                _do_flip(nf, fx, fy)
                acc += 1
        if use_hist:
            hist[_config_key(nf)] += 1
        if record_every > 0 and (step + 1) % record_every == 0:
            _height_add(nf, mean_h)
            nrec += 1
    return acc, nrec, 0


@njit(cache=True)
def _classify(code, fx, fy):
    # 0: not flippable, 1: flip raises the volume, 2: flip lowers it
    if code == 5:
        return 1 if (fx + fy) % 2 == 0 else 2
    if code == 10:
        return 2 if (fx + fy) % 2 == 0 else 1
    return 0


@njit(cache=True)
def _set_remove(arr, pos, n, f):
    i = pos[f]
    last = arr[n - 1]
    arr[i] = last
    pos[last] = i
    pos[f] = -1
    return n - 1


@njit(cache=True)
def _set_add(arr, pos, n, f):
    arr[n] = f
    pos[f] = n
    return n + 1


@njit(cache=True)
def _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, f):
    fy = f // fw
    fx = f - fy * fw
    cls = _classify(nf[fy, fx], fx, fy)
    in_p = pos_p[f] >= 0
    in_m = pos_m[f] >= 0
    if cls == 1:
        if in_m:
            nm = _set_remove(minus, pos_m, nm, f)
        if not in_p:
            np_ = _set_add(plus, pos_p, np_, f)
    elif cls == 2:
        if in_p:
            np_ = _set_remove(plus, pos_p, np_, f)
        if not in_m:
            nm = _set_add(minus, pos_m, nm, f)
    else:
        if in_p:
            np_ = _set_remove(plus, pos_p, np_, f)
        if in_m:
            nm = _set_remove(minus, pos_m, nm, f)
    return np_, nm


@njit(cache=True)
def _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, fx, fy):
    np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, fy * fw + fx)
    if fy + 1 < fh:
        np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, (fy + 1) * fw + fx)
    if fy - 1 >= 0:
        np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, (fy - 1) * fw + fx)
    if fx - 1 >= 0:
        np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, fy * fw + fx - 1)
    if fx + 1 < fw:
        np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, fy * fw + fx + 1)
    return np_, nm


@njit(cache=True)
def volume_chain(nf, wgrid, proposals, seed, record_every, mean_h, hist, use_hist):
    np.random.seed(seed & 0xFFFFFFFF)
    fh, fw = nf.shape
    nfaces = fh * fw
    plus = np.empty(nfaces, dtype=np.int64)
    minus = np.empty(nfaces, dtype=np.int64)
    pos_p = np.full(nfaces, -1, dtype=np.int64)
    pos_m = np.full(nfaces, -1, dtype=np.int64)
    np_ = 0
    nm = 0
    for f in range(nfaces):
        np_, nm = _update_face(nf, fw, plus, minus, pos_p, pos_m, np_, nm, f)
    acc = 0
    nrec = 0
    stalled = 0
    for step in range(proposals):
        if np_ == 0 or nm == 0:
            stalled = 1
            break
        ka = int(np.random.random() * np_)
        if ka >= np_:
            ka = np_ - 1
        kb = int(np.random.random() * nm)
        if kb >= nm:
            kb = nm - 1
        fa = plus[ka]
        fb = minus[kb]
        ay, ax = fa // fw, fa % fw
        by, bx = fb // fw, fb % fw
        code_a = nf[ay, ax]
        ra = 1.0 / wgrid[ay, ax] if code_a == 5 else wgrid[ay, ax]
        q_fwd = np_ * nm
        _do_flip(nf, ax, ay)
        np_, nm = _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, ax, ay)
        if _classify(nf[by, bx], bx, by) != 2:
            # the first flip destroyed the partner: reject
            _do_flip(nf, ax, ay)
            np_, nm = _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, ax, ay)
        else:
            code_b = nf[by, bx]
            rb = 1.0 / wgrid[by, bx] if code_b == 5 else wgrid[by, bx]
            _do_flip(nf, bx, by)
            np_, nm = _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, bx, by)
            q_bwd = np_ * nm
            a_prob = ra * rb * q_fwd / q_bwd if q_bwd > 0 else 0.0
            if a_prob >= 1.0 or np.random.random() < a_prob:
                acc += 1
            else:
                _do_flip(nf, bx, by)
                np_, nm = _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, bx, by)
                _do_flip(nf, ax, ay)
                np_, nm = _touch(nf, fw, fh, plus, minus, pos_p, pos_m, np_, nm, ax, ay)
        if use_hist:
            hist[_config_key(nf)] += 1
        if record_every > 0 and (step + 1) % record_every == 0:
            _height_add(nf, mean_h)
            nrec += 1
    return acc, nrec, stalled
