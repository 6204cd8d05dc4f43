"""Independent reference implementations used only to check the package.

Nothing here imports pipeline code paths under test: filters are literal
difference equations with coefficients derived by hand from the analog
prototype, geometry uses winding numbers and orientation predicates, and
statistics are direct definitions over math.fsum.
"""

from __future__ import annotations

import math


def butter2_lowpass_coeffs(cutoff_hz: float, rate_hz: float):
    """Bilinear-transform coefficients for a 2nd-order Butterworth low-pass."""
    k = math.tan(math.pi * cutoff_hz / rate_hz)
    norm = 1.0 / (1.0 + math.sqrt(2.0) * k + k * k)
    b = (k * k * norm, 2.0 * k * k * norm, k * k * norm)
    a = (1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - math.sqrt(2.0) * k + k * k) * norm)
    return b, a


def difference_equation(b, a, xs):
    """Literal direct-form difference equation, zero initial state."""
    y1 = y2 = x1 = x2 = 0.0
    out = []
    for x in xs:
        y = b[0] * x + b[1] * x1 + b[2] * x2 - a[1] * y1 - a[2] * y2
        x2, x1 = x1, x
        y2, y1 = y1, y
        out.append(y)
    return out


def steady_amplitude_ratio(b, a, freq_hz, rate_hz, seconds=6.0):
    """Amplitude ratio for a sinusoid after discarding the transient."""
    n = int(seconds * rate_hz)
    xs = [math.sin(2 * math.pi * freq_hz * i / rate_hz) for i in range(n)]
    ys = difference_equation(b, a, xs)
    tail = ys[n // 2 :]
    return max(abs(v) for v in tail)


def winding_number_contains(p, vertices) -> bool:
    """Winding-number point-in-polygon (off-boundary points only)."""
    wn = 0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if y1 <= p[1]:
            if y2 > p[1] and _is_left((x1, y1), (x2, y2), p) > 0:
                wn += 1
        else:
            if y2 <= p[1] and _is_left((x1, y1), (x2, y2), p) < 0:
                wn -= 1
    return wn != 0


def _is_left(a, b, p) -> float:
    return (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])


def is_convex_ccw(vertices) -> bool:
    n = len(vertices)
    if n < 3:
        return False
    for i in range(n):
        o, a, b = vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]
        cross = (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        if cross <= 0:
            return False
    return True


def population_sd(values) -> float:
    m = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / len(values))


def rmssd_direct(rr_ms) -> float:
    diffs = [b - a for a, b in zip(rr_ms, rr_ms[1:])]
    return math.sqrt(math.fsum(d * d for d in diffs) / len(diffs))


def mean_direct(values) -> float:
    return math.fsum(values) / len(values)


def variance_direct(values) -> float:
    m = mean_direct(values)
    return math.fsum((v - m) ** 2 for v in values) / len(values)


def match_peaks(true_ns, detected_ns, tol_ns):
    """Greedy one-to-one matching; returns (pairs, misses, false_alarms)."""
    pairs = []
    used = set()
    for t in true_ns:
        best = None
        for j, d in enumerate(detected_ns):
            if j in used or abs(d - t) > tol_ns:
                continue
            if best is None or abs(d - t) < abs(detected_ns[best] - t):
                best = j
        if best is not None:
            used.add(best)
            pairs.append((t, detected_ns[best]))
    misses = len(true_ns) - len(pairs)
    false_alarms = len(detected_ns) - len(pairs)
    return pairs, misses, false_alarms


def peak_f1(true_ns, detected_ns, tol_ns):
    pairs, misses, fa = match_peaks(true_ns, detected_ns, tol_ns)
    tp = len(pairs)
    if tp == 0:
        return 0.0, float("inf")
    precision = tp / (tp + fa)
    recall = tp / (tp + misses)
    f1 = 2 * precision * recall / (precision + recall)
    mean_err_ns = mean_direct([abs(d - t) for t, d in pairs])
    return f1, mean_err_ns
