"""Compiled compass walk used by the equal-chord resampler."""

import numpy as np
from numba import njit


@njit(cache=True)
def compass_walk(points, cumlen, chord, n, out):
    """Step along ``points`` placing ``n`` further nodes at Euclidean distance ``chord``.

    Each new node is the first exit of the polyline from the disc of radius
    ``chord`` around the previous node. Fills ``out[0..n]`` and returns the
    arclength position of the last node minus the polyline length. When the
    walk runs off the end the result is extended continuously (positive and
    growing with the steps still owed), which keeps it monotone in ``chord``.
    """
    m = points.shape[0] - 1
    total = cumlen[m]
    seg = 0
    t = 0.0
    qx = points[0, 0]
    qy = points[0, 1]
    out[0, 0] = qx
    out[0, 1] = qy
    for i in range(1, n + 1):
        found = False
        while seg < m:
            bx = points[seg + 1, 0]
            by = points[seg + 1, 1]
            ax = points[seg, 0] + t * (bx - points[seg, 0])
            ay = points[seg, 1] + t * (by - points[seg, 1])
            dx = bx - ax
            dy = by - ay
            fx = ax - qx
            fy = ay - qy
            a = dx * dx + dy * dy
            if a > 0.0:
                b = 2.0 * (fx * dx + fy * dy)
                c = fx * fx + fy * fy - chord * chord
                if c > 0.0:
                    c = 0.0
                disc = np.sqrt(b * b - 4.0 * a * c)
                if b > 0.0:
                    u = -2.0 * c / (disc + b)
                else:
                    u = (disc - b) / (2.0 * a)
                if u <= 1.0:
                    if u < 0.0:
                        u = 0.0
                    qx = ax + u * dx
                    qy = ay + u * dy
                    t = t + u * (1.0 - t)
                    found = True
                    break
            seg += 1
            t = 0.0
        if not found:
            rx = points[m, 0] - qx
            ry = points[m, 1] - qy
            r = np.sqrt(rx * rx + ry * ry)
            for j in range(i, n + 1):
                out[j, 0] = points[m, 0]
                out[j, 1] = points[m, 1]
            return (chord - r) + (n - i) * chord
        out[i, 0] = qx
        out[i, 1] = qy
    seglen = cumlen[seg + 1] - cumlen[seg] if seg < m else 0.0
    return cumlen[seg] + t * seglen - total
