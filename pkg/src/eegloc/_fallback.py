"""Pure numpy versions of the Hough kernels.

Every function returns exactly what its counterpart in ``_native.pyx``
returns; the test suite checks the two against each other.
"""
import numpy as np
from scipy import ndimage


def _vote_indices(shape, points, steps, radii):
    """Yield (radius index, in-grid voxel indices (n, 3), out-of-grid count)."""
    shape = np.asarray(shape)
    for r, radius in enumerate(radii):
        for sr in (radius, -radius):
            q = np.floor(points + sr * steps + 0.5).astype(np.int64)
            inside = np.all((q >= 0) & (q < shape), axis=1)
            yield r, q[inside], int(len(q) - np.count_nonzero(inside))


def cast_votes(shape, points, steps, radii):
    nvox = int(np.prod(shape))
    flat = np.zeros(nvox, dtype=np.int64)
    n_out = 0
    for _, q, out in _vote_indices(shape, points, steps, radii):
        n_out += out
        if len(q):
            flat += np.bincount(np.ravel_multi_index(q.T, shape), minlength=nvox)
    return flat.reshape(shape).astype(np.int32), n_out


def radius_votes(label_map, points, steps, radii, n_labels):
    counts = np.zeros((n_labels, len(radii)), dtype=np.int64)
    for r, q, _ in _vote_indices(label_map.shape, points, steps, radii):
        labs = label_map[q[:, 0], q[:, 1], q[:, 2]] if len(q) else np.empty(0, dtype=np.int32)
        labs = labs[labs > 0]
        counts[:, r] += np.bincount(labs - 1, minlength=n_labels)[:n_labels]
    return counts


def box_sum3(acc):
    out = np.asarray(acc, dtype=np.int32)
    for axis in range(3):
        padded = np.pad(out, [(1, 1) if a == axis else (0, 0) for a in range(3)])
        n = out.shape[axis]
        out = (np.take(padded, range(0, n), axis=axis)
               + np.take(padded, range(1, n + 1), axis=axis)
               + np.take(padded, range(2, n + 2), axis=axis))
    return np.ascontiguousarray(out, dtype=np.int32)


def local_maxima(sm):
    peak = ndimage.maximum_filter(sm, size=3, mode="constant", cval=np.iinfo(np.int32).min)
    return np.argwhere((sm > 0) & (sm >= peak))


def greedy_nms(centers, min_dist, max_keep):
    keep = []
    lim = min_dist * min_dist
    for c in range(len(centers)):
        if max_keep > 0 and len(keep) >= max_keep:
            break
        if keep:
            d = centers[keep] - centers[c]
            if np.any((d * d).sum(axis=1) < lim):
                continue
        keep.append(c)
    return np.asarray(keep, dtype=np.int64)
