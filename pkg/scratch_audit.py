"""Scratch: tune the Morse-Euler audit map family. Not part of the package."""
import sys
from itertools import product

import numpy as np

from mapmotif import critpoints, mapio

TYPE = {3: "peak", 2: "pass", 1: "pale", 0: "pit"}


class Field:
    """Analytic periodic Gaussian mixture, one image shell (L >> sigma)."""

    def __init__(self, pts, sigma, period):
        self.sigma = float(sigma)
        self.period = np.asarray(period, float)
        centers, weights = [], []
        for p, w in pts:
            for s in product((-1, 0, 1), repeat=3):
                centers.append(np.asarray(p, float) + np.array(s) * self.period)
                weights.append(float(w))
        self.centers = np.array(centers)          # (m, 3)
        self.weights = np.array(weights)          # (m,)

    def value(self, x):
        d = x - self.centers
        return float(np.sum(self.weights * np.exp(-np.sum(d * d, axis=1) / (2 * self.sigma**2))))

    def grad(self, x):
        s2 = self.sigma ** 2
        d = x - self.centers
        e = self.weights * np.exp(-np.sum(d * d, axis=1) / (2 * s2))
        return -(e[:, None] * d).sum(axis=0) / s2

    def hess(self, x):
        s2 = self.sigma ** 2
        d = x - self.centers
        e = self.weights * np.exp(-np.sum(d * d, axis=1) / (2 * s2))
        h = np.einsum("m,mi,mj->ij", e, d, d) / s2**2
        h -= np.eye(3) * e.sum() / s2
        return h

    def grid_values(self, axes):
        out = np.zeros((len(axes[0]), len(axes[1]), len(axes[2])))
        s2 = self.sigma ** 2
        for c, w in zip(self.centers, self.weights):
            ex = np.exp(-(axes[0] - c[0]) ** 2 / (2 * s2))
            ey = np.exp(-(axes[1] - c[1]) ** 2 / (2 * s2))
            ez = np.exp(-(axes[2] - c[2]) ** 2 / (2 * s2))
            out += w * ex[:, None, None] * ey[None, :, None] * ez[None, None, :]
        return out

    def grid_grad(self, axes):
        s2 = self.sigma ** 2
        shp = (len(axes[0]), len(axes[1]), len(axes[2]))
        g = np.zeros((3,) + shp)
        for c, w in zip(self.centers, self.weights):
            dx, dy, dz = axes[0] - c[0], axes[1] - c[1], axes[2] - c[2]
            ex, ey, ez = (np.exp(-d * d / (2 * s2)) for d in (dx, dy, dz))
            e = w * ex[:, None, None] * ey[None, :, None] * ez[None, None, :]
            g[0] += e * (-dx / s2)[:, None, None]
            g[1] += e * (-dy / s2)[None, :, None]
            g[2] += e * (-dz / s2)[None, None, :]
        return g


def true_critical_points(field, n):
    L = field.period
    axes = [np.linspace(0, L[a], n, endpoint=False) for a in range(3)]
    G = field.grid_grad(axes)
    shifts = list(product((0, 1), repeat=3))

    def corners(A):
        return np.stack([np.roll(np.roll(np.roll(A, -dx, 0), -dy, 1), -dz, 2)
                         for dx, dy, dz in shifts])

    flag = None
    for a in range(3):
        c = corners(G[a])
        both = (c.min(0) <= 0) & (c.max(0) >= 0)
        flag = both if flag is None else (flag & both)

    h = L / n
    found = []
    for base in np.argwhere(flag):
        x0 = (base + 0.5) * h
        x = x0.copy()
        ok = False
        for _ in range(100):
            gr = field.grad(x)
            if np.linalg.norm(gr) < 1e-11:
                ok = True
                break
            try:
                step = np.linalg.solve(field.hess(x), -gr)
            except np.linalg.LinAlgError:
                break
            ns = np.linalg.norm(step)
            if ns > 1.5 * h.max():
                step *= 1.5 * h.max() / ns
            x = x + step
        if not ok:
            continue
        d0 = x - x0
        d0 -= L * np.round(d0 / L)
        if np.linalg.norm(d0) > 2.5 * h.max():
            continue
        x = np.mod(x, L)
        if any(np.linalg.norm((x - y) - L * np.round((x - y) / L)) < 0.15 for y, _ in found):
            continue
        ev = np.linalg.eigvalsh(field.hess(x))
        found.append((x, int(np.sum(ev < 0))))
    return found


def make_map(seed, cell=12.0, spacing=0.5, sigma_rng=(1.8, 2.4), nblob_rng=(4, 7)):
    rng = np.random.default_rng(seed)
    n_blobs = int(rng.integers(*nblob_rng))
    sigma = float(rng.uniform(*sigma_rng))
    pts = [(rng.uniform(0.0, cell, 3), float(rng.uniform(0.7, 1.3))) for _ in range(n_blobs)]
    n = int(round(cell / spacing))
    field = Field(pts, sigma, (cell,) * 3)
    axes = [spacing * np.arange(n)] * 3
    values = field.grid_values(axes)
    dmap = mapio.DensityMap(dims=(n,) * 3, spacing=(spacing,) * 3, origin=(0.0,) * 3,
                            periodic=True, values=values)
    return dmap, field


def run(seed, oracle_n=96, **kw):
    dmap, field = make_map(seed, **kw)
    truth = true_critical_points(field, oracle_n)
    res = critpoints.extract_critical_points(
        dmap, critpoints.ExtractConfig(include_all_types=True))
    L = field.period
    got = [(np.mod(p.position, L), p.n_negative) for p in res.points]
    t_euler = sum((-1) ** (3 - n) for _, n in truth)
    g_euler = sum((-1) ** (3 - n) for _, n in got)
    used = set()
    missed, wrong = [], []
    for x, nneg in truth:
        best, bd = None, np.inf
        for k, (y, gn) in enumerate(got):
            if k in used:
                continue
            d = x - y
            d -= L * np.round(d / L)
            dd = np.linalg.norm(d)
            if dd < bd:
                bd, best = dd, k
        if best is not None and bd < 0.5:
            used.add(best)
            if got[best][1] != nneg:
                ev = np.linalg.eigvalsh(field.hess(x))
                wrong.append((x, nneg, got[best][1], ev))
        else:
            missed.append((x, nneg))
    spur = [got[k] for k in range(len(got)) if k not in used]
    return dict(truth=len(truth), got=len(got), t_euler=t_euler, g_euler=g_euler,
                missed=missed, spur=spur, wrong=wrong,
                nrej=len(res.rejections), field=field)


if __name__ == "__main__":
    spacing = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
    lo = float(sys.argv[2]) if len(sys.argv) > 2 else 1.8
    hi = float(sys.argv[3]) if len(sys.argv) > 3 else 2.4
    N = int(sys.argv[4]) if len(sys.argv) > 4 else 14
    ok = 0
    for seed in range(N):
        r = run(seed, spacing=spacing, sigma_rng=(lo, hi))
        good = (r["g_euler"] == 0 and r["t_euler"] == 0 and not r["missed"]
                and not r["spur"] and not r["wrong"])
        if good:
            ok += 1
            print(f"seed {seed}: OK truth={r['truth']}")
            continue
        print(f"seed {seed}: truth={r['truth']}(e{r['t_euler']}) got={r['got']}(e{r['g_euler']}) "
              f"miss={len(r['missed'])} spur={len(r['spur'])} wrong={len(r['wrong'])} rej={r['nrej']}")
        f = r["field"]
        for x, n in r["missed"]:
            print(f"   MISS {TYPE[n]} {np.round(x, 2)} rho={f.value(x):.4f}")
        for y, n in r["spur"]:
            print(f"   SPUR {TYPE[n]} {np.round(y, 2)} rho={f.value(y):.4f}")
        for x, tn, gn, ev in r["wrong"]:
            print(f"   TYPE {TYPE[tn]}->{TYPE[gn]} {np.round(x, 2)} eig={np.round(ev, 4)}")
    print(f"passed {ok}/{N}")
