"""Exit-time Monte Carlo for the Dirichlet problem of the sub-Laplacian.

Paths of the bundle diffusion are stepped until they leave a domain given
by a defining function (negative inside).  The crossing step is then
re-run at halved substeps whose increments are split by the conditional
Gaussian midpoint law, drilling depth-first into the earliest crossing
piece, until the exit point lands in a thin collar around the boundary.
This keeps the first-exit discretization bias far below the Monte Carlo
error.  When the refined dynamics reveal that a coarse crossing was
spurious, the path resumes ordinary stepping from the refined step
endpoint, so no exit-law bias is introduced.

Harmonic averages of boundary data at the exit points solve the
Dirichlet problem; mean exit times and boundary regularity probes reuse
the same sampler.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frame_bundle import velocity_arrays
from .models import ModelDescriptor
from .sde import BLOCK, SimConfig, _block_rng, _polar_batch

__all__ = [
    "Domain",
    "koranyi_ball",
    "ExitRecord",
    "ExitBatch",
    "exit_sample",
    "sample_exits",
    "DirichletResult",
    "solve_dirichlet",
    "regularity_probe",
    "MeanExitTime",
    "mean_exit_time",
]

DELTA_BAND = 1e-4
MAX_REFINE_LEVELS = 30
GRAD_STEP = 1e-6

STATUS_EXITED = 0
STATUS_HORIZON = 1
EXIT_STATUS_NAMES = ("exited", "horizon_exceeded")


@dataclass(frozen=True)
class Domain:
    """A relatively compact region cut out by a defining function.

    phi < 0 inside, phi > 0 outside; grad_phi is optional (finite
    differences otherwise) and must not vanish on the boundary.
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    grad_phi: Callable[[np.ndarray], np.ndarray] | None = None
    bounding_box: np.ndarray | None = None

    def phi_at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.phi(np.asarray(x, dtype=float)), dtype=float)

    def grad_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_phi is not None:
            return np.asarray(self.grad_phi(x), dtype=float)
        cols = []
        for j in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[j] = GRAD_STEP
            cols.append((self.phi_at(x + e) - self.phi_at(x - e)) / (2 * GRAD_STEP))
        return np.stack(cols, axis=-1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.phi_at(x) < 0


def koranyi_ball(n: int, radius: float) -> Domain:
    """The gauge ball |z|^4 + t^2 < R^4 of the 2n+1 Heisenberg chart."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    dim = 2 * n + 1
    r4 = radius**4

    def phi(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zsq = np.sum(x[..., : 2 * n] ** 2, axis=-1)
        return zsq**2 + x[..., 2 * n] ** 2 - r4

    def grad_phi(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zsq = np.sum(x[..., : 2 * n] ** 2, axis=-1)
        out = np.empty_like(x)
        out[..., : 2 * n] = 4.0 * zsq[..., None] * x[..., : 2 * n]
        out[..., 2 * n] = 2.0 * x[..., 2 * n]
        return out

    box = np.empty((dim, 2))
    box[: 2 * n, 0], box[: 2 * n, 1] = -radius, radius
    box[2 * n] = (-(radius**2), radius**2)
    return Domain(
        name=f"koranyi_ball(R={radius})", phi=phi, grad_phi=grad_phi, bounding_box=box
    )


@dataclass
class ExitRecord:
    tau: float
    exit_point: np.ndarray
    status: str
    phi_residual: float


@dataclass
class ExitBatch:
    """Vectorized exit data; horizon paths carry tau = t_horizon."""

    tau: np.ndarray            # (P,)
    points: np.ndarray         # (P, D)
    status: np.ndarray         # (P,) uint8
    phi_residual: np.ndarray   # (P,) signed phi at the recorded point

    @property
    def exited(self) -> np.ndarray:
        return self.status == STATUS_EXITED

    @property
    def horizon_fraction(self) -> float:
        return float(np.mean(self.status == STATUS_HORIZON))

    def record(self, i: int) -> ExitRecord:
        return ExitRecord(
            tau=float(self.tau[i]),
            exit_point=self.points[i].copy(),
            status=EXIT_STATUS_NAMES[self.status[i]],
            phi_residual=float(self.phi_residual[i]),
        )


def _heun(m: ModelDescriptor, x, e, db, reunitarize: bool):
    dx1, de1 = velocity_arrays(m, x, e, db)
    dx2, de2 = velocity_arrays(m, x + dx1, e + de1, db)
    x_new = x + 0.5 * (dx1 + dx2)
    e_new = e + 0.5 * (de1 + de2)
    if reunitarize:
        e_new = _polar_batch(e_new)
    return x_new, e_new


REFINE_EXIT = 0
REFINE_RESUME = 1


def _refine_events(
    m: ModelDescriptor,
    d: Domain,
    x_pre: np.ndarray,
    e_pre: np.ndarray,
    db: np.ndarray,
    dt: float,
    zdraws: np.ndarray,
    delta_band: float,
    max_levels: int,
    reunitarize: bool,
):
    """Depth-first localization of the first boundary crossing in a step.

    Pieces of the step are halved with conditionally split increments;
    a piece whose endpoint lies outside is drilled into, a piece that
    ends inside is traversed and the pending sibling piece popped from a
    per-path stack.  Terminates with either an exit point in the collar
    (or, past the level budget, the current overshoot) or, when the
    refined step turns out not to cross at all, a resume state at the end
    of the step.

    Returns (kind, t_in_step, x_out, e_out, residual) arrays.
    """
    c_count, n = x_pre.shape[0], m.n
    cur_x, cur_e, cur_db = x_pre.copy(), e_pre.copy(), db.copy()
    h = np.full(c_count, dt)
    t_off = np.zeros(c_count)
    level = np.zeros(c_count, dtype=np.int64)
    split_ctr = np.zeros(c_count, dtype=np.int64)
    depth = np.zeros(c_count, dtype=np.int64)
    stack_db = np.zeros((c_count, max_levels, n), dtype=complex)
    stack_h = np.zeros((c_count, max_levels))

    done = np.zeros(c_count, dtype=bool)
    kind = np.zeros(c_count, dtype=np.uint8)
    out_t = np.zeros(c_count)
    out_x = np.zeros_like(cur_x)
    out_e = np.zeros_like(cur_e)
    out_r = np.zeros(c_count)

    def settle(mask, what, x_end, e_end, phi_end):
        kind[mask] = what
        out_t[mask] = (t_off + h)[mask]
        out_x[mask] = x_end[mask]
        out_e[mask] = e_end[mask]
        out_r[mask] = phi_end[mask]
        done[mask] = True

    for _ in range(2 * max_levels + 2):
        if done.all():
            break
        x_end, e_end = _heun(m, cur_x, cur_e, cur_db, reunitarize)
        phi_end = d.phi_at(x_end)
        outside = ~done & (phi_end >= 0)
        accept = outside & ((phi_end <= delta_band) | (level >= max_levels))
        settle(accept, REFINE_EXIT, x_end, e_end, phi_end)

        inside = ~done & (phi_end < 0)
        if inside.any():
            # piece traversed without crossing: advance to its end
            cur_x[inside] = x_end[inside]
            cur_e[inside] = e_end[inside]
            t_off[inside] += h[inside]
            resume = inside & (depth == 0)
            settle(resume, REFINE_RESUME, x_end, e_end, phi_end)
            pop = inside & ~resume
            if pop.any():
                idx = np.flatnonzero(pop)
                depth[idx] -= 1
                cur_db[idx] = stack_db[idx, depth[idx]]
                h[idx] = stack_h[idx, depth[idx]]

        rem = ~done & (phi_end >= 0)
        if rem.any():
            g = zdraws[np.arange(c_count), np.minimum(split_ctr, max_levels - 1)]
            zeta = (g[:, :n] + 1j * g[:, n:]) * np.sqrt(h / 8.0)[:, None]
            db1 = 0.5 * cur_db + zeta
            x_mid, e_mid = _heun(m, cur_x, cur_e, db1, reunitarize)
            phi_mid = d.phi_at(x_mid)
            first = rem & (phi_mid >= 0)
            second = rem & ~first
            if first.any():
                idx = np.flatnonzero(first)
                stack_db[idx, depth[idx]] = (cur_db - db1)[idx]
                stack_h[idx, depth[idx]] = 0.5 * h[idx]
                depth[idx] += 1
                cur_db[idx] = db1[idx]
            if second.any():
                cur_x[second] = x_mid[second]
                cur_e[second] = e_mid[second]
                t_off[second] += 0.5 * h[second]
                cur_db[second] = (cur_db - db1)[second]
            h[rem] *= 0.5
            level[rem] += 1
            split_ctr[rem] += 1

    if not done.all():
        # unreachable by the iteration bound; settle defensively as exits
        x_end, e_end = _heun(m, cur_x, cur_e, cur_db, reunitarize)
        settle(~done, REFINE_EXIT, x_end, e_end, d.phi_at(x_end))
    return kind, out_t, out_x, out_e, out_r


def _event_zdraws(seed: int, path_ids: np.ndarray, steps: np.ndarray,
                  max_levels: int, n: int) -> np.ndarray:
    out = np.empty((path_ids.size, max_levels, 2 * n))
    for c in range(path_ids.size):
        ss = np.random.SeedSequence(
            entropy=int(seed), spawn_key=(1, int(path_ids[c]), int(steps[c]))
        )
        out[c] = np.random.Generator(np.random.PCG64(ss)).standard_normal(
            (max_levels, 2 * n)
        )
    return out


def _exit_block(
    m: ModelDescriptor,
    d: Domain,
    x0: np.ndarray,
    cfg: SimConfig,
    block: int,
    path_offset: int,
    delta_band: float,
    max_levels: int,
):
    """Exit sampling for one block of paths; x0 is (P, D).

    Runs in rounds: the vectorized main loop freezes paths at their
    crossing step, the batched refinement settles them (exit or resume),
    and resumed paths re-enter the loop at the following step with the
    block noise stream regenerated, so every path consumes exactly the
    increments of its slot.
    """
    n = m.n
    p_count = x0.shape[0]
    dt = cfg.dt
    x = x0.astype(float).copy()
    e = np.broadcast_to(np.eye(n, dtype=complex), (p_count, n, n)).copy()
    tau = np.full(p_count, cfg.t_horizon)
    status = np.full(p_count, STATUS_HORIZON, dtype=np.uint8)
    points = x.copy()
    resid = d.phi_at(x)
    reunit_every = cfg.reunitarize_every
    scale = np.sqrt(dt / 2.0)

    phi0 = d.phi_at(x)
    instant = phi0 > 0
    tau[instant] = 0.0
    status[instant] = STATUS_EXITED
    pending = ~instant
    start_step = np.zeros(p_count, dtype=np.int64)

    max_rounds = 64
    for _round in range(max_rounds):
        if not pending.any():
            break
        rng = _block_rng(cfg.seed, block)
        first_step = int(start_step[pending].min())
        for _ in range(first_step):
            rng.standard_normal((BLOCK, 2 * n))

        cross_idx: list[np.ndarray] = []
        cross_step: list[np.ndarray] = []
        cross_x: list[np.ndarray] = []
        cross_e: list[np.ndarray] = []
        cross_db: list[np.ndarray] = []
        active = pending & (start_step <= first_step)

        for k in range(first_step, cfg.n_steps):
            waiting = pending & (start_step == k)
            active |= waiting
            if not (active.any() or (pending & (start_step > k)).any()):
                break
            g = rng.standard_normal((BLOCK, 2 * n))[:p_count]
            if not active.any():
                continue
            db = (g[:, :n] + 1j * g[:, n:]) * scale
            reunit = bool(reunit_every) and (k + 1) % reunit_every == 0
            x_new, e_new = _heun(m, x, e, db, reunit)
            crossed = active & (d.phi_at(x_new) >= 0)
            if crossed.any():
                idx = np.flatnonzero(crossed)
                cross_idx.append(idx)
                cross_step.append(np.full(idx.size, k))
                cross_x.append(x[idx].copy())
                cross_e.append(e[idx].copy())
                cross_db.append(db[idx].copy())
            upd = active & ~crossed
            x[upd], e[upd] = x_new[upd], e_new[upd]
            active = upd

        # paths that ran out the horizon in this round
        horizon = active
        points[horizon] = x[horizon]
        resid[horizon] = d.phi_at(x[horizon])
        pending = np.zeros(p_count, dtype=bool)

        if cross_idx:
            idx = np.concatenate(cross_idx)
            steps = np.concatenate(cross_step)
            zdraws = _event_zdraws(
                cfg.seed, idx + path_offset, steps, max_levels, n
            )
            kind, t_in, x_out, e_out, r_out = _refine_events(
                m, d,
                np.concatenate(cross_x), np.concatenate(cross_e),
                np.concatenate(cross_db), dt, zdraws,
                delta_band, max_levels, bool(reunit_every),
            )
            exited = kind == REFINE_EXIT
            ex = idx[exited]
            tau[ex] = steps[exited] * dt + t_in[exited]
            points[ex] = x_out[exited]
            resid[ex] = r_out[exited]
            status[ex] = STATUS_EXITED
            res = kind == REFINE_RESUME
            rs = idx[res]
            x[rs] = x_out[res]
            e[rs] = e_out[res]
            start_step[rs] = steps[res] + 1
            pending[rs] = True
            pending &= start_step < cfg.n_steps
            overtime = res & (steps + 1 >= cfg.n_steps)
            ov = idx[overtime]
            points[ov] = x_out[overtime]
            resid[ov] = r_out[overtime]

    return tau, points, status, resid


def sample_exits(
    m: ModelDescriptor,
    x0: np.ndarray,
    d: Domain,
    cfg: SimConfig,
    n_paths: int,
    n_workers: int = 1,
    delta_band: float = DELTA_BAND,
    max_refine_levels: int = MAX_REFINE_LEVELS,
) -> ExitBatch:
    """First-exit samples of the diffusion started from x0 with frame I.

    x0 may be a single point (shared by all paths) or one point per path
    of shape (n_paths, D).  Uses the same block seed rule as the plain
    simulators, so results are reproducible for any worker count.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        starts = np.broadcast_to(x0, (n_paths, x0.size))
    else:
        if x0.shape[0] != n_paths:
            raise ValueError("per-path starts must match n_paths")
        starts = x0
    m.require_inside(starts)
    n_blocks = -(-n_paths // BLOCK)

    def run(block: int):
        lo, hi = block * BLOCK, min((block + 1) * BLOCK, n_paths)
        return _exit_block(
            m, d, starts[lo:hi], cfg, block, lo, delta_band, max_refine_levels
        )

    if n_workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    tau, points, status, resid = (np.concatenate(a) for a in zip(*parts))
    return ExitBatch(tau=tau, points=points, status=status, phi_residual=resid)


def exit_sample(
    m: ModelDescriptor,
    x0: np.ndarray,
    d: Domain,
    cfg: SimConfig,
    delta_band: float = DELTA_BAND,
    max_refine_levels: int = MAX_REFINE_LEVELS,
) -> ExitRecord:
    """Single first-exit draw; path 0 of the corresponding batch."""
    batch = sample_exits(
        m, x0, d, cfg, 1, delta_band=delta_band, max_refine_levels=max_refine_levels
    )
    return batch.record(0)


@dataclass
class DirichletResult:
    estimate: float
    stderr: float
    n_used: int
    horizon_fraction: float
    flagged: bool
    collar_max: float


def solve_dirichlet(
    m: ModelDescriptor,
    d: Domain,
    f: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    n_paths: int,
    cfg: SimConfig,
    n_workers: int = 1,
    horizon_threshold: float = 0.01,
    delta_band: float = DELTA_BAND,
    max_refine_levels: int = MAX_REFINE_LEVELS,
) -> DirichletResult:
    """Monte Carlo harmonic average of boundary data at exit points.

    Horizon-exceeded paths are excluded and reported; the result is
    flagged when their fraction passes the threshold.  f only needs to be
    evaluable in the collar around the boundary.
    """
    batch = sample_exits(
        m, x0, d, cfg, n_paths, n_workers=n_workers,
        delta_band=delta_band, max_refine_levels=max_refine_levels,
    )
    mask = batch.exited
    n_used = int(mask.sum())
    if n_used == 0:
        raise RuntimeError("no path exited before the horizon")
    vals = np.asarray(f(batch.points[mask]), dtype=float)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_used)) if n_used > 1 else 0.0
    frac = batch.horizon_fraction
    collar = float(np.abs(batch.phi_residual[mask]).max())
    return DirichletResult(
        estimate=est, stderr=se, n_used=n_used, horizon_fraction=frac,
        flagged=frac > horizon_threshold, collar_max=collar,
    )


def regularity_probe(
    m: ModelDescriptor,
    d: Domain,
    xb: np.ndarray,
    t_probes,
    n_paths: int,
    seed: int,
    n_steps: int = 1000,
    n_workers: int = 1,
    delta_band: float = DELTA_BAND,
    max_refine_levels: int = MAX_REFINE_LEVELS,
) -> np.ndarray:
    """Fraction of paths from a boundary point that exit by each probe time.

    A regular boundary point shows fractions near one already at tiny
    probe times; the fractions are nondecreasing by construction.
    """
    xb = np.asarray(xb, dtype=float)
    if abs(float(d.phi_at(xb))) > delta_band:
        raise ValueError("probe point is not within the boundary collar")
    t_probes = np.atleast_1d(np.asarray(t_probes, dtype=float))
    cfg = SimConfig(
        t_horizon=float(t_probes.max()), n_steps=n_steps, seed=seed,
        reunitarize_every=1, coordinate_cap=1e6,
    )
    batch = sample_exits(
        m, xb, d, cfg, n_paths, n_workers=n_workers,
        delta_band=delta_band, max_refine_levels=max_refine_levels,
    )
    return np.array([(batch.exited & (batch.tau <= t)).mean() for t in t_probes])


@dataclass
class MeanExitTime:
    mean: float
    stderr: float
    horizon_fraction: float
    is_lower_bound: bool


def mean_exit_time(
    m: ModelDescriptor,
    d: Domain,
    x0: np.ndarray,
    n_paths: int,
    cfg: SimConfig,
    n_workers: int = 1,
    delta_band: float = DELTA_BAND,
    max_refine_levels: int = MAX_REFINE_LEVELS,
) -> MeanExitTime:
    """Mean first-exit time; horizon paths enter at the horizon value.

    Any horizon-exceeded path makes the estimate a lower bound, which is
    flagged rather than silently dropped.
    """
    batch = sample_exits(
        m, x0, d, cfg, n_paths, n_workers=n_workers,
        delta_band=delta_band, max_refine_levels=max_refine_levels,
    )
    mean = float(batch.tau.mean())
    se = float(batch.tau.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MeanExitTime(
        mean=mean, stderr=se,
        horizon_fraction=batch.horizon_fraction,
        is_lower_bound=bool((batch.status == STATUS_HORIZON).any()),
    )
