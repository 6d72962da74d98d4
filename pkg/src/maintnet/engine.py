"""Compiled simulation kernels for high-throughput evaluation and rollouts.

The pure-Python model in :mod:`maintnet.mdp` is the reference
implementation; this module mirrors it with numba-compiled kernels
operating on flat arrays so that million-repetition evaluations and
rollout-based policy improvement run at native speed.  Kernels draw their
randomness from splitmix64 counter streams derived per repetition /
rollout, which makes every result independent of thread scheduling.

Policies are lowered to a flat parameter record (``CompiledPolicy``);
policies without a kernel lowering simply fall back to the Python path in
the callers.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numba as nb
import numpy as np
from numba import njit, prange
from numba.core import types
from numba.typed import Dict as NumbaDict

from . import mdp
from .errors import CompatibilityError
from .mdp import Instance, NetworkState

__all__ = [
    "CompiledInstance",
    "CompiledPolicy",
    "compile_instance",
    "compile_policy",
    "default_threads",
    "set_threads",
]

POLICY_IDLE = 0
POLICY_RANDOM = 1
POLICY_DISPATCH = 2
POLICY_TABLE = 3
POLICY_NETWORK = 4

_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_F32 = np.empty(0, dtype=np.float32)


def _empty_table() -> NumbaDict:
    return NumbaDict.empty(key_type=types.int64, value_type=types.int64)


_SHARED_EMPTY_TABLE = _empty_table()


def default_threads() -> int:
    env = os.environ.get("MAINTNET_THREADS")
    if env:
        return max(1, int(env))
    return nb.get_num_threads()


def set_threads(n: int | None) -> None:
    nb.set_num_threads(max(1, int(n))) if n else nb.set_num_threads(default_threads())


# ---------------------------------------------------------------------------
# instance and policy lowering


@dataclass(frozen=True)
class CompiledInstance:
    travel: np.ndarray  # (M, M) int64
    n_levels: np.ndarray  # (M,) int64
    advance_p: np.ndarray  # (M, max_levels) float64, worsening odds per level
    t_pm: np.ndarray
    t_cm: np.ndarray
    c_pm: np.ndarray
    c_cm: np.ndarray
    c_dt: np.ndarray
    c_t: float
    gamma: float
    init_loc: np.ndarray  # (K,) int64

    @property
    def machine_count(self) -> int:
        return self.travel.shape[0]

    @property
    def engineer_count(self) -> int:
        return self.init_loc.shape[0]


def compile_instance(instance: Instance) -> CompiledInstance:
    m_count = instance.machine_count
    max_n = max(instance.levels)
    advance_p = np.zeros((m_count, max_n), dtype=np.float64)
    for m in range(m_count):
        for level in range(1, instance.levels[m]):
            advance_p[m, level - 1] = instance.advance_probability(m, level)
    return CompiledInstance(
        travel=np.ascontiguousarray(instance.travel, dtype=np.int64),
        n_levels=np.asarray(instance.levels, dtype=np.int64),
        advance_p=advance_p,
        t_pm=np.ascontiguousarray(instance.repair_pm, dtype=np.int64),
        t_cm=np.ascontiguousarray(instance.repair_cm, dtype=np.int64),
        c_pm=np.ascontiguousarray(instance.cost_pm, dtype=np.float64),
        c_cm=np.ascontiguousarray(instance.cost_cm, dtype=np.float64),
        c_dt=np.ascontiguousarray(instance.cost_downtime, dtype=np.float64),
        c_t=float(instance.cost_travel),
        gamma=float(instance.gamma),
        init_loc=np.asarray(instance.initial_locations, dtype=np.int64),
    )


@dataclass(frozen=True)
class CompiledPolicy:
    """Flat lowering of a policy: a kind tag plus parameter pools.

    ints layout per kind --
      dispatch: thresholds, one per machine;
      table: [delta_bound];
      network: [feature_design, n_layers, dims[0..n_layers]] with the
        weight pool holding per layer a row-major (in x out) matrix
        followed by the bias vector.
    """

    kind: int
    ints: np.ndarray
    weights: np.ndarray
    table: NumbaDict

    def args(self) -> tuple:
        return (self.kind, self.ints, self.weights, self.table)


def pack_state(ci: CompiledInstance, state: NetworkState, delta_bound: int) -> int:
    key = 0
    for m in range(ci.machine_count):
        key = key * int(ci.n_levels[m]) + (state.levels[m] - 1)
    for k in range(ci.engineer_count):
        key = key * ci.machine_count + state.location[k]
        key = key * 2 + state.maintaining[k]
        key = key * (delta_bound + 1) + state.busy_for[k]
    return key


def compile_policy(instance: Instance, policy) -> CompiledPolicy | None:
    """Lower a policy for kernel execution; None if unsupported."""
    from .heuristics import DispatchPolicy
    from .policies import IdlePolicy, RandomPolicy

    if isinstance(policy, IdlePolicy):
        return CompiledPolicy(POLICY_IDLE, _EMPTY_I64, _EMPTY_F32, _SHARED_EMPTY_TABLE)
    if isinstance(policy, RandomPolicy):
        return CompiledPolicy(POLICY_RANDOM, _EMPTY_I64, _EMPTY_F32, _SHARED_EMPTY_TABLE)
    if isinstance(policy, DispatchPolicy):
        if policy.thresholds.state_fn is not None:
            return None
        flags = 1 if policy.exclude_targeted else 0
        ints = np.asarray([flags] + list(policy.thresholds.values), dtype=np.int64)
        return CompiledPolicy(POLICY_DISPATCH, ints, _EMPTY_F32, _SHARED_EMPTY_TABLE)

    from .exact import TablePolicy

    if isinstance(policy, TablePolicy):
        if policy.index.instance != instance:
            raise CompatibilityError("policy table belongs to a different instance")
        ci = compile_instance(instance)
        db = policy.index.delta_bound
        table = _empty_table()
        m_count = instance.machine_count
        for state, s in policy.index.index.items():
            code = 0
            for action in policy.table[s]:
                code = code * (m_count + 1) + mdp.action_ordinal(action, m_count)
            table[pack_state(ci, state, db)] = code
        return CompiledPolicy(POLICY_TABLE, np.asarray([db], dtype=np.int64), _EMPTY_F32, table)

    from .learning import NetworkPolicy

    if isinstance(policy, NetworkPolicy):
        policy.network.require_compatible(instance)
        return compile_policy_network(policy.network)
    return None


def compile_policy_network(net) -> CompiledPolicy:
    """Lower a trained network directly (``net`` is a TrainedNetwork).

    Weight matrices are stored output-major so the inner product runs over
    contiguous memory.
    """
    dims = [net.input_dim] + list(net.hidden_widths) + [net.output_dim]
    ints = np.asarray([net.feature_design_id, len(dims) - 1] + dims, dtype=np.int64)
    pool = []
    for w, b in net.layers:
        pool.append(np.ascontiguousarray(w.T, dtype=np.float32).ravel())
        pool.append(np.ascontiguousarray(b, dtype=np.float32).ravel())
    weights = np.concatenate(pool) if pool else _EMPTY_F32
    return CompiledPolicy(POLICY_NETWORK, ints, weights, _SHARED_EMPTY_TABLE)


def state_to_arrays(state: NetworkState):
    return (
        np.asarray(state.levels, dtype=np.int64),
        np.asarray(state.location, dtype=np.int64),
        np.asarray(state.maintaining, dtype=np.int64),
        np.asarray(state.busy_for, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# splitmix64 counter streams

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(nb.uint64(nb.uint64), cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(nb.uint64(nb.uint64, nb.uint64), cache=True, inline="always")
def _derive(seed, stream_id):
    return _mix64(seed ^ _mix64(stream_id * _GOLDEN + np.uint64(0x1F123BB5)))


@njit(nb.uint64(nb.uint64[:]), cache=True, inline="always")
def _next_u64(rng_state):
    rng_state[0] += _GOLDEN
    return _mix64(rng_state[0])


@njit(nb.float64(nb.uint64[:]), cache=True, inline="always")
def _u01(rng_state):
    # 53 high bits scaled into [0, 1)
    return (_next_u64(rng_state) >> np.uint64(11)) * 1.1102230246251565e-16


@njit(nb.int64(nb.uint64[:], nb.int64), cache=True, inline="always")
def _randint(rng_state, n):
    v = np.int64(_u01(rng_state) * n)
    if v >= n:
        v = n - 1
    return v


@njit(nb.int64(nb.uint64[:], nb.float64), cache=True, inline="always")
def _geometric_horizon(rng_state, gamma):
    # T with P(T = t) = (1 - gamma) * gamma^t, t >= 0
    if gamma <= 0.0:
        _next_u64(rng_state)
        return 0
    u = _u01(rng_state)
    if u <= 0.0:
        u = 5.0e-324
    return np.int64(np.log(u) / np.log(gamma))


# ---------------------------------------------------------------------------
# core dynamics on arrays


@njit(cache=True)
def _apply_action(travel, n_levels, t_pm, t_cm, x, loc, mnt, rem, k, a):
    m_count = travel.shape[0]
    if a == m_count:  # start maintenance
        m = loc[k]
        if x[m] == n_levels[m]:
            rem[k] = t_cm[m]
        else:
            rem[k] = t_pm[m]
            x[m] = n_levels[m]
        mnt[k] = 1
    elif a == loc[k]:
        if rem[k] == 0:
            rem[k] = 1  # idle for one epoch
    else:
        rem[k] = travel[loc[k], a]
        loc[k] = a
        mnt[k] = 0


@njit(cache=True)
def _stage_cost(travel, n_levels, c_pm, c_cm, c_dt, c_t, x, loc, mnt, rem, actions, comps):
    """Cost components of the joint action on the pre-action arrays.

    comps receives (pm, cm, downtime, travel); returns the total.
    """
    m_count = travel.shape[0]
    k_count = loc.shape[0]
    pm = 0.0
    cm = 0.0
    dt = 0.0
    tr = 0.0
    for m in range(m_count):
        if x[m] == n_levels[m]:
            dt += c_dt[m]
    for k in range(k_count):
        a = actions[k]
        if a == m_count:
            m = loc[k]
            if x[m] == n_levels[m]:
                cm += c_cm[m]
            else:
                pm += c_pm[m]
                dt += c_dt[m]  # machine taken down for maintenance now
        elif a != loc[k]:
            tr += c_t
        if rem[k] > 0 and mnt[k] == 0:
            tr += c_t
    comps[0] = pm
    comps[1] = cm
    comps[2] = dt
    comps[3] = tr
    return pm + cm + dt + tr


@njit(cache=True)
def _advance(n_levels, advance_p, x, loc, mnt, rem, rng_state, completing):
    m_count = n_levels.shape[0]
    k_count = loc.shape[0]
    for m in range(m_count):
        completing[m] = 0
    for k in range(k_count):
        if mnt[k] == 1 and rem[k] == 1:
            completing[loc[k]] = 1
    # one draw per machine regardless of eligibility keeps sibling rollouts
    # aligned under common random numbers
    for m in range(m_count):
        u = _u01(rng_state)
        if completing[m] == 1:
            x[m] = 1
        elif x[m] < n_levels[m]:
            if u < advance_p[m, x[m] - 1]:
                x[m] += 1
    for k in range(k_count):
        if rem[k] <= 1:
            mnt[k] = 0
        if rem[k] > 0:
            rem[k] -= 1


# ---------------------------------------------------------------------------
# assignment (shortest augmenting path, mirrors assignment.hungarian)


@njit(cache=True)
def _solve_assignment(cost, n, assignment, u, v, minv, way, used, col_match):
    for j in range(n + 1):
        u[j] = 0.0
        v[j] = 0.0
        col_match[j] = -1
    for i in range(n):
        col_match[n] = i
        j0 = n
        for j in range(n + 1):
            minv[j] = np.inf
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = col_match[j0]
            delta = np.inf
            j1 = -1
            for j in range(n):
                if used[j] == 1:
                    continue
                cur = cost[i0 * n + j] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j] == 1:
                    u[col_match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_match[j0] == -1:
                break
        while j0 != n:
            j1 = way[j0]
            col_match[j0] = col_match[j1]
            j0 = j1
    for j in range(n):
        assignment[col_match[j]] = j


# ---------------------------------------------------------------------------
# feature computation and network forward pass


@njit(cache=True)
def _featurize(design, travel, n_levels, x, loc, mnt, rem, acting, out):
    m_count = travel.shape[0]
    k_count = loc.shape[0]
    if design == 3:
        for m in range(m_count):
            out[m] = x[m]
        for k in range(k_count):
            out[m_count + 3 * k] = loc[k]
            out[m_count + 3 * k + 1] = mnt[k]
            out[m_count + 3 * k + 2] = rem[k]
        out[m_count + 3 * k_count] = acting
        return
    total_av = 0
    for m in range(m_count):
        base = 7 * m
        xm = x[m]
        n_av = 0
        n_ua = 0
        t_maint = 0
        th1 = 0
        th2 = 0
        for k in range(k_count):
            if loc[k] != m:
                continue
            if rem[k] == 0:
                n_av += 1
            else:
                n_ua += 1
                if mnt[k] == 1:
                    t_maint = rem[k]
                else:  # inbound: remaining travel time
                    if th1 == 0 or rem[k] < th1:
                        th2 = th1
                        th1 = rem[k]
                    elif th2 == 0 or rem[k] < th2:
                        th2 = rem[k]
        total_av += n_av
        out[base] = xm
        out[base + 1] = n_av
        out[base + 2] = n_ua
        out[base + 3] = t_maint
        out[base + 4] = th1
        out[base + 5] = th2
        out[base + 6] = 1.0 if loc[acting] == m else 0.0
    if design == 1:
        out[7 * m_count] = total_av


@njit(cache=True, fastmath=True)
def _forward(ints, weights, features, buf_a, buf_b):
    """MLP forward pass; returns the buffer holding the output logits."""
    n_layers = ints[1]
    in_dim = ints[2]
    for i in range(in_dim):
        buf_a[i] = features[i]
    offset = 0
    src = buf_a
    dst = buf_b
    for layer in range(n_layers):
        n_in = ints[2 + layer]
        n_out = ints[3 + layer]
        bias_off = offset + n_in * n_out
        for j in range(n_out):
            acc = np.float32(weights[bias_off + j])
            row = offset + j * n_in
            for i in range(n_in):
                acc += src[i] * weights[row + i]
            if layer < n_layers - 1 and acc < 0.0:
                acc = np.float32(0.0)  # hidden layers are rectified
            dst[j] = acc
        offset += n_in * n_out + n_out
        tmp = src
        src = dst
        dst = tmp
    return src


# ---------------------------------------------------------------------------
# per-kind decision rules
#
# scratch_i must hold >= 4*M + 6*K + 4 int64 entries, scratch_f >= (K+1)^2 +
# 3*(K+2) float64, and the feature/logit buffers are sized by the caller.


@njit(cache=True)
def _dispatch_decide(
    travel, n_levels, t_pm, t_cm, ints,
    x, loc, mnt, rem, rng_state, actions, scratch_i, scratch_f,
):
    m_count = travel.shape[0]
    k_count = loc.shape[0]
    exclude_targeted = ints[0] == 1
    thresholds = ints[1:]
    for k in range(k_count):
        actions[k] = loc[k]
    any_ranked = False
    for m in range(m_count):
        if x[m] >= thresholds[m]:
            any_ranked = True
            break
    if not any_ranked:
        return
    avail = scratch_i[:k_count]
    n_avail = 0
    for k in range(k_count):
        if rem[k] == 0:
            avail[n_avail] = k
            n_avail += 1
    if n_avail == 0:
        return
    taken = scratch_i[k_count : k_count + m_count]
    for m in range(m_count):
        taken[m] = 0
    for k in range(k_count):
        if rem[k] > 0 and (exclude_targeted or mnt[k] == 1):
            taken[loc[k]] = 1
    ranked = scratch_i[k_count + m_count : k_count + 2 * m_count]
    n_ranked = 0
    # insertion in (level desc, index asc) order
    for m in range(m_count):
        if taken[m] == 1 or x[m] < thresholds[m]:
            continue
        pos = n_ranked
        while pos > 0 and x[ranked[pos - 1]] < x[m]:
            ranked[pos] = ranked[pos - 1]
            pos -= 1
        ranked[pos] = m
        n_ranked += 1
    if n_ranked == 0:
        return
    dist = scratch_f[: m_count]
    while n_ranked > n_avail:
        worst = -1.0
        for j in range(n_ranked):
            m = ranked[j]
            best = np.inf
            for i in range(n_avail):
                d = travel[loc[avail[i]], m]
                if d < best:
                    best = d
            dist[j] = best
            if best > worst:
                worst = best
        ties = 0
        for j in range(n_ranked):
            if dist[j] == worst:
                ties += 1
        pick = _randint(rng_state, ties)
        drop = -1
        for j in range(n_ranked):
            if dist[j] == worst:
                if pick == 0:
                    drop = j
                    break
                pick -= 1
        for j in range(drop, n_ranked - 1):
            ranked[j] = ranked[j + 1]
        n_ranked -= 1
    # assignment over available engineers x (jobs + zero-cost dummies)
    n = n_avail
    cost = scratch_f[m_count : m_count + n * n]
    for i in range(n):
        for j in range(n):
            if j < n_ranked:
                cost[i * n + j] = travel[loc[avail[i]], ranked[j]]
            else:
                cost[i * n + j] = 0.0
    base = m_count + n * n
    fa = scratch_f[base : base + (n + 1)]
    fb = scratch_f[base + (n + 1) : base + 2 * (n + 1)]
    fc = scratch_f[base + 2 * (n + 1) : base + 3 * (n + 1)]
    ia = scratch_i[k_count + 2 * m_count : k_count + 2 * m_count + (n + 1)]
    ib = scratch_i[k_count + 2 * m_count + (n + 1) : k_count + 2 * m_count + 2 * (n + 1)]
    ic = scratch_i[k_count + 2 * m_count + 2 * (n + 1) : k_count + 2 * m_count + 3 * (n + 1)]
    assign = scratch_i[k_count + 2 * m_count + 3 * (n + 1) : k_count + 2 * m_count + 3 * (n + 1) + n]
    _solve_assignment(cost, n, assign, fa, fb, fc, ia, ib, ic)
    for i in range(n):
        j = assign[i]
        if j >= n_ranked:
            continue
        k = avail[i]
        m = ranked[j]
        if m == loc[k]:
            maintained = False
            for k2 in range(k_count):
                if k2 != k and mnt[k2] == 1 and loc[k2] == m:
                    maintained = True
            if not maintained:
                actions[k] = m_count  # start maintenance here
        else:
            actions[k] = m


@njit(cache=True)
def _legal_count(x, loc, mnt, rem, k, m_count):
    if rem[k] > 0:
        return 1
    k_count = loc.shape[0]
    for k2 in range(k_count):
        if k2 != k and mnt[k2] == 1 and loc[k2] == loc[k]:
            return m_count  # maintenance blocked here
    return m_count + 1


@njit(cache=True)
def _random_engineer(x, loc, mnt, rem, k, m_count, rng_state):
    n = _legal_count(x, loc, mnt, rem, k, m_count)
    if n == 1:
        return loc[k]
    pick = _randint(rng_state, n)
    return pick  # ordinals 0..M-1 travel, M maintain (present iff n == M+1)


@njit(cache=True)
def _random_decide(x, loc, mnt, rem, m_count, rng_state, actions):
    k_count = loc.shape[0]
    while True:
        for k in range(k_count):
            actions[k] = _random_engineer(x, loc, mnt, rem, k, m_count, rng_state)
        clash = False
        for k in range(k_count):
            if actions[k] != m_count:
                continue
            for k2 in range(k + 1, k_count):
                if actions[k2] == m_count and loc[k2] == loc[k]:
                    clash = True
        if not clash:
            return


@njit(cache=True)
def _table_key(n_levels, delta_bound, x, loc, mnt, rem):
    m_count = n_levels.shape[0]
    k_count = loc.shape[0]
    key = np.int64(0)
    for m in range(m_count):
        key = key * n_levels[m] + (x[m] - 1)
    for k in range(k_count):
        key = key * m_count + loc[k]
        key = key * 2 + mnt[k]
        key = key * (delta_bound + 1) + rem[k]
    return key


@njit(cache=True)
def _network_engineer(
    ints, weights, travel, n_levels, x, loc, mnt, rem, k, features, buf_a, buf_b
):
    m_count = travel.shape[0]
    if rem[k] > 0:
        return loc[k]
    design = ints[0]
    _featurize(design, travel, n_levels, x, loc, mnt, rem, k, features)
    logits = _forward(ints, weights, features, buf_a, buf_b)
    maintain_ok = True
    k_count = loc.shape[0]
    for k2 in range(k_count):
        if k2 != k and mnt[k2] == 1 and loc[k2] == loc[k]:
            maintain_ok = False
    best = 0
    best_val = logits[0]
    top = m_count + 1 if maintain_ok else m_count
    for a in range(1, top):
        if logits[a] > best_val:
            best_val = logits[a]
            best = a
    return best


@njit(cache=True)
def _decide_joint(
    kind, ints, weights, table,
    travel, n_levels, t_pm, t_cm,
    x, loc, mnt, rem, rng_state, actions,
    scratch_i, scratch_f, sx, sloc, smnt, srem, features, buf_a, buf_b,
):
    """Joint action of the compiled policy; fills per-engineer ordinals.

    Returns False only when a table policy meets an unindexed state.
    """
    m_count = travel.shape[0]
    k_count = loc.shape[0]
    if kind == POLICY_IDLE:
        for k in range(k_count):
            actions[k] = loc[k]
    elif kind == POLICY_RANDOM:
        _random_decide(x, loc, mnt, rem, m_count, rng_state, actions)
    elif kind == POLICY_DISPATCH:
        _dispatch_decide(
            travel, n_levels, t_pm, t_cm, ints,
            x, loc, mnt, rem, rng_state, actions, scratch_i, scratch_f,
        )
    elif kind == POLICY_TABLE:
        key = _table_key(n_levels, ints[0], x, loc, mnt, rem)
        if key not in table:
            return False
        code = table[key]
        for k in range(k_count - 1, -1, -1):
            actions[k] = code % (m_count + 1)
            code //= m_count + 1
    else:  # network: sequential selection with in-place consequences
        for i in range(m_count):
            sx[i] = x[i]
        for k in range(k_count):
            sloc[k] = loc[k]
            smnt[k] = mnt[k]
            srem[k] = rem[k]
        for k in range(k_count):
            a = _network_engineer(
                ints, weights, travel, n_levels, sx, sloc, smnt, srem, k, features, buf_a, buf_b
            )
            actions[k] = a
            _apply_action(travel, n_levels, t_pm, t_cm, sx, sloc, smnt, srem, k, a)
    return True


@njit(cache=True)
def _decide_engineer(
    kind, ints, weights, table,
    travel, n_levels, t_pm, t_cm,
    x, loc, mnt, rem, k, rng_state,
    scratch_i, scratch_f, actions, features, buf_a, buf_b,
):
    """One engineer's action on the current (possibly intermediate) state."""
    m_count = travel.shape[0]
    if rem[k] > 0:
        return loc[k]
    if kind == POLICY_IDLE:
        return loc[k]
    if kind == POLICY_RANDOM:
        return _random_engineer(x, loc, mnt, rem, k, m_count, rng_state)
    if kind == POLICY_DISPATCH:
        _dispatch_decide(
            travel, n_levels, t_pm, t_cm, ints,
            x, loc, mnt, rem, rng_state, actions, scratch_i, scratch_f,
        )
        return actions[k]
    if kind == POLICY_NETWORK:
        return _network_engineer(
            ints, weights, travel, n_levels, x, loc, mnt, rem, k, features, buf_a, buf_b
        )
    return -1  # table policies cannot act on intermediate states


# ---------------------------------------------------------------------------
# scratch sizing shared by the top-level kernels


@njit(cache=True)
def _scratch_i_size(m_count, k_count):
    return k_count + 2 * m_count + 3 * (k_count + 2) + k_count + 8


@njit(cache=True)
def _scratch_f_size(m_count, k_count):
    return m_count + (k_count + 1) * (k_count + 1) + 3 * (k_count + 2) + 8


@njit(cache=True)
def _feature_dim(design, m_count, k_count):
    if design == 1:
        return 7 * m_count + 1
    if design == 2:
        return 7 * m_count
    return m_count + 3 * k_count + 1


@njit(cache=True)
def _buffer_width(ints, m_count, k_count):
    # widest layer of a network policy, else a small default
    width = m_count + 3 * k_count + 2
    if ints.shape[0] >= 2:
        n_layers = ints[1]
        for i in range(n_layers + 1):
            if ints.shape[0] > 2 + i and ints[2 + i] > width:
                width = ints[2 + i]
    return width


# ---------------------------------------------------------------------------
# evaluation kernels


@njit(cache=True, parallel=True)
def _evaluate_kernel(
    kind, ints, weights, table,
    travel, n_levels, advance_p, t_pm, t_cm, c_pm, c_cm, c_dt, c_t, gamma, init_loc,
    reps, t_max, master_seed, geometric, out,
):
    """Per-repetition discounted (or geometric-horizon) cost components.

    out[r] = (total, pm, cm, downtime, travel, ok); totals use
    end-of-period discounting gamma^(t+1) in truncated mode and plain sums
    of the first T stage costs in geometric mode.
    """
    m_count = travel.shape[0]
    k_count = init_loc.shape[0]
    si_size = _scratch_i_size(m_count, k_count)
    sf_size = _scratch_f_size(m_count, k_count)
    fdim = _feature_dim(ints[0] if kind == POLICY_NETWORK else 3, m_count, k_count)
    bwidth = _buffer_width(ints, m_count, k_count)
    for r in prange(reps):
        rng = np.empty(1, dtype=np.uint64)
        rng[0] = _derive(np.uint64(master_seed), np.uint64(r))
        x = np.empty(m_count, dtype=np.int64)
        loc = np.empty(k_count, dtype=np.int64)
        mnt = np.zeros(k_count, dtype=np.int64)
        rem = np.zeros(k_count, dtype=np.int64)
        for m in range(m_count):
            x[m] = 1
        for k in range(k_count):
            loc[k] = init_loc[k]
        actions = np.empty(k_count, dtype=np.int64)
        scratch_i = np.empty(si_size, dtype=np.int64)
        scratch_f = np.empty(sf_size, dtype=np.float64)
        completing = np.empty(m_count, dtype=np.int64)
        comps = np.empty(4, dtype=np.float64)
        sx = np.empty(m_count, dtype=np.int64)
        sloc = np.empty(k_count, dtype=np.int64)
        smnt = np.empty(k_count, dtype=np.int64)
        srem = np.empty(k_count, dtype=np.int64)
        features = np.empty(fdim, dtype=np.float32)
        buf_a = np.empty(bwidth, dtype=np.float32)
        buf_b = np.empty(bwidth, dtype=np.float32)

        horizon = t_max
        if geometric == 1:
            horizon = _geometric_horizon(rng, gamma)
        weight = gamma
        total = 0.0
        pm = 0.0
        cm = 0.0
        dt = 0.0
        tr = 0.0
        ok = 1.0
        for t in range(horizon):
            good = _decide_joint(
                kind, ints, weights, table,
                travel, n_levels, t_pm, t_cm,
                x, loc, mnt, rem, rng, actions,
                scratch_i, scratch_f, sx, sloc, smnt, srem, features, buf_a, buf_b,
            )
            if not good:
                ok = 0.0
                break
            c = _stage_cost(travel, n_levels, c_pm, c_cm, c_dt, c_t, x, loc, mnt, rem, actions, comps)
            if geometric == 1:
                total += c
                pm += comps[0]
                cm += comps[1]
                dt += comps[2]
                tr += comps[3]
            else:
                total += weight * c
                pm += weight * comps[0]
                cm += weight * comps[1]
                dt += weight * comps[2]
                tr += weight * comps[3]
                weight *= gamma
            for k in range(k_count):
                _apply_action(travel, n_levels, t_pm, t_cm, x, loc, mnt, rem, k, actions[k])
            _advance(n_levels, advance_p, x, loc, mnt, rem, rng, completing)
        out[r, 0] = total
        out[r, 1] = pm
        out[r, 2] = cm
        out[r, 3] = dt
        out[r, 4] = tr
        out[r, 5] = ok


def evaluate_kernel(
    ci: CompiledInstance,
    spec: CompiledPolicy,
    reps: int,
    t_max: int,
    master_seed: int,
    geometric: bool,
) -> np.ndarray:
    out = np.empty((reps, 6), dtype=np.float64)
    _evaluate_kernel(
        spec.kind, spec.ints, spec.weights, spec.table,
        ci.travel, ci.n_levels, ci.advance_p, ci.t_pm, ci.t_cm,
        ci.c_pm, ci.c_cm, ci.c_dt, ci.c_t, ci.gamma, ci.init_loc,
        reps, t_max, np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF), 1 if geometric else 0, out,
    )
    if np.any(out[:, 5] == 0.0):
        raise CompatibilityError("policy table met a state outside its enumerated set")
    return out[:, :5]


# ---------------------------------------------------------------------------
# rollout kernel: undiscounted trajectory costs over geometric horizons


@njit(cache=True, parallel=True)
def _rollout_kernel(
    kind, ints, weights, table,
    travel, n_levels, advance_p, t_pm, t_cm, c_pm, c_cm, c_dt, c_t, gamma, init_loc,
    x0, loc0, mnt0, rem0, prefix, engineer, candidates, seeds, out,
):
    """out[c, j] = cost of rollout j under candidate c.

    Rollout j uses streams derived from seeds[j] only, so every candidate
    sees common random numbers: an identical horizon draw, an identical
    degradation noise stream and an identical policy-randomness stream.
    """
    m_count = travel.shape[0]
    k_count = loc0.shape[0]
    n_cand = candidates.shape[0]
    n_roll = seeds.shape[0]
    si_size = _scratch_i_size(m_count, k_count)
    sf_size = _scratch_f_size(m_count, k_count)
    fdim = _feature_dim(ints[0] if kind == POLICY_NETWORK else 3, m_count, k_count)
    bwidth = _buffer_width(ints, m_count, k_count)
    jobs = n_cand * n_roll
    n_workers = min(64, jobs)
    chunk = (jobs + n_workers - 1) // n_workers
    for w in prange(n_workers):
        horizon_rng = np.empty(1, dtype=np.uint64)
        noise_rng = np.empty(1, dtype=np.uint64)
        policy_rng = np.empty(1, dtype=np.uint64)
        x = np.empty(m_count, dtype=np.int64)
        loc = np.empty(k_count, dtype=np.int64)
        mnt = np.empty(k_count, dtype=np.int64)
        rem = np.empty(k_count, dtype=np.int64)
        actions = np.empty(k_count, dtype=np.int64)
        scratch_i = np.empty(si_size, dtype=np.int64)
        scratch_f = np.empty(sf_size, dtype=np.float64)
        completing = np.empty(m_count, dtype=np.int64)
        comps = np.empty(4, dtype=np.float64)
        sx = np.empty(m_count, dtype=np.int64)
        sloc = np.empty(k_count, dtype=np.int64)
        smnt = np.empty(k_count, dtype=np.int64)
        srem = np.empty(k_count, dtype=np.int64)
        features = np.empty(fdim, dtype=np.float32)
        buf_a = np.empty(bwidth, dtype=np.float32)
        buf_b = np.empty(bwidth, dtype=np.float32)
        wx = np.empty(m_count, dtype=np.int64)
        wloc = np.empty(k_count, dtype=np.int64)
        wmnt = np.empty(k_count, dtype=np.int64)
        wrem = np.empty(k_count, dtype=np.int64)
        for flat in range(w * chunk, min((w + 1) * chunk, jobs)):
            c = flat // n_roll
            j = flat % n_roll
            horizon_rng[0] = _derive(seeds[j], np.uint64(0))
            noise_rng[0] = _derive(seeds[j], np.uint64(1))
            policy_rng[0] = _derive(seeds[j], np.uint64(2))
            horizon = _geometric_horizon(horizon_rng, gamma)

            for m in range(m_count):
                x[m] = x0[m]
            for k in range(k_count):
                loc[k] = loc0[k]
                mnt[k] = mnt0[k]
                rem[k] = rem0[k]

            # assemble the epoch-0 joint action: prefix, candidate, then
            # the base policy for the remaining engineers on the updated
            # state
            for m in range(m_count):
                wx[m] = x[m]
            for k in range(k_count):
                wloc[k] = loc[k]
                wmnt[k] = mnt[k]
                wrem[k] = rem[k]
            ok = True
            for i in range(engineer):
                actions[i] = prefix[i]
                _apply_action(travel, n_levels, t_pm, t_cm, wx, wloc, wmnt, wrem, i, prefix[i])
            actions[engineer] = candidates[c]
            _apply_action(travel, n_levels, t_pm, t_cm, wx, wloc, wmnt, wrem, engineer, candidates[c])
            for i in range(engineer + 1, k_count):
                a = _decide_engineer(
                    kind, ints, weights, table,
                    travel, n_levels, t_pm, t_cm,
                    wx, wloc, wmnt, wrem, i, policy_rng,
                    scratch_i, scratch_f, actions, features, buf_a, buf_b,
                )
                if a < 0:
                    ok = False
                    break
                actions[i] = a
                _apply_action(travel, n_levels, t_pm, t_cm, wx, wloc, wmnt, wrem, i, a)
            if not ok:
                out[c, j] = np.nan
                continue
            total = _stage_cost(travel, n_levels, c_pm, c_cm, c_dt, c_t, x, loc, mnt, rem, actions, comps)
            _advance(n_levels, advance_p, wx, wloc, wmnt, wrem, noise_rng, completing)
            for m in range(m_count):
                x[m] = wx[m]
            for k in range(k_count):
                loc[k] = wloc[k]
                mnt[k] = wmnt[k]
                rem[k] = wrem[k]
            good = True
            for t in range(1, horizon + 1):
                good = _decide_joint(
                    kind, ints, weights, table,
                    travel, n_levels, t_pm, t_cm,
                    x, loc, mnt, rem, policy_rng, actions,
                    scratch_i, scratch_f, sx, sloc, smnt, srem, features, buf_a, buf_b,
                )
                if not good:
                    break
                total += _stage_cost(travel, n_levels, c_pm, c_cm, c_dt, c_t, x, loc, mnt, rem, actions, comps)
                for k in range(k_count):
                    _apply_action(travel, n_levels, t_pm, t_cm, x, loc, mnt, rem, k, actions[k])
                _advance(n_levels, advance_p, x, loc, mnt, rem, noise_rng, completing)
            out[c, j] = total if good else np.nan


def rollout_kernel(
    ci: CompiledInstance,
    spec: CompiledPolicy,
    state: NetworkState,
    prefix: np.ndarray,
    engineer: int,
    candidates: np.ndarray,
    seeds: np.ndarray,
) -> np.ndarray:
    x0, loc0, mnt0, rem0 = state_to_arrays(state)
    out = np.empty((candidates.shape[0], seeds.shape[0]), dtype=np.float64)
    _rollout_kernel(
        spec.kind, spec.ints, spec.weights, spec.table,
        ci.travel, ci.n_levels, ci.advance_p, ci.t_pm, ci.t_cm,
        ci.c_pm, ci.c_cm, ci.c_dt, ci.c_t, ci.gamma, ci.init_loc,
        x0, loc0, mnt0, rem0,
        np.asarray(prefix, dtype=np.int64), engineer,
        np.asarray(candidates, dtype=np.int64), np.asarray(seeds, dtype=np.uint64), out,
    )
    if np.any(np.isnan(out)):
        raise CompatibilityError("base policy could not act during a rollout")
    return out


def decide_once(
    ci: CompiledInstance, spec: CompiledPolicy, state: NetworkState, seed: int
) -> np.ndarray:
    """One joint decision of a compiled policy (testing hook)."""
    x, loc, mnt, rem = state_to_arrays(state)
    m_count = ci.machine_count
    k_count = ci.engineer_count
    rng = np.array([_derive(np.uint64(seed), np.uint64(0))], dtype=np.uint64)
    actions = np.empty(k_count, dtype=np.int64)
    scratch_i = np.empty(int(_scratch_i_size(m_count, k_count)), dtype=np.int64)
    scratch_f = np.empty(int(_scratch_f_size(m_count, k_count)), dtype=np.float64)
    fdim = int(_feature_dim(spec.ints[0] if spec.kind == POLICY_NETWORK else 3, m_count, k_count))
    bwidth = int(_buffer_width(spec.ints, m_count, k_count))
    ok = _decide_joint(
        spec.kind, spec.ints, spec.weights, spec.table,
        ci.travel, ci.n_levels, ci.t_pm, ci.t_cm,
        x, loc, mnt, rem, rng, actions,
        scratch_i, scratch_f,
        np.empty(m_count, dtype=np.int64), np.empty(k_count, dtype=np.int64),
        np.empty(k_count, dtype=np.int64), np.empty(k_count, dtype=np.int64),
        np.empty(fdim, dtype=np.float32),
        np.empty(bwidth, dtype=np.float32), np.empty(bwidth, dtype=np.float32),
    )
    if not ok:
        raise CompatibilityError("policy table met a state outside its enumerated set")
    return actions


def featurize_kernel(
    ci: CompiledInstance, design_id: int, state: NetworkState, acting: int
) -> np.ndarray:
    x, loc, mnt, rem = state_to_arrays(state)
    dim = _feature_dim(design_id, ci.machine_count, ci.engineer_count)
    out = np.empty(dim, dtype=np.float32)
    _featurize(design_id, ci.travel, ci.n_levels, x, loc, mnt, rem, acting, out)
    return out


def forward_kernel(spec: CompiledPolicy, features: np.ndarray) -> np.ndarray:
    width = int(_buffer_width(spec.ints, 1, 1))
    buf_a = np.empty(width, dtype=np.float32)
    buf_b = np.empty(width, dtype=np.float32)
    logits = _forward(spec.ints, spec.weights, np.asarray(features, dtype=np.float32), buf_a, buf_b)
    out_dim = int(spec.ints[2 + int(spec.ints[1])])
    return logits[:out_dim].copy()
