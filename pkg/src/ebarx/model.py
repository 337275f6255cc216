"""ARX model representation, stability, regressors and simulation."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _fmt
from .errors import InsufficientData, UnstableModel

NOMINAL_AR2 = (1.5, -0.7)
NOMINAL_DECAY = (0.98, 0.97)


@dataclass(frozen=True)
class ArxSpec:
    """ARX model ``y(t) = sum a_k y(t-k) + sum b_k u(t-k) + w(t)``.

    ``theta`` is ordered ``[a_1 .. a_n, b_1 .. b_m]``.
    """

    n: int
    m: int
    theta: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.n < 0 or self.m < 0:
            raise ValueError("model orders must be non-negative")
        if theta.size != self.n + self.m:
            raise ValueError(
                f"theta has {theta.size} entries, expected n + m = {self.n + self.m}")
        # sigma2 == 0 is allowed only as a degenerate noiseless simulation
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be non-negative")

    @property
    def p(self):
        return self.n + self.m

    @property
    def a(self):
        return self.theta[:self.n]

    @property
    def b(self):
        return self.theta[self.n:]


@dataclass(frozen=True)
class ParamWalkSpec:
    """Mean-reverting random walk for slowly varying AR coefficients.

    ``a(t+1) = mean + decay * (a(t) - mean) + lam * v(t)``, ``v`` standard
    white noise, component-wise.
    """

    mean: tuple = NOMINAL_AR2
    decay: tuple = NOMINAL_DECAY
    lam: float = 0.0

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        decay = tuple(float(v) for v in self.decay)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "decay", decay)
        if len(mean) != len(decay):
            raise ValueError("mean and decay must have the same length")
        if any(not -1.0 < d < 1.0 for d in decay):
            raise ValueError("decay entries must lie in (-1, 1)")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    def stationary_std(self):
        return self.lam / np.sqrt(1.0 - np.asarray(self.decay) ** 2)


@dataclass(frozen=True)
class Dataset:
    """Observed samples ``t = 1..N`` plus the presample values before ``t = 1``.

    Presample arrays are in chronological order; their last entry is time 0.
    ``u`` and ``u_pre`` are empty for pure AR data.
    """

    y: np.ndarray
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_pre: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_pre: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("y", "u", "y_pre", "u_pre"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.u.size and self.u.size != self.y.size:
            raise ValueError("u and y must have equal length")
        if self.u.size and self.u_pre.size != self.y_pre.size:
            raise ValueError("u_pre and y_pre must have equal length")

    @property
    def N(self):
        return self.y.size

    @property
    def has_input(self):
        return self.u.size > 0

    def head(self, N):
        """The first ``N`` samples, same presample."""
        if N > self.N:
            raise InsufficientData(f"requested {N} samples, dataset has {self.N}")
        u = self.u[:N] if self.has_input else self.u
        return Dataset(self.y[:N], u, self.y_pre, self.u_pre)


@dataclass(frozen=True)
class RegressorSet:
    """Stacked regressors ``phi`` (rows) and targets ``y`` in processing order.

    ``times`` holds the time index of each row: increasing for forward sets,
    decreasing for backward sets.
    """

    phi: np.ndarray
    y: np.ndarray
    orientation: str
    times: np.ndarray

    @property
    def rows(self):
        return self.phi.shape[0]

    @property
    def p(self):
        return self.phi.shape[1]

    def gram(self):
        return self.phi.T @ self.phi

    def head(self, k):
        """The first ``k`` rows in processing order."""
        return RegressorSet(self.phi[:k], self.y[:k], self.orientation, self.times[:k])


def check_stability(spec):
    """Return ``(stable, moduli)`` for ``z^n - a_1 z^{n-1} - ... - a_n``.

    Moduli are sorted in descending order. Closed form for ``n <= 2``,
    companion-matrix eigenvalues above that.
    """
    a = np.asarray(spec.a if isinstance(spec, ArxSpec) else spec, dtype=float)
    n = a.size
    if n == 0:
        return True, np.zeros(0)
    if n == 1:
        moduli = np.array([abs(a[0])])
    elif n == 2:
        disc = a[0] ** 2 + 4.0 * a[1]
        if disc >= 0:
            r = np.sqrt(disc)
            moduli = np.abs([(a[0] + r) / 2.0, (a[0] - r) / 2.0])
        else:
            # complex pair: |z|^2 is the constant term of z^2 - a1 z - a2
            moduli = np.full(2, np.sqrt(-a[1]))
    else:
        comp = np.zeros((n, n))
        comp[0] = a
        comp[1:, :-1] = np.eye(n - 1)
        moduli = np.abs(np.linalg.eigvals(comp))
    moduli = np.sort(moduli)[::-1]
    return bool(np.all(moduli < 1.0)), moduli


def noise_streams(seed):
    """Independent generators ``(measurement, walk)`` derived from one seed.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`. Stream 0
    drives the measurement noise and stream 1 the parameter walk, so adding a
    walk never perturbs the measurement noise sequence.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    w_ss, walk_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(w_ss)), np.random.Generator(np.random.PCG64(walk_ss))


def _recurse(a_path, b, y_pre, u_full, w):
    """Run the ARX difference equation in chronological order.

    ``a_path`` has one AR coefficient vector per generated sample. Returns the
    generated samples only (presample excluded).
    """
    n = a_path.shape[1]
    m = len(b)
    k0 = len(y_pre)
    hist = list(y_pre)
    u = list(u_full)
    out = []
    for i in range(len(w)):
        t = k0 + i
        acc = 0.0
        a = a_path[i]
        for k in range(1, n + 1):
            acc += a[k - 1] * hist[t - k]
        for k in range(1, m + 1):
            acc += b[k - 1] * u[t - k]
        acc += w[i]
        hist.append(acc)
        out.append(acc)
    return np.array(out)


def _simulate(a_path, b, N, burn_in, sigma2, u, presample, noise, rng):
    n = a_path.shape[1]
    m = len(b)
    k = max(n, m)
    total = N + burn_in
    y_pre = np.zeros(k) if presample is None else np.asarray(presample, dtype=float)
    if y_pre.size < k:
        raise InsufficientData(f"presample needs at least {k} values")
    if noise is None:
        w = np.sqrt(sigma2) * rng.standard_normal(total)
    else:
        w = np.asarray(noise, dtype=float)
        if w.size != total:
            raise ValueError(f"noise must have N + burn_in = {total} entries")
    if m:
        u = np.asarray(u, dtype=float)
        if u.size == N:
            u = np.concatenate([np.zeros(burn_in), u])
        if u.size != total:
            raise ValueError("u must have N or N + burn_in entries")
    else:
        u = np.zeros(total)
    u_full = np.concatenate([np.zeros(y_pre.size), u])
    y = _recurse(a_path, b, y_pre, u_full, w)
    series = np.concatenate([y_pre, y])
    useries = u_full
    start = y_pre.size + burn_in
    pre = slice(start - k, start)
    return Dataset(
        y=series[start:],
        u=useries[start:] if m else np.zeros(0),
        y_pre=series[pre],
        u_pre=useries[pre] if m else np.zeros(0),
    )


def simulate_fixed(spec, N, seed=None, burn_in=500, u=None, presample=None, noise=None):
    """Simulate ``N`` samples of a fixed-parameter ARX model.

    The first ``burn_in`` generated samples are discarded; the ``max(n, m)``
    samples just before the retained window become the presample. ``noise``
    overrides the Gaussian draws (length ``N + burn_in``), which is how
    deterministic and common-noise comparisons are set up. ``u`` may have
    length ``N`` (zero input during burn-in) or ``N + burn_in``.
    """
    stable, _ = check_stability(spec)
    if not stable and burn_in > 0:
        raise UnstableModel(f"AR part of theta={spec.theta.tolist()} is not stable")
    if spec.m and u is None:
        raise ValueError("an input sequence is required when m > 0")
    rng, _ = noise_streams(seed)
    a_path = np.broadcast_to(spec.a, (N + burn_in, spec.n))
    return _simulate(a_path, spec.b, N, burn_in, spec.sigma2, u, presample, noise, rng)


def simulate_varying(walk, N, sigma2=1.0, seed=None, burn_in=500, presample=None, noise=None):
    """Simulate an AR model whose coefficients follow ``walk``.

    Burn-in runs with the coefficients frozen at ``walk.mean``; the walk
    starts at its mean at ``t = 1``. Returns ``(dataset, trajectory)`` with
    ``trajectory[t-1]`` the coefficients used to generate ``y(t)``.
    """
    mean = np.asarray(walk.mean)
    decay = np.asarray(walk.decay)
    stable, _ = check_stability(mean)
    if not stable and burn_in > 0:
        raise UnstableModel(f"walk mean {mean.tolist()} is not stable")
    rng, walk_rng = noise_streams(seed)
    n = mean.size
    traj = np.empty((N, n))
    a = mean.copy()
    for i in range(N):
        traj[i] = a
        a = mean + decay * (a - mean) + walk.lam * walk_rng.standard_normal(n)
    a_path = np.concatenate([np.broadcast_to(mean, (burn_in, n)), traj])
    d = _simulate(a_path, np.zeros(0), N, burn_in, sigma2, None, presample, noise, rng)
    return d, traj


def build_regressors(d, n, m=0, orientation="forward"):
    """Stack the pseudo-linear regression rows for ``d``.

    forward: rows ``t = 1..N``, ``phi(t) = [y(t-1)..y(t-n), u(t-1)..u(t-m)]``.
    backward: rows ``t = N-k .. 1`` (decreasing, ``k = max(n, m)``) with
    ``phi(t) = [y(t+1)..y(t+n), u(t+1)..u(t+m)]``; rows whose future window
    leaves the data are dropped.
    """
    if m and not d.has_input:
        raise InsufficientData("m > 0 but the dataset has no input")
    k = max(n, m)
    N = d.N
    if orientation == "forward":
        if d.y_pre.size < k:
            raise InsufficientData(
                f"forward rows need {k} presample values, dataset has {d.y_pre.size}")
        ys = np.concatenate([d.y_pre, d.y])
        us = np.concatenate([d.u_pre, d.u]) if m else None
        off = d.y_pre.size
        t = np.arange(1, N + 1)
        cols = [ys[off + t - 1 - j] for j in range(1, n + 1)]
        cols += [us[off + t - 1 - j] for j in range(1, m + 1)]
        phi = np.column_stack(cols) if cols else np.zeros((N, 0))
        return RegressorSet(phi, d.y.copy(), "forward", t)
    if orientation == "backward":
        if N - k < 1:
            raise InsufficientData(f"backward rows need more than {k} samples")
        t = np.arange(N - k, 0, -1)
        cols = [d.y[t - 1 + j] for j in range(1, n + 1)]
        cols += [d.u[t - 1 + j] for j in range(1, m + 1)]
        phi = np.column_stack(cols) if cols else np.zeros((t.size, 0))
        return RegressorSet(phi, d.y[t - 1].copy(), "backward", t)
    raise ValueError(f"orientation must be 'forward' or 'backward', got {orientation!r}")


def write_dataset_csv(d, path):
    """Write ``t,y[,u]`` rows; presample rows carry ``t <= 0``."""
    k = d.y_pre.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y", "u"] if d.has_input else ["t", "y"])
        ys = np.concatenate([d.y_pre, d.y])
        us = np.concatenate([d.u_pre, d.u]) if d.has_input else None
        for i, yv in enumerate(ys):
            row = [str(i - k + 1), _fmt.num(yv)]
            if us is not None:
                row.append(_fmt.num(us[i]))
            w.writerow(row)


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "y"] or header[2:] not in ([], ["u"]):
            raise ValueError(f"{path}: expected header t,y[,u], got {','.join(header)}")
        rows = [r for r in reader if r]
    t = np.array([int(r[0]) for r in rows])
    y = np.array([float(r[1]) for r in rows])
    u = np.array([float(r[2]) for r in rows]) if len(header) == 3 else None
    if np.any(np.diff(t) != 1):
        raise ValueError(f"{path}: time index must increase by 1")
    pre = t <= 0
    if u is None:
        return Dataset(y[~pre], y_pre=y[pre])
    return Dataset(y[~pre], u[~pre], y[pre], u[pre])


def write_trajectory_csv(traj, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"a{i + 1}" for i in range(traj.shape[1])])
        for i, row in enumerate(traj):
            w.writerow([str(i + 1)] + [_fmt.num(v) for v in row])
