"""Activity series, churn labels, file I/O and the synthetic archetype generator."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParseError, RangeError, ValidationError
from .graph import SocialGraph

ACTIVITY_NAMES = (
    "chat_received",
    "chat_sent",
    "snap_received",
    "snap_sent",
    "story_viewed",
    "discover_viewed",
    "lens_posted",
    "lens_sent",
    "lens_saved",
    "lens_swiped",
)
NETWORK_NAMES = ("net_size", "net_density")
DIMENSION_NAMES = ACTIVITY_NAMES + NETWORK_NAMES
N_ACTIVITIES = len(ACTIVITY_NAMES)
N_DAYS = 14
SECOND_WEEK = (8, 14)

SHAPES = ("flat", "decaying", "growing", "bursty", "zero")


@dataclass(frozen=True, eq=False)
class ActivitySeries:
    """One user's ``D x T`` matrix of daily counts; column 0 is registration day."""

    user_id: str
    values: np.ndarray
    dimension_names: tuple = DIMENSION_NAMES

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"user {self.user_id}: values must be a D x T matrix")
        if values.shape[0] != len(self.dimension_names):
            raise ValidationError(
                f"user {self.user_id}: {values.shape[0]} rows for "
                f"{len(self.dimension_names)} dimension names")
        if values.shape[1] < 1:
            raise ValidationError(f"user {self.user_id}: series needs at least one day")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"user {self.user_id}: non-finite count")
        if np.any(values < 0):
            raise ValidationError(f"user {self.user_id}: negative count")
        if "net_density" in self.dimension_names:
            dens = values[self.dimension_names.index("net_density")]
            if np.any(dens > 1):
                raise ValidationError(f"user {self.user_id}: density above 1")
        values.flags.writeable = False
        object.__setattr__(self, "user_id", str(self.user_id))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dimension_names", tuple(self.dimension_names))

    @property
    def n_dims(self):
        return self.values.shape[0]

    @property
    def n_days(self):
        return self.values.shape[1]

    def behavioral(self):
        """Rows of the in-app activity dimensions (network state excluded)."""
        idx = [i for i, n in enumerate(self.dimension_names) if n not in NETWORK_NAMES]
        return self.values[idx]


@dataclass(frozen=True)
class ChurnLabel:
    user_id: str
    churned: bool
    window_start_day: int
    window_end_day: int


def stack_series(series):
    """Return ``(user_ids, X)`` with ``X`` of shape ``(n, D, T)``."""
    series = list(series)
    if not series:
        raise ValidationError("no series to stack")
    shapes = {s.values.shape for s in series}
    if len(shapes) != 1:
        raise ValidationError(f"series have mismatched shapes: {sorted(shapes)}")
    return [s.user_id for s in series], np.stack([s.values for s in series])


def compute_churn_label(s, second_week=SECOND_WEEK):
    """Churned iff every behavioral dimension is zero over the (1-based, inclusive) window."""
    start, end = second_week
    if not 1 <= start <= end <= s.n_days:
        raise RangeError(
            f"window days {start}-{end} outside a {s.n_days}-day series")
    churned = not np.any(s.behavioral()[:, start - 1:end])
    return ChurnLabel(s.user_id, bool(churned), start, end)


def churn_labels(series, second_week=SECOND_WEEK):
    return np.array([compute_churn_label(s, second_week).churned for s in series], dtype=int)


# --------------------------------------------------------------------- I/O

def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def save_activities(series, path, format=None):
    format = format or _infer_format(path)
    series = list(series)
    if format == "csv":
        names = series[0].dimension_names if series else DIMENSION_NAMES
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("user_id", "day") + tuple(names))
            for s in series:
                for t in range(s.n_days):
                    w.writerow([s.user_id, t + 1] + [_fmt(v) for v in s.values[:, t]])
    elif format == "json":
        payload = [
            {"user_id": s.user_id,
             "dimension_names": list(s.dimension_names),
             "values": s.values.tolist()}
            for s in series
        ]
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    else:
        raise ValidationError(f"unknown activity format {format!r}")


def _infer_format(path):
    suffix = str(path).rsplit(".", 1)[-1].lower()
    if suffix not in ("csv", "json"):
        raise ValidationError(f"cannot infer activity format from {path!r}; pass format=")
    return suffix


def load_activities(path, format=None, n_days=N_DAYS, dimension_names=DIMENSION_NAMES):
    """Read activity series from CSV (long format) or JSON (one object per user).

    Missing (user, day) cells are zero. Users keep their order of first
    appearance.
    """
    format = format or _infer_format(path)
    if format == "csv":
        return _load_csv(path, n_days, tuple(dimension_names))
    if format == "json":
        return _load_json(path, n_days, tuple(dimension_names))
    raise ValidationError(f"unknown activity format {format!r}")


def _load_csv(path, n_days, names):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        expected = ("user_id", "day") + names
        unknown = [h for h in header if h not in expected]
        if unknown:
            raise ValidationError(f"unknown column {unknown[0]!r} in {path}")
        missing = [h for h in expected if h not in header]
        if missing:
            raise ValidationError(f"missing column {missing[0]!r} in {path}")
        if len(set(header)) != len(header):
            raise ValidationError(f"duplicate column in header of {path}")
        col = {h: i for i, h in enumerate(header)}
        data = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            uid = row[col["user_id"]].strip()
            try:
                day = int(row[col["day"]])
            except ValueError:
                raise ParseError(f"bad day {row[col['day']]!r}", line=lineno) from None
            if not 1 <= day <= n_days:
                raise ValidationError(f"line {lineno}: day {day} outside 1..{n_days}")
            try:
                vals = [float(row[col[n]]) for n in names]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            for n, v in zip(names, vals):
                if not math.isfinite(v):
                    raise ValidationError(f"line {lineno}: non-finite {n}")
                if v < 0:
                    raise ValidationError(f"line {lineno}: negative count {v:g} for {n}")
            mat = data.setdefault(uid, {})
            if day in mat:
                raise ValidationError(f"line {lineno}: duplicate row for user {uid} day {day}")
            mat[day] = vals
    out = []
    for uid, days in data.items():
        values = np.zeros((len(names), n_days))
        for day, vals in days.items():
            values[:, day - 1] = vals
        out.append(ActivitySeries(uid, values, names))
    return out


def _load_json(path, n_days, names):
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(payload, list):
        raise ParseError("top level must be an array of user objects", line=1)
    out, seen = [], set()
    for i, obj in enumerate(payload):
        if not isinstance(obj, dict) or "user_id" not in obj or "values" not in obj:
            raise ParseError(f"entry {i} lacks user_id/values")
        unknown = set(obj) - {"user_id", "values", "dimension_names"}
        if unknown:
            raise ValidationError(f"unknown field {sorted(unknown)[0]!r} in entry {i}")
        uid = str(obj["user_id"])
        if uid in seen:
            raise ValidationError(f"duplicate user {uid}")
        seen.add(uid)
        dims = tuple(obj.get("dimension_names", names))
        if dims != names:
            bad = [d for d in dims if d not in names]
            raise ValidationError(
                f"unknown column {bad[0]!r}" if bad else f"user {uid}: dimension order differs")
        try:
            values = np.array(obj["values"], dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError(f"entry {i}: values is not a numeric matrix") from None
        if values.ndim != 2 or values.shape[0] != len(names):
            raise ValidationError(f"user {uid}: values must be {len(names)} x T")
        if values.shape[1] > n_days:
            raise ValidationError(f"user {uid}: {values.shape[1]} days exceeds {n_days}")
        if values.shape[1] < n_days:
            values = np.pad(values, ((0, 0), (0, n_days - values.shape[1])))
        out.append(ActivitySeries(uid, values, names))
    return out


def save_labels(user_ids, archetypes, churned, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("user_id", "archetype", "churned"))
        for row in zip(user_ids, archetypes, churned):
            w.writerow((row[0], row[1], int(row[2])))


def load_labels(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != {"user_id", "archetype", "churned"}:
        raise ValidationError(f"{path}: expected columns user_id,archetype,churned")
    return {r["user_id"]: (r["archetype"], int(r["churned"])) for r in rows}


# --------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class Archetype:
    """A planted user type.

    ``profile`` maps activity names to ``(base_rate, shape)``; absent
    activities are zero. ``size_range`` counts the ego itself.
    """

    name: str
    profile: dict
    churn_probability: float
    size_range: tuple = (1, 1)
    density_range: tuple = (0.0, 1.0)
    core_fraction: float = 0.0
    proportion: float = 1.0

    def rates(self, n_days=N_DAYS):
        """Per-dimension expected daily rate before bursts/churn, shape ``(10, T)``."""
        t = np.arange(n_days, dtype=float)
        out = np.zeros((N_ACTIVITIES, n_days))
        for name, (base, shape) in self.profile.items():
            i = ACTIVITY_NAMES.index(name)
            if shape in ("flat", "bursty"):
                out[i] = base
            elif shape == "decaying":
                out[i] = base * np.exp(-t / 3.0)
            elif shape == "growing":
                out[i] = base * (0.2 + 1.6 * t / max(n_days - 1, 1))
            elif shape == "zero":
                out[i] = 0.0
        return out


@dataclass(frozen=True)
class SyntheticSpec:
    archetypes: tuple
    seed: int = 0
    n_days: int = N_DAYS
    # churners' first-week rates ramp down linearly by this fraction
    churn_fade: float = 0.5
    burst_prob: float = 0.15
    burst_gain: float = 4.0
    burst_length: int = 4
    existing_per_user: int = 4
    core_share: float = 0.05
    names: tuple = field(default=DIMENSION_NAMES)

    def __post_init__(self):
        arch = tuple(self.archetypes)
        object.__setattr__(self, "archetypes", arch)
        if not arch:
            raise ValidationError("SyntheticSpec needs at least one archetype")
        total = sum(a.proportion for a in arch)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"archetype proportions sum to {total}, not 1")
        if len({a.name for a in arch}) != len(arch):
            raise ValidationError("archetype names must be unique")
        if self.n_days < SECOND_WEEK[1]:
            raise ValidationError(f"synthetic series need at least {SECOND_WEEK[1]} days")
        for a in arch:
            if not 0 <= a.churn_probability <= 1:
                raise ValidationError(f"{a.name}: churn probability outside [0, 1]")
            if a.proportion < 0:
                raise ValidationError(f"{a.name}: negative proportion")
            for name, (base, shape) in a.profile.items():
                if name not in ACTIVITY_NAMES:
                    raise ValidationError(f"{a.name}: unknown activity {name!r}")
                if shape not in SHAPES:
                    raise ValidationError(f"{a.name}: unknown trend shape {shape!r}")
                if base < 0:
                    raise ValidationError(f"{a.name}: negative base rate for {name}")
            lo, hi = a.size_range
            if not 1 <= lo <= hi:
                raise ValidationError(f"{a.name}: bad size range {a.size_range}")
            dlo, dhi = a.density_range
            if not 0 <= dlo <= dhi <= 1:
                raise ValidationError(f"{a.name}: bad density range {a.density_range}")
            if not 0 <= a.core_fraction <= 1:
                raise ValidationError(f"{a.name}: core fraction outside [0, 1]")
            week2 = a.rates(self.n_days)[:, SECOND_WEEK[0] - 1:SECOND_WEEK[1]]
            if not week2.any() and a.churn_probability != 1:
                raise ValidationError(
                    f"{a.name}: no second-week activity is possible, so churn probability must be 1")


def default_spec(seed=0):
    """Six archetypes shaped after the usual new-user cohorts.

    Churn probabilities rise from All-star to Sleeper.
    """
    chat_snap = ("chat_received", "chat_sent", "snap_received", "snap_sent")
    tendril = dict(density_range=(0.30, 0.50), core_fraction=0.58)
    archetypes = (
        Archetype("All-star",
                  {**{n: (9, "flat") for n in chat_snap}, "story_viewed": (6, "flat"),
                   "lens_sent": (3, "flat"), "lens_swiped": (6, "flat")},
                  0.03, size_range=(20, 35), proportion=0.15, **tendril),
        Archetype("Chatter", {n: (12, "flat") for n in chat_snap}, 0.10,
                  size_range=(14, 26), proportion=0.20, **tendril),
        Archetype("Bumper", {n: (5, "bursty") for n in chat_snap}, 0.30,
                  size_range=(12, 22), proportion=0.15, **tendril),
        Archetype("Sleeper", {}, 1.0, proportion=0.20),
        Archetype("Swiper",
                  {"lens_swiped": (15, "decaying"), "lens_saved": (4, "decaying"),
                   "lens_posted": (3, "decaying")},
                  0.60, proportion=0.10),
        Archetype("Invitee", {"chat_received": (0.6, "flat"), "snap_received": (0.6, "flat")},
                  0.80, size_range=(6, 10), density_range=(0.20, 0.40), core_fraction=0.20,
                  proportion=0.20),
    )
    return SyntheticSpec(archetypes=archetypes, seed=seed)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    series: list
    graph: SocialGraph
    archetypes: list
    churned: np.ndarray
    edge_days: dict
    new_users: list

    def snapshot(self, day):
        """Graph as of the end of ``day`` (1-based)."""
        edges = [e for e, d in self.edge_days.items() if d <= day]
        return SocialGraph(edges, nodes=self.graph.nodes)

    def snapshots(self):
        return [self.snapshot(t) for t in range(1, self.series[0].n_days + 1)]


def generate_synthetic(spec, n_users):
    """Draw ``n_users`` new users, their activity series and a friendship graph.

    Counts are Poisson with an archetype- and day-dependent rate. Churners emit
    no behavioral activity in week two; non-churners are conditioned on at
    least one event there, so labels recomputed from the series always match.
    """
    if n_users < 1:
        raise ValidationError("n_users must be at least 1")
    rng = np.random.default_rng(spec.seed)
    T = spec.n_days
    w2 = slice(SECOND_WEEK[0] - 1, SECOND_WEEK[1])
    props = np.array([a.proportion for a in spec.archetypes])
    counts = _apportion(props, n_users)
    kinds = np.repeat(np.arange(len(spec.archetypes)), counts)
    kinds = kinds[rng.permutation(n_users)]
    width = max(4, len(str(n_users)))
    user_ids = [f"u{i + 1:0{width}d}" for i in range(n_users)]

    behav = np.zeros((n_users, N_ACTIVITIES, T))
    churned = np.zeros(n_users, dtype=bool)
    fade = np.ones(T)
    fade[:SECOND_WEEK[0] - 1] = 1.0 - spec.churn_fade * np.linspace(0, 1, SECOND_WEEK[0] - 1)
    fade[w2] = 0.0
    for i in range(n_users):
        a = spec.archetypes[kinds[i]]
        rate = a.rates(T)
        bursty = [ACTIVITY_NAMES.index(n) for n, (_, s) in a.profile.items() if s == "bursty"]
        if bursty:
            rate[bursty] *= _burst_mask(rng, T, spec.burst_prob, spec.burst_gain, spec.burst_length)
        churned[i] = rng.random() < a.churn_probability
        if churned[i]:
            rate = rate * fade
        x = rng.poisson(rate)
        if not churned[i]:
            for _ in range(100):
                if x[:, w2].any():
                    break
                x[:, w2] = rng.poisson(rate[:, w2])
            else:
                day = rng.integers(SECOND_WEEK[0] - 1, SECOND_WEEK[1])
                x[int(np.argmax(rate[:, day])), day] = 1
        behav[i] = x

    graph, edge_days = _build_graph(spec, rng, user_ids, kinds, churned)
    net = np.zeros((n_users, 2, T))
    snaps = []
    for t in range(1, T + 1):
        adj = {}
        for (a, b), d in edge_days.items():
            if d <= t:
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set()).add(a)
        snaps.append(adj)
    for i, u in enumerate(user_ids):
        for t in range(T):
            net[i, :, t] = _ego(snaps[t], u)

    series = [ActivitySeries(u, np.concatenate([behav[i], net[i]]), spec.names)
              for i, u in enumerate(user_ids)]
    return SyntheticDataset(
        series=series,
        graph=graph,
        archetypes=[spec.archetypes[k].name for k in kinds],
        churned=churned.astype(int),
        edge_days=edge_days,
        new_users=user_ids,
    )


def _ego(adj, u):
    friends = adj.get(u, set())
    s = len(friends) + 1
    if s <= 1:
        return 1.0, 0.0
    inner = sum(len(adj[v] & friends) for v in friends) // 2
    return float(s), (len(friends) + inner) / (s * (s - 1) / 2)


def _apportion(props, n):
    """Largest-remainder rounding of ``props * n`` to integers summing to ``n``."""
    raw = props * n
    base = np.floor(raw).astype(int)
    rem = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rem]] += 1
    return base


def _burst_mask(rng, T, p, gain, length):
    """Multiplicative day mask: ``length``-day bursts at ``gain`` over a near-zero floor."""
    mask = np.full(T, 0.1)
    t = 0
    while t < T:
        if rng.random() < p:
            mask[t:t + length] = gain
            t += length
        else:
            t += 1
    return mask


def _build_graph(spec, rng, user_ids, kinds, churned):
    n_users = len(user_ids)
    n_exist = max(200, spec.existing_per_user * n_users)
    n_core = max(5, int(round(spec.core_share * n_exist)))
    exist = [f"x{i + 1:06d}" for i in range(n_exist)]
    core, periphery = exist[:n_core], exist[n_core:]
    adj = {u: set() for u in exist}
    edge_days = {}

    def link(a, b, day=0):
        if a == b or b in adj[a]:
            return False
        adj[a].add(b)
        adj[b].add(a)
        edge_days[(a, b) if a < b else (b, a)] = day
        return True

    # core: moderately dense among itself, plus spokes into the periphery
    p_cc = min(1.0, 12.0 / max(n_core - 1, 1))
    for i in range(n_core):
        hits = np.nonzero(rng.random(n_core - i - 1) < p_cc)[0]
        for j in hits:
            link(core[i], core[i + 1 + j])
        for j in rng.choice(len(periphery), size=min(20, len(periphery)), replace=False):
            link(core[i], periphery[j])
    for i, u in enumerate(periphery):
        for j in rng.choice(len(periphery), size=2, replace=False):
            link(u, periphery[j])

    for i, u in enumerate(user_ids):
        a = spec.archetypes[kinds[i]]
        adj[u] = set()
        size = int(rng.integers(a.size_range[0], a.size_range[1] + 1))
        n_friends = size - 1
        n_core_f = min(int(round(a.core_fraction * n_friends)), n_core)
        n_per_f = min(n_friends - n_core_f, len(periphery))
        friends = [core[j] for j in sorted(rng.choice(n_core, size=n_core_f, replace=False))]
        friends += [periphery[j] for j in sorted(rng.choice(len(periphery), size=n_per_f, replace=False))]
        cap = SECOND_WEEK[0] - 1 if churned[i] else spec.n_days
        for f in friends:
            d = int(min(cap, rng.geometric(0.4)))
            link(u, f, d)
        # top up friend-friend links towards a target density; at least one
        # endpoint is peripheral so the core is not saturated
        if len(friends) >= 2:
            s = len(friends) + 1
            target = rng.uniform(*a.density_range) * s * (s - 1) / 2 - len(friends)
            fset = set(friends)
            inner = sum(len(adj[f] & fset) for f in friends) // 2
            need = int(math.ceil(target - inner - 1e-9))
            if need > 0:
                core_set = set(core)
                pairs = [(x, y) for ix, x in enumerate(friends) for y in friends[ix + 1:]
                         if y not in adj[x] and not (x in core_set and y in core_set)]
                if pairs:
                    pick = rng.choice(len(pairs), size=min(need, len(pairs)), replace=False)
                    for j in sorted(pick):
                        link(*pairs[j])
    graph = SocialGraph(list(edge_days), nodes=list(adj))
    # edges between existing users exist from registration day onwards
    edge_days = {e: max(d, 1) for e, d in edge_days.items()}
    return graph, edge_days
