"""OII-guided bisection over the regulator alpha, and the grid-search baseline.

A "training function" maps alpha to a ``TrialResult`` (OII, IoU, PA and,
optionally, the training log). The search assumes validation OII decreases
as alpha grows: OII above the target band moves alpha right, OII below it
moves alpha left, each time to the midpoint of the surviving half-interval.
"""

from dataclasses import dataclass, field
import csv
import io
import math


BAND_HIT = "band-hit"
BUDGET_EXHAUSTED = "budget-exhausted"
NON_MONOTONE = "non-monotone-detected"

TRACE_HEADER = ("trial", "alpha", "oii", "iou", "pa", "status")


@dataclass(frozen=True)
class GuidanceConfig:
    alpha_range: tuple = (0.1, 0.9)
    target_band: tuple = (0.15, 0.25)
    max_trainings: int = 6
    tie_beta: bool = True
    objective: str = "iou"

    def __post_init__(self):
        a, b = self.alpha_range
        if not 0.0 <= a < b <= 1.0:
            raise ValueError(f"alpha_range must satisfy 0 <= a < b <= 1, got {self.alpha_range}")
        m0, m1 = self.target_band
        if not m0 < m1:
            raise ValueError(f"target_band must satisfy m0 < m1, got {self.target_band}")
        if self.max_trainings < 1:
            raise ValueError("max_trainings must be >= 1")
        if self.objective not in ("iou", "pa"):
            raise ValueError("objective must be 'iou' or 'pa'")


@dataclass(frozen=True)
class TrialResult:
    oii: float
    iou: float
    pa: float
    log: object = None


@dataclass(frozen=True)
class Trial:
    alpha: float
    oii: float
    iou: float
    pa: float
    log: object = None


@dataclass
class SearchTrace:
    trials: list = field(default_factory=list)
    status: str = BUDGET_EXHAUSTED

    def __len__(self):
        return len(self.trials)

    @property
    def n_trainings(self):
        return len(self.trials)

    @property
    def last(self):
        return self.trials[-1]

    def best(self, objective="iou"):
        """Band-hit trial if any, else the trial with the best objective."""
        if self.status == BAND_HIT:
            return self.last
        return max(self.trials, key=lambda t: (getattr(t, objective), -t.alpha))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i, t in enumerate(self.trials):
            status = self.status if i == len(self.trials) - 1 else "continue"
            writer.writerow([i, repr(t.alpha), repr(t.oii), repr(t.iou), repr(t.pa), status])
        return buf.getvalue()


def _as_result(out):
    if isinstance(out, TrialResult):
        return out
    return TrialResult(*out)


def in_band(value, band):
    return band[0] < value < band[1]


def oii_guided_search(train_fn, cfg=GuidanceConfig()):
    """Bisect alpha until validation OII falls inside the open target band.

    ``train_fn(alpha)`` must be deterministic. A response that moves against
    the assumed direction twice stops the search with ``non-monotone-detected``.
    """
    lo, hi = cfg.alpha_range
    m0, m1 = cfg.target_band
    trace = SearchTrace()
    violations = 0
    prev = None  # (oii, direction moved after it)
    alpha = (lo + hi) / 2.0
    while len(trace.trials) < cfg.max_trainings:
        res = _as_result(train_fn(alpha))
        trace.trials.append(Trial(alpha, res.oii, res.iou, res.pa, res.log))
        if prev is not None:
            prev_oii, moved = prev
            # after raising alpha OII should not rise, after lowering it should not fall
            if (moved > 0 and res.oii > prev_oii) or (moved < 0 and res.oii < prev_oii):
                violations += 1
                if violations >= 2:
                    trace.status = NON_MONOTONE
                    return trace
        if in_band(res.oii, cfg.target_band):
            trace.status = BAND_HIT
            return trace
        if res.oii >= m1:
            lo, direction = alpha, 1
        else:
            hi, direction = alpha, -1
        prev = (res.oii, direction)
        alpha = (lo + hi) / 2.0
    trace.status = BUDGET_EXHAUSTED
    return trace


@dataclass
class GridResult:
    alpha: float
    iou: float
    pa: float
    table: list

    @property
    def n_trainings(self):
        return len(self.table)


def grid_search(train_fn, grid, objective="iou"):
    """Train once per grid point; best objective wins, ties go to the smaller alpha."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    table = []
    for alpha in grid:
        res = _as_result(train_fn(alpha))
        table.append(Trial(alpha, res.oii, res.iou, res.pa, res.log))
    best = max(table, key=lambda t: (getattr(t, objective), -t.alpha))
    return GridResult(best.alpha, best.iou, best.pa, table)


def uniform_grid(alpha_range, parts):
    """``parts + 1`` equally spaced alphas covering ``alpha_range``."""
    a, b = alpha_range
    return [a + i * (b - a) / parts for i in range(parts + 1)]


@dataclass(frozen=True)
class ComplexityReport:
    grid_trainings: int
    guided_trainings: int
    ratio: float
    step: float


def complexity_report(m, interval=(0.1, 0.9)):
    """Training counts at refinement 2**m: a full grid needs 2**m + 1, bisection at most m."""
    if m < 1:
        raise ValueError("refinement m must be >= 1")
    grid = 2**m + 1
    return ComplexityReport(grid, m, grid / m, (interval[1] - interval[0]) / 2**m)


def comparison_table(grid_result, trace, objective="iou"):
    """Rows (method, trainings, alpha, iou, pa) for grid search vs guidance."""
    best = trace.best(objective)
    return [
        ("grid", grid_result.n_trainings, grid_result.alpha, grid_result.iou, grid_result.pa),
        ("oii-guide", trace.n_trainings, best.alpha, best.iou, best.pa),
    ]


def comparison_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("method", "trainings", "alpha", "iou", "pa"))
    for method, n, alpha, iou, pa in rows:
        writer.writerow([method, n, repr(alpha), repr(iou), repr(pa)])
    return buf.getvalue()


def max_bisection_trials(alpha_range, band_width):
    """Upper bound on guided trials when the band's alpha-preimage has width ``band_width``."""
    a, b = alpha_range
    return math.ceil(math.log2((b - a) / band_width)) + 1
