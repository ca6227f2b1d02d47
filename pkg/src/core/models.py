import hashlib
import json
import logging
import math
from enum import Enum
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InstanceError

logger = logging.getLogger(__name__)

# Ratio reported when positive welfare is compared against zero welfare.
UNBOUNDED = math.inf


# Demand side
class MarketParams(BaseModel):
    """
    Affine inverse demand p(d) = alpha - beta * d of a single market.

    Both parameters must be strictly positive; that is checked by validate(),
    not at construction, so malformed documents can still be reported on.
    """
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(description="Maximum willingness to pay (price at zero quantity).")
    beta: float = Field(description="Price drop per unit of supplied quantity.")

    def price(self, d: float) -> float:
        """Market price at aggregate quantity d (may be negative)."""
        return self.alpha - self.beta * d

    def utility(self, d: float) -> float:
        """Area under the inverse demand curve between 0 and d."""
        return self.alpha * d - 0.5 * self.beta * d * d

    @property
    def choke_quantity(self) -> float:
        """Quantity at which the price reaches zero."""
        return self.alpha / self.beta


# Supply side
class CostKind(str, Enum):
    """Supported production cost families."""
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class CostFunction(BaseModel):
    """
    Convex, nondecreasing production cost C(s) = c*s + d*s^2 for s > 0, zero otherwise.

    Linear costs carry d = 0.
    """
    model_config = ConfigDict(frozen=True)

    kind: CostKind = Field(description="Cost family.")
    c: float = Field(default=0.0, description="Marginal cost at zero output.")
    d: float = Field(default=0.0, description="Quadratic coefficient (zero for linear costs).")

    @classmethod
    def linear(cls, c: float) -> "CostFunction":
        return cls(kind=CostKind.LINEAR, c=c)

    @classmethod
    def quadratic(cls, c: float, d: float) -> "CostFunction":
        return cls(kind=CostKind.QUADRATIC, c=c, d=d)

    @property
    def is_linear(self) -> bool:
        return self.kind == CostKind.LINEAR or self.d == 0.0

    def evaluate(self, s: float) -> float:
        """
        Production cost of an aggregate output.

        Args:
            s: Aggregate quantity produced

        Returns:
            float: C(s), zero for s <= 0
        """
        if s <= 0.0:
            return 0.0
        return self.c * s + self.d * s * s

    def right_derivative(self, s: float) -> float:
        """Right derivative of C at s (equals c at s <= 0)."""
        if s <= 0.0:
            return self.c
        return self.c + 2.0 * self.d * s


# Network
class EdgeSet(BaseModel):
    """
    Firm-to-market incidence. Indices are 0-based in the Python API and
    1-based in serialized documents.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(description="Number of firms.")
    m: int = Field(description="Number of markets.")
    present: Tuple[Tuple[bool, ...], ...] = Field(description="n x m incidence matrix.")

    @classmethod
    def complete(cls, n: int, m: int) -> "EdgeSet":
        return cls(n=n, m=m, present=tuple(tuple(True for _ in range(m)) for _ in range(n)))

    @classmethod
    def empty(cls, n: int, m: int) -> "EdgeSet":
        return cls(n=n, m=m, present=tuple(tuple(False for _ in range(m)) for _ in range(n)))

    @classmethod
    def from_pairs(cls, n: int, m: int, pairs: Iterable[Tuple[int, int]]) -> "EdgeSet":
        """Build an edge set from 0-based (firm, market) pairs."""
        grid = np.zeros((n, m), dtype=bool)
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < m):
                raise InstanceError("edge out of range", location=f"edge ({i + 1},{j + 1})")
            grid[i, j] = True
        return cls.from_array(grid)

    @classmethod
    def from_array(cls, grid: np.ndarray) -> "EdgeSet":
        grid = np.asarray(grid, dtype=bool)
        n, m = grid.shape
        return cls(n=n, m=m, present=tuple(tuple(bool(x) for x in row) for row in grid))

    def as_array(self) -> np.ndarray:
        if self.n == 0 or self.m == 0:
            return np.zeros((self.n, self.m), dtype=bool)
        return np.array(self.present, dtype=bool)

    def contains(self, i: int, j: int) -> bool:
        """Membership of the 0-based pair (i, j); False outside the index range."""
        if not (0 <= i < self.n and 0 <= j < self.m):
            return False
        return self.present[i][j]

    def pairs(self) -> List[Tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(self.m) if self.present[i][j]]

    def firms_in_market(self, j: int) -> List[int]:
        return [i for i in range(self.n) if self.present[i][j]]

    def with_edge(self, i: int, j: int) -> "EdgeSet":
        grid = self.as_array().copy()
        grid[i, j] = True
        return EdgeSet.from_array(grid)

    @property
    def count(self) -> int:
        return int(self.as_array().sum())

    @property
    def is_complete(self) -> bool:
        return self.count == self.n * self.m


# Game description
class Instance(BaseModel):
    """
    A networked Cournot game: firm cost profile, market demands and access edges.

    metadata is free-form (generator family, parameters, derived constants).
    """
    model_config = ConfigDict(frozen=True)

    firms: Tuple[CostFunction, ...] = Field(description="Cost function of each firm, in given order.")
    markets: Tuple[MarketParams, ...] = Field(description="Inverse demand of each market.")
    edges: EdgeSet = Field(description="Which firm may supply which market.")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="Generator metadata.")

    @property
    def n(self) -> int:
        return len(self.firms)

    @property
    def m(self) -> int:
        return len(self.markets)

    @property
    def all_linear(self) -> bool:
        return all(f.is_linear for f in self.firms)

    def slopes(self) -> np.ndarray:
        """Marginal costs at zero output (the full cost for linear firms)."""
        return np.array([f.c for f in self.firms], dtype=float)

    def alphas(self) -> np.ndarray:
        return np.array([mk.alpha for mk in self.markets], dtype=float)

    def betas(self) -> np.ndarray:
        return np.array([mk.beta for mk in self.markets], dtype=float)

    def cost_order(self) -> List[int]:
        """Firm permutation by ascending marginal cost, ties by original index."""
        return [int(i) for i in np.argsort(self.slopes(), kind="stable")]

    def with_edges(self, edges: EdgeSet) -> "Instance":
        return self.model_copy(update={"edges": edges})

    def with_costs(self, firms: Sequence[CostFunction]) -> "Instance":
        return self.model_copy(update={"firms": tuple(firms)})

    def open_access(self) -> "Instance":
        return self.with_edges(EdgeSet.complete(self.n, self.m))


class SupplyProfile(BaseModel):
    """n x m matrix of nonnegative quantities q[i][j] (firm i into market j)."""
    model_config = ConfigDict(frozen=True)

    q: Tuple[Tuple[float, ...], ...] = Field(description="Quantity supplied by firm i to market j.")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "SupplyProfile":
        arr = np.asarray(arr, dtype=float)
        return cls(q=tuple(tuple(float(x) for x in row) for row in arr))

    @classmethod
    def zeros(cls, n: int, m: int) -> "SupplyProfile":
        return cls.from_array(np.zeros((n, m)))

    def as_array(self) -> np.ndarray:
        return np.array(self.q, dtype=float).reshape(len(self.q), -1 if self.q else 0)

    @property
    def firm_totals(self) -> np.ndarray:
        """Aggregate output s_i of each firm."""
        return self.as_array().sum(axis=1)

    @property
    def market_totals(self) -> np.ndarray:
        """Aggregate supply d_j of each market."""
        return self.as_array().sum(axis=0)

    def sparsity_violations(self, edges: EdgeSet) -> List[str]:
        """Entries that are negative, non-finite or placed on a missing edge."""
        arr = self.as_array()
        problems = []
        if arr.shape != (edges.n, edges.m):
            return [f"profile shape {arr.shape} does not match edge set ({edges.n}, {edges.m})"]
        grid = edges.as_array()
        for i, j in zip(*np.nonzero(~np.isfinite(arr) | (arr < 0.0))):
            problems.append(f"q[{i + 1}][{j + 1}] = {arr[i, j]} is not a finite nonnegative number")
        for i, j in zip(*np.nonzero((arr != 0.0) & ~grid)):
            problems.append(f"q[{i + 1}][{j + 1}] = {arr[i, j]} on missing edge")
        return problems


class ValidationReport(BaseModel):
    """Outcome of validate(): ok, or the list of violations found."""
    model_config = ConfigDict(frozen=True)

    ok: bool
    violations: Tuple[str, ...] = Field(default=())


def validate(instance: Instance) -> ValidationReport:
    """
    Check an instance against the model's standing assumptions.

    Args:
        instance: Instance to check

    Returns:
        ValidationReport: ok, or every violation found (never raises)
    """
    violations: List[str] = []
    if instance.n < 1:
        violations.append("at least one firm is required")
    if instance.m < 1:
        violations.append("at least one market is required")
    for j, mk in enumerate(instance.markets, start=1):
        if not math.isfinite(mk.alpha) or mk.alpha <= 0.0:
            violations.append(f"market {j}: alpha must be strictly positive")
        if not math.isfinite(mk.beta) or mk.beta <= 0.0:
            violations.append(f"market {j}: beta must be strictly positive")
    for i, cost in enumerate(instance.firms, start=1):
        if not math.isfinite(cost.c) or cost.c < 0.0:
            violations.append(f"firm {i}: cost coefficient c must be nonnegative")
        if not math.isfinite(cost.d) or cost.d < 0.0:
            violations.append(f"firm {i}: cost coefficient d must be nonnegative")
        if cost.kind == CostKind.LINEAR and cost.d != 0.0:
            violations.append(f"firm {i}: linear cost cannot carry a quadratic coefficient")
    if instance.edges.n != instance.n or instance.edges.m != instance.m:
        violations.append("edge set dimension mismatch")
    elif len(instance.edges.present) != instance.n or any(len(r) != instance.m for r in instance.edges.present):
        violations.append("edge set dimension mismatch")
    return ValidationReport(ok=not violations, violations=tuple(violations))


def ensure_valid(instance: Instance) -> Instance:
    """Raise InstanceError unless validate(instance) is ok."""
    report = validate(instance)
    if not report.ok:
        raise InstanceError("instance failed validation", violations=list(report.violations))
    return instance


# Canonical document schema
class _CostDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear", "quadratic"]
    c: float
    d: Optional[float] = None

    @model_validator(mode="after")
    def _check_coefficients(self) -> "_CostDocument":
        if self.kind == "quadratic" and self.d is None:
            raise ValueError("quadratic cost requires coefficient d")
        return self


class _FirmDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cost: _CostDocument


class _MarketDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float
    beta: float


class _InstanceDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    firms: List[_FirmDocument]
    markets: List[_MarketDocument]
    edges: Union[Literal["complete"], List[Tuple[int, int]]]
    metadata: Dict[str, Any] = Field(default_factory=dict)


def _format_loc(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc)


def parse_instance(text: str) -> Instance:
    """
    Parse and validate a JSON instance document.

    Args:
        text: Serialized instance (see serialize_instance for the layout)

    Returns:
        Instance: The parsed, validated instance

    Raises:
        InstanceError: On malformed JSON, schema violations or failed validation
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"malformed JSON: {e.msg}", location=f"line {e.lineno}, column {e.colno}") from e

    try:
        doc = _InstanceDocument.model_validate(raw)
    except ValidationError as e:
        problems = [f"{_format_loc(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise InstanceError("instance schema violation", violations=problems) from e

    firms = tuple(
        CostFunction(kind=CostKind(f.cost.kind), c=f.cost.c, d=f.cost.d or 0.0) for f in doc.firms
    )
    markets = tuple(MarketParams(alpha=mk.alpha, beta=mk.beta) for mk in doc.markets)
    n, m = len(firms), len(markets)
    if doc.edges == "complete":
        edges = EdgeSet.complete(n, m)
    else:
        edges = EdgeSet.from_pairs(n, m, [(i - 1, j - 1) for i, j in doc.edges])

    instance = Instance(firms=firms, markets=markets, edges=edges, metadata=doc.metadata)
    return ensure_valid(instance)


def instance_to_document(instance: Instance) -> Dict[str, Any]:
    """Canonical dict form of an instance (1-based edge pairs)."""
    firms = []
    for cost in instance.firms:
        entry: Dict[str, Any] = {"kind": cost.kind.value, "c": cost.c}
        if cost.kind == CostKind.QUADRATIC:
            entry["d"] = cost.d
        firms.append({"cost": entry})
    edges: Union[str, List[List[int]]]
    if instance.edges.is_complete:
        edges = "complete"
    else:
        edges = [[i + 1, j + 1] for i, j in instance.edges.pairs()]
    doc: Dict[str, Any] = {
        "firms": firms,
        "markets": [{"alpha": mk.alpha, "beta": mk.beta} for mk in instance.markets],
        "edges": edges,
    }
    if instance.metadata:
        doc["metadata"] = instance.metadata
    return doc


def serialize_instance(instance: Instance) -> str:
    """Canonical JSON text; parse_instance(serialize_instance(x)) == x."""
    return json.dumps(instance_to_document(instance), indent=2, sort_keys=False)


def instance_digest(instance: Instance) -> str:
    """SHA-256 of the canonical serialization without metadata."""
    doc = instance_to_document(instance)
    doc.pop("metadata", None)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def linear_instance(
        costs: Sequence[float],
        markets: Sequence[Tuple[float, float]],
        edges: Optional[EdgeSet] = None,
        metadata: Optional[Dict[str, Any]] = None,
) -> Instance:
    """
    Convenience constructor for linear-cost instances.

    Args:
        costs: Marginal cost of each firm
        markets: (alpha, beta) of each market
        edges: Edge set, complete when omitted
        metadata: Optional generator metadata

    Returns:
        Instance: The assembled (unvalidated) instance
    """
    firms = tuple(CostFunction.linear(float(c)) for c in costs)
    mks = tuple(MarketParams(alpha=float(a), beta=float(b)) for a, b in markets)
    return Instance(
        firms=firms,
        markets=mks,
        edges=edges if edges is not None else EdgeSet.complete(len(firms), len(mks)),
        metadata=dict(metadata or {}),
    )
