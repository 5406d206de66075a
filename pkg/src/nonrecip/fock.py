"""Truncated multimode bosonic Fock spaces and labeled dense operators."""

import ast
import cmath
import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import qutip

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12

Scalar = Union[int, float, complex]


@dataclass(frozen=True)
class FockSpace:
    """Tensor product of truncated oscillators; mode 1 varies slowest."""

    num_modes: int
    cutoff: Union[int, Tuple[int, ...]]

    def __post_init__(self) -> None:
        if self.num_modes < 1:
            raise InvalidArgumentError(f"num_modes must be positive, got {self.num_modes}")
        cutoffs = (
            (int(self.cutoff),) * self.num_modes
            if isinstance(self.cutoff, (int, np.integer))
            else tuple(int(c) for c in self.cutoff)
        )
        if len(cutoffs) != self.num_modes or any(c < 0 for c in cutoffs):
            raise InvalidArgumentError(f"invalid cutoffs {self.cutoff} for {self.num_modes} modes")
        object.__setattr__(self, "cutoff", cutoffs)

    @property
    def cutoffs(self) -> Tuple[int, ...]:
        return self.cutoff  # type: ignore[return-value]

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    @property
    def modes(self) -> Tuple[int, ...]:
        return tuple(range(1, self.num_modes + 1))

    def check_mode(self, mode: int) -> None:
        if not 1 <= mode <= self.num_modes:
            raise InvalidArgumentError(f"mode {mode} outside [1, {self.num_modes}]")


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Dense complex matrix on a FockSpace, carrying a printable label."""

    space: FockSpace
    matrix: np.ndarray
    label: str = "X"

    # numpy scalars must defer to the operator overloads below
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        d = self.space.dimension
        if matrix.shape != (d, d):
            raise InvalidArgumentError(f"operator shape {matrix.shape} does not match dimension {d}")
        object.__setattr__(self, "matrix", matrix)

    # ------------------------------------------------------------------
    # Algebra
    # ------------------------------------------------------------------

    def _coerce(self, other: Union["FockOperator", Scalar]) -> "FockOperator":
        if isinstance(other, FockOperator):
            if other.space != self.space:
                raise InvalidArgumentError("operators live on different Fock spaces")
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return FockOperator(self.space, complex(other) * np.eye(self.space.dimension), _fmt(other))
        raise TypeError(f"cannot combine FockOperator with {type(other).__name__}")

    def __add__(self, other: Union["FockOperator", Scalar]) -> "FockOperator":
        rhs = self._coerce(other)
        return FockOperator(self.space, self.matrix + rhs.matrix, f"({self.label} + {rhs.label})")

    def __radd__(self, other: Scalar) -> "FockOperator":
        return self._coerce(other) + self

    def __sub__(self, other: Union["FockOperator", Scalar]) -> "FockOperator":
        rhs = self._coerce(other)
        return FockOperator(self.space, self.matrix - rhs.matrix, f"({self.label} - {rhs.label})")

    def __rsub__(self, other: Scalar) -> "FockOperator":
        return self._coerce(other) - self

    def __neg__(self) -> "FockOperator":
        return FockOperator(self.space, -self.matrix, f"-{self.label}")

    def __mul__(self, other: Union["FockOperator", Scalar]) -> "FockOperator":
        if isinstance(other, FockOperator):
            rhs = self._coerce(other)
            return FockOperator(self.space, self.matrix @ rhs.matrix, f"{self.label}*{rhs.label}")
        if isinstance(other, (int, float, complex, np.number)):
            return FockOperator(self.space, complex(other) * self.matrix, f"{_fmt(other)}*{self.label}")
        return NotImplemented

    __matmul__ = __mul__

    def __rmul__(self, other: Scalar) -> "FockOperator":
        if isinstance(other, (int, float, complex, np.number)):
            return FockOperator(self.space, complex(other) * self.matrix, f"{_fmt(other)}*{self.label}")
        return NotImplemented

    def __truediv__(self, other: Scalar) -> "FockOperator":
        return self * (1.0 / complex(other))

    def __pow__(self, exponent: int) -> "FockOperator":
        if not isinstance(exponent, int) or exponent < 0:
            raise InvalidArgumentError(f"operator powers must be non-negative integers, got {exponent}")
        matrix = np.linalg.matrix_power(self.matrix, exponent)
        return FockOperator(self.space, matrix, f"{self.label}^{exponent}")

    def adjoint(self) -> "FockOperator":
        label = self.label[4:-1] if self.label.startswith("dag(") else f"dag({self.label})"
        return FockOperator(self.space, self.matrix.conj().T, label)

    @property
    def dag(self) -> "FockOperator":
        return self.adjoint()

    def relabel(self, label: str) -> "FockOperator":
        return FockOperator(self.space, self.matrix, label)

    def expect(self, rho: np.ndarray) -> complex:
        """tr(X rho)."""
        return complex(np.einsum("ij,ji->", self.matrix, rho))

    def __repr__(self) -> str:
        return f"FockOperator({self.label}, dim={self.space.dimension})"

    def __str__(self) -> str:
        with np.printoptions(precision=4, suppress=True, linewidth=120):
            return f"{self.label} =\n{self.matrix}"


def _fmt(value: Scalar) -> str:
    value = complex(value)
    if value.imag == 0:
        return f"{value.real:g}"
    return f"({value.real:g}{value.imag:+g}j)"


def adjoint(op: FockOperator) -> FockOperator:
    return op.adjoint()


# ============================================================================
# Construction
# ============================================================================


def identity(space: FockSpace) -> FockOperator:
    return FockOperator(space, np.eye(space.dimension), "I")


def embed(space: FockSpace, matrix: np.ndarray, modes: Sequence[int]) -> np.ndarray:
    """Place a matrix acting on `modes` (in the listed order) into the full space."""
    modes = list(modes)
    for m in modes:
        space.check_mode(m)
    if len(set(modes)) != len(modes):
        raise InvalidArgumentError(f"repeated modes in {modes}")
    dims = space.dims
    rest = [m for m in space.modes if m not in modes]
    order = modes + rest
    d_sub = int(np.prod([dims[m - 1] for m in modes]))
    d_rest = int(np.prod([dims[m - 1] for m in rest])) if rest else 1
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (d_sub, d_sub):
        raise InvalidArgumentError(f"matrix shape {matrix.shape} does not fit modes {modes}")

    full = np.kron(matrix, np.eye(d_rest))
    shape = [dims[m - 1] for m in order]
    tensor = full.reshape(shape + shape)
    n = space.num_modes
    perm = [order.index(m) for m in space.modes]
    tensor = tensor.transpose(perm + [p + n for p in perm])
    return tensor.reshape(space.dimension, space.dimension)


def local_operator(space: FockSpace, matrix: np.ndarray, mode: int, label: str = "X") -> FockOperator:
    """Single-mode matrix acting on `mode`, identity elsewhere."""
    return FockOperator(space, embed(space, matrix, [mode]), label)


def mode_annihilation(space: FockSpace, mode: int) -> FockOperator:
    """a_mode with a|n> = sqrt(n)|n-1>; [a, a^dag] fails only on the top level."""
    space.check_mode(mode)
    n_max = space.cutoffs[mode - 1]
    single = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return local_operator(space, single, mode, f"a{mode}")


def mode_creation(space: FockSpace, mode: int) -> FockOperator:
    return mode_annihilation(space, mode).adjoint()


def number_operator(space: FockSpace, mode: int) -> FockOperator:
    space.check_mode(mode)
    single = np.diag(np.arange(space.cutoffs[mode - 1] + 1, dtype=float))
    return local_operator(space, single, mode, f"n{mode}")


def commutator(a: FockOperator, b: FockOperator) -> FockOperator:
    return a * b - b * a


def anticommutator(a: FockOperator, b: FockOperator) -> FockOperator:
    return a * b + b * a


def is_hermitian(op: FockOperator, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(op.matrix - op.matrix.conj().T), initial=0.0) < tol)


def acts_only_on(op: FockOperator, modes: Iterable[int], tol: float = HERMITIAN_TOL) -> bool:
    """True when op commutes with the ladder and number operators of every other mode."""
    keep = set(modes)
    for m in op.space.modes:
        if m in keep:
            continue
        a = mode_annihilation(op.space, m)
        for ladder in (a, a.adjoint(), number_operator(op.space, m)):
            if np.max(np.abs(commutator(op, ladder).matrix)) >= tol:
                return False
    return True


def basis_state(space: FockSpace, occupations: Sequence[int]) -> np.ndarray:
    """Fock basis ket |n_1, ..., n_M>."""
    if len(occupations) != space.num_modes:
        raise InvalidArgumentError(f"need {space.num_modes} occupations, got {len(occupations)}")
    kets = []
    for n, d in zip(occupations, space.dims):
        if not 0 <= n < d:
            raise InvalidArgumentError(f"occupation {n} above cutoff {d - 1}")
        ket = np.zeros(d, dtype=complex)
        ket[n] = 1.0
        kets.append(ket)
    return reduce(np.kron, kets)


# ============================================================================
# Bipartitions, partial traces and transposes
# ============================================================================


@dataclass(frozen=True)
class Bipartition:
    """Split of the modes into subsystem 1 and subsystem 2."""

    first: Tuple[int, ...]
    second: Tuple[int, ...]

    @classmethod
    def of(cls, space: FockSpace, first: Sequence[int], second: Optional[Sequence[int]] = None) -> "Bipartition":
        first_t = tuple(sorted(first))
        second_t = (
            tuple(m for m in space.modes if m not in first_t)
            if second is None
            else tuple(sorted(second))
        )
        for m in first_t + second_t:
            space.check_mode(m)
        if set(first_t) & set(second_t):
            raise InvalidArgumentError(f"subsystems overlap: {first_t} and {second_t}")
        if set(first_t) | set(second_t) != set(space.modes):
            raise InvalidArgumentError(f"subsystems {first_t}, {second_t} do not cover the modes")
        if not first_t or not second_t:
            raise InvalidArgumentError("both subsystems need at least one mode")
        return cls(first_t, second_t)

    @classmethod
    def default(cls, space: FockSpace) -> "Bipartition":
        return cls.of(space, [1])


def _as_qobj(matrix: np.ndarray, space: FockSpace) -> qutip.Qobj:
    dims = list(space.dims)
    return qutip.Qobj(np.asarray(matrix, dtype=complex), dims=[dims, dims])


def reduced_state(rho: np.ndarray, space: FockSpace, keep: Sequence[int]) -> np.ndarray:
    """Partial trace over every mode not in `keep` (kept modes stay in natural order)."""
    kept = sorted({m - 1 for m in keep})
    if len(kept) == space.num_modes:
        return np.asarray(rho, dtype=complex)
    return _as_qobj(rho, space).ptrace(kept).full()


def partial_transpose(rho: np.ndarray, space: FockSpace, modes: Sequence[int]) -> np.ndarray:
    """Transpose the tensor factors belonging to `modes`."""
    transposed = set(modes)
    mask = [1 if m in transposed else 0 for m in space.modes]
    return qutip.partial_transpose(_as_qobj(rho, space), mask).full()


def nonlocal_part(op: FockOperator, cut: Bipartition) -> FockOperator:
    """Remainder of op after removing its X1 (x) I + I (x) X2 component."""
    space = op.space
    d = space.dimension
    d1 = int(np.prod([space.dims[m - 1] for m in cut.first]))
    d2 = d // d1
    x1 = reduced_state(op.matrix, space, cut.first) / d2
    x2 = reduced_state(op.matrix, space, cut.second) / d1
    scalar = np.trace(op.matrix) / d
    rest = (
        op.matrix
        - embed(space, x1, cut.first)
        - embed(space, x2, cut.second)
        + scalar * np.eye(d)
    )
    return FockOperator(space, rest, f"nonlocal({op.label})")


# ============================================================================
# Expression parsing
# ============================================================================

_FUNCTIONS = {"adjoint", "dag", "sqrt", "exp"}
MAX_POWER = 64
_CONSTANTS: Dict[str, Scalar] = {"pi": math.pi, "j": 1j}


def parse_operator(
    expr: str,
    space: FockSpace,
    names: Optional[Mapping[str, FockOperator]] = None,
) -> FockOperator:
    """
    Build an operator from a string expression.

    Recognized symbols are a1..aM (or a_1), n1..nM, I, adjoint()/dag(),
    sqrt()/exp() of scalars, complex literals, +, -, *, / by scalars and
    non-negative integer powers. Extra named operators may be supplied.

    Args:
        expr: Expression such as "a1 - 1j*dag(a2)"
        space: Fock space the symbols live on
        names: Additional named operators

    Returns:
        The evaluated FockOperator labeled with the expression
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise InvalidArgumentError(f"cannot parse operator expression '{expr}': {e.msg}")
    value = _evaluate(tree.body, space, dict(names or {}))
    if not isinstance(value, FockOperator):
        value = complex(value) * identity(space)
    return value.relabel(expr)


def _lookup(name: str, space: FockSpace, names: Dict[str, FockOperator]) -> Union[FockOperator, Scalar]:
    if name in names:
        return names[name]
    if name in _CONSTANTS:
        return _CONSTANTS[name]
    if name == "I":
        return identity(space)
    stripped = name.replace("_", "")
    if stripped[:1] in ("a", "n") and stripped[1:].isdigit():
        mode = int(stripped[1:])
        space.check_mode(mode)
        if stripped[0] == "a":
            return mode_annihilation(space, mode)
        return number_operator(space, mode)
    raise InvalidArgumentError(f"unknown symbol '{name}'")


def _evaluate(node: ast.AST, space: FockSpace, names: Dict[str, FockOperator]) -> Union[FockOperator, Scalar]:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name):
        return _lookup(node.id, space, names)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _evaluate(node.operand, space, names)
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.BinOp):
        left = _evaluate(node.left, space, names)
        right = _evaluate(node.right, space, names)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            if isinstance(right, FockOperator):
                raise InvalidArgumentError("division by an operator")
            return left / right
        if isinstance(node.op, ast.Pow):
            if isinstance(right, FockOperator) or complex(right).imag != 0:
                raise InvalidArgumentError("operator powers need integer exponents")
            if abs(complex(right)) > MAX_POWER:
                raise InvalidArgumentError(f"exponent {right} exceeds {MAX_POWER}")
            if isinstance(left, FockOperator):
                exponent = complex(right).real
                if exponent != int(exponent):
                    raise InvalidArgumentError(f"non-integer operator power {exponent}")
                return left ** int(exponent)
            return left**right
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS:
        if len(node.args) != 1 or node.keywords:
            raise InvalidArgumentError(f"{node.func.id}() takes exactly one argument")
        arg = _evaluate(node.args[0], space, names)
        if node.func.id in ("adjoint", "dag"):
            return arg.adjoint() if isinstance(arg, FockOperator) else complex(arg).conjugate()
        if isinstance(arg, FockOperator):
            raise InvalidArgumentError(f"{node.func.id}() accepts scalars only")
        return cmath.sqrt(arg) if node.func.id == "sqrt" else cmath.exp(arg)
    raise InvalidArgumentError(f"unsupported expression element: {ast.dump(node)}")
