"""Semidefinite programming backend.

The rest of the package talks to this module only: declare matrix/scalar
variables, state affine PSD/NSD constraints and a linear objective, call
`solve`. Internally each symmetric matrix is packed with the scaled
upper-triangle vectorization (column-major, off-diagonals times sqrt(2)),
which is also the cone layout of the interior-point solver plugged in
behind the adapter (Clarabel).

`AffineMatrix` is a matrix-valued affine expression in the declared
variables. Only constant-coefficient operations are provided (add,
transpose, multiply by constants, Kronecker with a constant, block
assembly), which is all the LMI assembly needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sparse

_SQRT2 = float(np.sqrt(2.0))


class SdpError(ValueError):
    """Malformed problem: bad dimensions, unknown variables, lost symmetry."""


# ---------------------------------------------------------------------------
# scaled upper-triangle packing


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec(M: np.ndarray) -> np.ndarray:
    """Pack a symmetric n x n matrix into n(n+1)/2 entries.

    Column-major upper triangle; off-diagonal entries are scaled by sqrt(2)
    so that inner products are preserved: svec(A) . svec(B) = <A, B>_F.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    out = np.empty(svec_dim(n))
    idx = 0
    for j in range(n):
        for i in range(j + 1):
            out[idx] = M[i, j] if i == j else _SQRT2 * M[i, j]
            idx += 1
    return out


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec."""
    v = np.asarray(v, dtype=float)
    if v.size != svec_dim(n):
        raise SdpError(f"expected {svec_dim(n)} entries for dim {n}, got {v.size}")
    M = np.zeros((n, n))
    idx = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                M[i, j] = v[idx]
            else:
                M[i, j] = M[j, i] = v[idx] / _SQRT2
            idx += 1
    return M


# ---------------------------------------------------------------------------
# affine matrix expressions


@dataclass(frozen=True)
class VarSpec:
    name: str
    kind: str          # "sym" | "rect" | "scalar"
    shape: Tuple[int, int]

    @property
    def num_params(self) -> int:
        if self.kind == "sym":
            return svec_dim(self.shape[0])
        if self.kind == "rect":
            return self.shape[0] * self.shape[1]
        return 1

    def unpack(self, x: np.ndarray):
        if self.kind == "sym":
            return smat(x, self.shape[0])
        if self.kind == "rect":
            return x.reshape(self.shape)
        return float(x[0])

    def pack(self, value) -> np.ndarray:
        if self.kind == "sym":
            return svec(np.asarray(value, dtype=float))
        if self.kind == "rect":
            return np.asarray(value, dtype=float).reshape(-1)
        return np.array([float(value)])


class AffineMatrix:
    """const + sum_k x_k F_k with per-variable coefficient tensors (r, c, nv)."""

    __array_ufunc__ = None  # keep numpy from hijacking ndarray @ AffineMatrix

    def __init__(self, shape: Tuple[int, int], const: Optional[np.ndarray] = None,
                 coeffs: Optional[Dict[str, np.ndarray]] = None):
        self.shape = (int(shape[0]), int(shape[1]))
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=float)
        if self.const.shape != self.shape:
            raise SdpError(f"const shape {self.const.shape} != {self.shape}")
        self.coeffs: Dict[str, np.ndarray] = {} if coeffs is None else coeffs

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(M) -> "AffineMatrix":
        M = np.asarray(M, dtype=float)
        if M.ndim == 0:
            M = M.reshape(1, 1)
        if M.ndim == 1:
            M = M.reshape(-1, 1)
        return AffineMatrix(M.shape, const=M.copy())

    @staticmethod
    def zeros(r: int, c: int) -> "AffineMatrix":
        return AffineMatrix((r, c))

    @staticmethod
    def from_var(spec: VarSpec) -> "AffineMatrix":
        r, c = spec.shape
        nv = spec.num_params
        coeff = np.zeros((r, c, nv))
        if spec.kind == "sym":
            idx = 0
            for j in range(r):
                for i in range(j + 1):
                    if i == j:
                        coeff[i, j, idx] = 1.0
                    else:
                        coeff[i, j, idx] = coeff[j, i, idx] = 1.0 / _SQRT2
                    idx += 1
        elif spec.kind == "rect":
            for i in range(r):
                for j in range(c):
                    coeff[i, j, i * c + j] = 1.0
        else:
            coeff[0, 0, 0] = 1.0
        return AffineMatrix((r, c), coeffs={spec.name: coeff})

    # -- algebra ------------------------------------------------------------

    def _binary(self, other, sign: float) -> "AffineMatrix":
        if isinstance(other, AffineMatrix):
            if other.shape != self.shape:
                raise SdpError(f"shape mismatch {self.shape} vs {other.shape}")
            coeffs = {k: v.copy() for k, v in self.coeffs.items()}
            for k, v in other.coeffs.items():
                coeffs[k] = coeffs.get(k, 0.0) + sign * v
            return AffineMatrix(self.shape, self.const + sign * other.const, coeffs)
        other = np.asarray(other, dtype=float)
        try:
            other = np.broadcast_to(other, self.shape)
        except ValueError as exc:
            raise SdpError(f"cannot add shape {other.shape} to {self.shape}") from exc
        return self._binary(AffineMatrix.constant(other), sign)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return AffineMatrix(self.shape, -self.const, {k: -v for k, v in self.coeffs.items()})

    def __mul__(self, s):
        s = float(s)
        return AffineMatrix(self.shape, s * self.const, {k: s * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, C) -> "AffineMatrix":
        """Right-multiply by a constant matrix."""
        C = np.asarray(C, dtype=float)
        if C.ndim != 2 or C.shape[0] != self.shape[1]:
            raise SdpError(f"cannot multiply {self.shape} @ {C.shape}")
        coeffs = {k: np.einsum("ijk,jl->ilk", v, C) for k, v in self.coeffs.items()}
        return AffineMatrix((self.shape[0], C.shape[1]), self.const @ C, coeffs)

    def __rmatmul__(self, C) -> "AffineMatrix":
        """Left-multiply by a constant matrix."""
        C = np.asarray(C, dtype=float)
        if C.ndim != 2 or C.shape[1] != self.shape[0]:
            raise SdpError(f"cannot multiply {C.shape} @ {self.shape}")
        coeffs = {k: np.einsum("li,ijk->ljk", C, v) for k, v in self.coeffs.items()}
        return AffineMatrix((C.shape[0], self.shape[1]), C @ self.const, coeffs)

    @property
    def T(self) -> "AffineMatrix":
        coeffs = {k: np.transpose(v, (1, 0, 2)) for k, v in self.coeffs.items()}
        return AffineMatrix((self.shape[1], self.shape[0]), self.const.T, coeffs)

    def kron_const(self, C) -> "AffineMatrix":
        """Kronecker product (self (x) C) with a constant right factor."""
        C = np.asarray(C, dtype=float)
        if C.ndim != 2:
            raise SdpError("kron_const needs a 2-D constant")
        r, c = self.shape
        p, q = C.shape
        coeffs = {}
        for k, v in self.coeffs.items():
            out = np.zeros((r * p, c * q, v.shape[2]))
            for t in range(v.shape[2]):
                out[:, :, t] = np.kron(v[:, :, t], C)
            coeffs[k] = out
        return AffineMatrix((r * p, c * q), np.kron(self.const, C), coeffs)

    @staticmethod
    def block(rows: Sequence[Sequence["AffineMatrix | np.ndarray"]]) -> "AffineMatrix":
        """Assemble a block matrix from AffineMatrix / ndarray entries."""
        norm_rows: List[List[AffineMatrix]] = [
            [b if isinstance(b, AffineMatrix) else AffineMatrix.constant(b) for b in row]
            for row in rows
        ]
        row_heights = [row[0].shape[0] for row in norm_rows]
        col_widths = [b.shape[1] for b in norm_rows[0]]
        for row, h in zip(norm_rows, row_heights):
            if len(row) != len(col_widths):
                raise SdpError("ragged block structure")
            for b, w in zip(row, col_widths):
                if b.shape != (h, w):
                    raise SdpError(f"block shape {b.shape} != ({h}, {w})")
        R, C = sum(row_heights), sum(col_widths)
        const = np.zeros((R, C))
        names = {k for row in norm_rows for b in row for k in b.coeffs}
        sizes = {k: next(b.coeffs[k].shape[2] for row in norm_rows for b in row if k in b.coeffs)
                 for k in names}
        coeffs = {k: np.zeros((R, C, sizes[k])) for k in names}
        i0 = 0
        for row, h in zip(norm_rows, row_heights):
            j0 = 0
            for b, w in zip(row, col_widths):
                const[i0:i0 + h, j0:j0 + w] = b.const
                for k, v in b.coeffs.items():
                    coeffs[k][i0:i0 + h, j0:j0 + w, :] = v
                j0 += w
            i0 += h
        return AffineMatrix((R, C), const, coeffs)

    def trace(self) -> "AffineMatrix":
        if self.shape[0] != self.shape[1]:
            raise SdpError("trace of a non-square expression")
        const = np.array([[np.trace(self.const)]])
        coeffs = {k: np.einsum("iik->k", v).reshape(1, 1, -1) for k, v in self.coeffs.items()}
        return AffineMatrix((1, 1), const, coeffs)

    def eval(self, values: Dict[str, object], specs: Dict[str, VarSpec]) -> np.ndarray:
        """Numeric value at a variable assignment (matrices/scalars by name)."""
        out = self.const.copy()
        for name, coeff in self.coeffs.items():
            if name not in values:
                raise SdpError(f"no value supplied for variable '{name}'")
            x = specs[name].pack(values[name])
            out = out + coeff @ x
        return out


# ---------------------------------------------------------------------------
# problem container


@dataclass
class SolverSettings:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    verbose: bool = False


@dataclass
class SdpSolution:
    status: str                      # optimal | infeasible | unbounded | numerical_error
    values: Dict[str, object]
    objective: Optional[float]
    iterations: int
    residual_primal: float
    residual_dual: float
    solve_time: float
    raw_status: str = ""


class SdpProblem:
    """Named variables, affine cone constraints, linear maximize objective."""

    def __init__(self):
        self.specs: Dict[str, VarSpec] = {}
        self.psd: List[AffineMatrix] = []
        self.nonneg: List[AffineMatrix] = []
        self.soc: List[AffineMatrix] = []
        self.objective: Optional[AffineMatrix] = None

    # -- variables ----------------------------------------------------------

    def _add(self, spec: VarSpec) -> AffineMatrix:
        if spec.name in self.specs:
            raise SdpError(f"variable '{spec.name}' already declared")
        self.specs[spec.name] = spec
        return AffineMatrix.from_var(spec)

    def sym_var(self, name: str, n: int) -> AffineMatrix:
        return self._add(VarSpec(name, "sym", (n, n)))

    def rect_var(self, name: str, r: int, c: int) -> AffineMatrix:
        return self._add(VarSpec(name, "rect", (r, c)))

    def scalar_var(self, name: str) -> AffineMatrix:
        return self._add(VarSpec(name, "scalar", (1, 1)))

    # -- constraints --------------------------------------------------------

    def _check(self, expr: AffineMatrix, square: bool = True) -> AffineMatrix:
        for name in expr.coeffs:
            if name not in self.specs:
                raise SdpError(f"constraint references undeclared variable '{name}'")
        if square and expr.shape[0] != expr.shape[1]:
            raise SdpError(f"cone constraint on non-square expression {expr.shape}")
        return expr

    def constrain_psd(self, expr: AffineMatrix) -> None:
        """expr >= 0 (positive semidefinite)."""
        expr = self._check(expr)
        tol = 1e-9 * (1.0 + np.abs(expr.const).max(initial=0.0))
        if np.abs(expr.const - expr.const.T).max(initial=0.0) > tol:
            raise SdpError("PSD constraint constant part is not symmetric")
        for name, v in expr.coeffs.items():
            if np.abs(v - np.transpose(v, (1, 0, 2))).max(initial=0.0) > 1e-9 * (1 + np.abs(v).max()):
                raise SdpError(f"PSD constraint not symmetric in variable '{name}'")
        self.psd.append(expr)

    def constrain_nsd(self, expr: AffineMatrix) -> None:
        """expr <= 0 (negative semidefinite)."""
        self.constrain_psd(-expr)

    def constrain_nonneg(self, expr: AffineMatrix) -> None:
        """Scalar expr >= 0."""
        expr = self._check(expr, square=False)
        if expr.shape != (1, 1):
            raise SdpError("nonneg constraint must be scalar")
        self.nonneg.append(expr)

    def constrain_norm_le(self, expr: AffineMatrix, bound: float) -> None:
        """Second-order cone: ||vec(expr)||_2 <= bound."""
        expr = self._check(expr, square=False)
        r, c = expr.shape
        rows: List[List[AffineMatrix]] = [[AffineMatrix.constant(np.array([[float(bound)]]))]]
        for i in range(r):
            for j in range(c):
                e = np.zeros((1, r))
                e[0, i] = 1.0
                f = np.zeros((c, 1))
                f[j, 0] = 1.0
                rows.append([e @ expr @ f])
        self.soc.append(AffineMatrix.block(rows))

    def maximize(self, expr: AffineMatrix) -> None:
        expr = self._check(expr, square=False)
        if expr.shape != (1, 1):
            raise SdpError("objective must be scalar")
        self.objective = expr

    # -- assembly -----------------------------------------------------------

    def _layout(self) -> Tuple[Dict[str, int], int]:
        offsets: Dict[str, int] = {}
        total = 0
        for name, spec in self.specs.items():
            offsets[name] = total
            total += spec.num_params
        return offsets, total

    def _expr_rows(self, expr: AffineMatrix, offsets: Dict[str, int], nx: int,
                   packed: bool) -> Tuple[np.ndarray, np.ndarray]:
        """Rows (b | A) with s = b - A x equal to svec(expr) or vec(expr)."""
        if packed:
            b = svec(expr.const)
            A = np.zeros((b.size, nx))
            for name, coeff in expr.coeffs.items():
                off = offsets[name]
                for t in range(coeff.shape[2]):
                    A[:, off + t] -= svec(coeff[:, :, t])
        else:
            b = expr.const.reshape(-1)
            A = np.zeros((b.size, nx))
            for name, coeff in expr.coeffs.items():
                off = offsets[name]
                nv = coeff.shape[2]
                A[:, off:off + nv] -= coeff.reshape(-1, nv)
        return b, A

    def assemble(self):
        """Standard-form data (q, A, b, cone list) for the conic solver."""
        offsets, nx = self._layout()
        if nx == 0:
            raise SdpError("problem has no variables")
        q = np.zeros(nx)
        obj_const = 0.0
        if self.objective is not None:
            obj_const = float(self.objective.const[0, 0])
            for name, coeff in self.objective.coeffs.items():
                q[offsets[name]:offsets[name] + coeff.shape[2]] -= coeff[0, 0, :]  # minimize -obj
        blocks_b: List[np.ndarray] = []
        blocks_A: List[np.ndarray] = []
        cones: List[Tuple[str, int]] = []
        if self.nonneg:
            for expr in self.nonneg:
                b, A = self._expr_rows(expr, offsets, nx, packed=False)
                blocks_b.append(b)
                blocks_A.append(A)
            cones.append(("nonneg", len(self.nonneg)))
        for expr in self.soc:
            b, A = self._expr_rows(expr, offsets, nx, packed=False)
            blocks_b.append(b)
            blocks_A.append(A)
            cones.append(("soc", expr.shape[0]))
        for expr in self.psd:
            b, A = self._expr_rows(expr, offsets, nx, packed=True)
            blocks_b.append(b)
            blocks_A.append(A)
            cones.append(("psd", expr.shape[0]))
        if not cones:
            raise SdpError("problem has no constraints")
        return q, np.vstack(blocks_A), np.concatenate(blocks_b), cones, offsets, nx, obj_const

    def dump(self) -> str:
        """Sparse-triplet text form of the assembled problem, for cross-checks."""
        q, A, b, cones, offsets, nx, obj_const = self.assemble()
        lines = [f"variables {nx}"]
        for name, spec in self.specs.items():
            lines.append(f"var {name} {spec.kind} {spec.shape[0]} {spec.shape[1]} offset {offsets[name]}")
        lines.append("objective maximize const %.17g" % obj_const)
        for j in np.nonzero(q)[0]:
            lines.append(f"obj {j} {-q[j]:.17g}")
        row = 0
        for kind, dim in cones:
            size = dim if kind != "psd" else svec_dim(dim)
            lines.append(f"cone {kind} {dim}")
            for i in range(row, row + size):
                if b[i] != 0.0:
                    lines.append(f"b {i} {b[i]:.17g}")
                for j in np.nonzero(A[i])[0]:
                    lines.append(f"A {i} {j} {A[i, j]:.17g}")
            row += size
        return "\n".join(lines) + "\n"


def solve(problem: SdpProblem, settings: Optional[SolverSettings] = None) -> SdpSolution:
    """Solve with the conic interior-point backend; deterministic for fixed input."""
    import clarabel

    settings = settings or SolverSettings()
    q, A, b, cones, offsets, nx, obj_const = problem.assemble()

    cone_objs = []
    for kind, dim in cones:
        if kind == "nonneg":
            cone_objs.append(clarabel.NonnegativeConeT(dim))
        elif kind == "soc":
            cone_objs.append(clarabel.SecondOrderConeT(dim))
        else:
            cone_objs.append(clarabel.PSDTriangleConeT(dim))

    cfg = clarabel.DefaultSettings()
    cfg.verbose = settings.verbose
    cfg.max_iter = settings.max_iter
    cfg.tol_feas = settings.tol_feas
    cfg.tol_gap_abs = settings.tol_gap
    cfg.tol_gap_rel = settings.tol_gap

    solver = clarabel.DefaultSolver(
        sparse.csc_matrix((nx, nx)), q, sparse.csc_matrix(A), b, cone_objs, cfg)
    sol = solver.solve()

    raw = str(sol.status)
    if raw == "Solved":
        status = "optimal"
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    elif raw in ("DualInfeasible", "AlmostDualInfeasible"):
        status = "unbounded"
    else:
        status = "numerical_error"

    values: Dict[str, object] = {}
    objective = None
    if status == "optimal":
        x = np.asarray(sol.x)
        for name, spec in problem.specs.items():
            off = offsets[name]
            values[name] = spec.unpack(x[off:off + spec.num_params])
        objective = obj_const - float(np.dot(q, x))
    return SdpSolution(
        status=status, values=values, objective=objective,
        iterations=int(sol.iterations), residual_primal=float(sol.r_prim),
        residual_dual=float(sol.r_dual), solve_time=float(sol.solve_time), raw_status=raw)
