"""Compile matrix SOS feasibility conditions into semidefinite programs.

A constraint ``S(x) is SOS`` for a symmetric polynomial matrix S (entries
affine in named decision scalars) is parameterized with Gram matrices:

    S(x) = sum_b  (v_b(x) (x) I_m)^T  G_b  (v_b(x) (x) I_m),   G_b >= 0,

where v_b is a column of basis monomials and (x) is the Kronecker product.
Matching coefficients of every product monomial at every matrix position
(upper triangle) yields one linear equality per (monomial, position) pair.
The result is a block SDP

    minimize    c^T y
    subject to  sum  w * G[p, q]  -  sum  d_j * y_j  =  beta   (per equality)
                G_b  >= 0,   y free,

with the decision scalars y (contraction-rate bound, learning gains, ...)
entering the equalities through the coefficients of S.

Each Gram entry (i*m+r, j*m+s) contributes to exactly one product monomial
m_i + m_j at exactly one position (r, s), so the equality system is always
consistent in structure; infeasibility can only come from the PSD side.

When the rows of S have very different degrees (say row 1 carries a high
degree polynomial while the rest is an identity block), the shared-basis
layout above has no strictly feasible Gram: every basis monomial of degree
>= 1 paired with an identity row is forced to zero on the diagonal, which
stalls interior-point solvers.  ``coord_bases`` assigns each matrix
coordinate its own monomial list instead,

    S(x) = V(x)^T G V(x),   V[p, r] = m_p(x) for p in row r's slice,

restoring a strictly feasible interior whenever one exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .polyalg import AffineCoeff, PolyMatrix


class BasisDeficiency(Exception):
    """The monomial basis cannot produce some monomial of S."""


# ---------------------------------------------------------------------------
# monomial bases


def monomial_basis(variables: Sequence[str], groups: Sequence[tuple]) -> list[tuple]:
    """Deterministic monomial basis as exponent tuples over ``variables``.

    ``groups`` is a list of ``(names, mode, degree)`` where mode is

    * ``"graded"``      -- total degree over the group at most ``degree``
    * ``"homogeneous"`` -- total degree over the group exactly ``degree``

    Every variable must appear in exactly one group; the basis is the cross
    product of the group bases, sorted graded-lexicographically.
    """
    variables = tuple(variables)
    seen: set = set()
    for names, _, _ in groups:
        for n in names:
            if n in seen or n not in variables:
                raise ValueError(f"bad group variable {n!r}")
            seen.add(n)
    if seen != set(variables):
        raise ValueError("groups must cover all variables")

    def group_exps(names, mode, degree):
        k = len(names)
        out = []

        def rec(prefix, remaining):
            if len(prefix) == k - 1:
                if mode == "homogeneous":
                    out.append(prefix + (remaining,))
                else:
                    for d in range(remaining + 1):
                        out.append(prefix + (d,))
                return
            for d in range(remaining + 1):
                rec(prefix + (d,), remaining - d)

        if k == 0:
            return [()]
        rec((), degree)
        return out

    partials = [(tuple(names), group_exps(tuple(names), mode, deg)) for names, mode, deg in groups]
    basis = [{}]
    for names, exps in partials:
        basis = [dict(b, **{n: e for n, e in zip(names, ex)}) for b in basis for ex in exps]
    tuples = [tuple(b.get(v, 0) for v in variables) for b in basis]
    return sorted(set(tuples), key=lambda t: (sum(t), t))


def parity_classes(basis: Sequence[tuple], var_indices: Sequence[int]) -> list[list[tuple]]:
    """Split a basis by the parity pattern of the listed variable positions.

    Monomials from different parity classes cannot share a product monomial
    with the matched polynomial when its support is parity-pure, so the Gram
    matrix decouples into one block per class with no loss of generality
    (averaging the certificate over the sign-flip group of those variables
    zeroes the cross blocks).
    """
    buckets: dict[tuple, list[tuple]] = {}
    for mono in basis:
        key = tuple(mono[i] % 2 for i in var_indices)
        buckets.setdefault(key, []).append(mono)
    return [sorted(buckets[k], key=lambda t: (sum(t), t)) for k in sorted(buckets)]


# ---------------------------------------------------------------------------
# problem containers


@dataclass
class Equality:
    """sum w*G[b][p,q]  -  sum free[j]*y_j  =  rhs  (G symmetric, p <= q)."""

    gram: list  # list of (block, p, q, weight)
    free: dict  # id -> coefficient
    rhs: float
    # provenance, for debugging and certificate checks
    monomial: tuple | None = None
    position: tuple | None = None


@dataclass
class SdpProblem:
    block_dims: list
    free_ids: tuple
    objective: dict
    equalities: list
    # metadata for certificate reconstruction (not serialized)
    bases: list | None = None
    matrix_dim: int | None = None
    variables: tuple | None = None
    coord_bases: list | None = None  # ragged layout: one monomial list per row of S

    @property
    def n_equalities(self) -> int:
        return len(self.equalities)

    def serialize(self) -> str:
        lines = ["sos-sdp 1"]
        lines.append("blocks " + " ".join(str(d) for d in self.block_dims))
        lines.append("free " + " ".join(self.free_ids))
        lines.append("objective " + " ".join(f"{k} {v!r}" for k, v in sorted(self.objective.items())))
        lines.append(f"equalities {len(self.equalities)}")
        for eq in self.equalities:
            bits = ["g", str(len(eq.gram))]
            for b, p, q, w in eq.gram:
                bits += [str(b), str(p), str(q), repr(w)]
            bits += ["f", str(len(eq.free))]
            for k in sorted(eq.free):
                bits += [k, repr(eq.free[k])]
            bits += ["r", repr(eq.rhs)]
            lines.append(" ".join(bits))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SdpProblem":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if lines[0].split() != ["sos-sdp", "1"]:
            raise ValueError("bad header")
        dims = [int(t) for t in lines[1].split()[1:]]
        free_ids = tuple(lines[2].split()[1:])
        obj_toks = lines[3].split()[1:]
        objective = {obj_toks[i]: float(obj_toks[i + 1]) for i in range(0, len(obj_toks), 2)}
        n_eq = int(lines[4].split()[1])
        eqs = []
        for ln in lines[5:5 + n_eq]:
            toks = ln.split()
            assert toks[0] == "g"
            ng = int(toks[1])
            pos = 2
            gram = []
            for _ in range(ng):
                b, p, q = int(toks[pos]), int(toks[pos + 1]), int(toks[pos + 2])
                w = float(toks[pos + 3])
                gram.append((b, p, q, w))
                pos += 4
            assert toks[pos] == "f"
            nf = int(toks[pos + 1])
            pos += 2
            free = {}
            for _ in range(nf):
                free[toks[pos]] = float(toks[pos + 1])
                pos += 2
            assert toks[pos] == "r"
            rhs = float(toks[pos + 1])
            eqs.append(Equality(gram, free, rhs))
        return cls(dims, free_ids, objective, eqs)


@dataclass
class SosCertificate:
    grams: list          # numpy arrays, one per block
    bases: list          # exponent tuples per block
    matrix_dim: int
    variables: tuple
    coord_bases: list | None = None  # ragged layout: grams[0] spans these


@dataclass
class CertificateReport:
    residual: float
    scale: float
    min_eigs: list
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"certificate {status}: residual {self.residual:.3e} "
                f"(scale {self.scale:.3e}), min eig {min(self.min_eigs):.3e}")


# ---------------------------------------------------------------------------
# compilation


def compile_sos(S: PolyMatrix, objective: Mapping[str, float],
                bases: Sequence[Sequence[tuple]] | None = None,
                nonneg: Sequence[AffineCoeff] | None = None,
                coord_bases: Sequence[Sequence[tuple]] | None = None) -> SdpProblem:
    """Compile ``S is SOS`` (plus optional scalar nonnegativity side
    constraints) into an :class:`SdpProblem` minimizing ``objective``.

    ``bases`` is a list of monomial lists, one Gram block per list; when
    omitted, a single graded basis in all variables up to half the degree of
    S is used.  ``coord_bases`` instead gives one monomial list per matrix
    coordinate, producing a single ragged Gram block whose rows enumerate
    (coordinate, monomial) pairs -- use it when row degrees are uneven.
    Raises :class:`BasisDeficiency` if some monomial of S cannot be written
    as a sum of two basis monomials at its position.
    """
    if S.rows != S.cols:
        raise ValueError("S must be square")
    if not S.is_symmetric(1e-9):
        raise ValueError("S must be symmetric")
    m = S.rows
    variables = S.variables

    # support of S (upper triangle)
    support: dict = {}
    for r in range(m):
        for s in range(r, m):
            for e, c in S[r, s].terms.items():
                support.setdefault(e, {})[(r, s)] = c

    if coord_bases is not None:
        if bases is not None:
            raise ValueError("give bases or coord_bases, not both")
        cb = [list(b) for b in coord_bases]
        if len(cb) != m:
            raise ValueError("coord_bases needs one monomial list per row of S")
        offs = [0]
        for b in cb:
            if not b:
                raise ValueError("empty coordinate basis")
            offs.append(offs[-1] + len(b))

        # producible monomials, tracked per matrix position
        prod: dict = {}  # mu -> {(r, s): {(p, q): weight}}
        for r in range(m):
            for s in range(r, m):
                for i, mi in enumerate(cb[r]):
                    for j, mj in enumerate(cb[s]):
                        mu = tuple(a + bb for a, bb in zip(mi, mj))
                        p, q = offs[r] + i, offs[s] + j
                        if p > q:
                            p, q = q, p
                        w = prod.setdefault(mu, {}).setdefault((r, s), {})
                        w[(p, q)] = w.get((p, q), 0.0) + 1.0

        for mu, pos in support.items():
            for rs in pos:
                if rs not in prod.get(mu, {}):
                    raise BasisDeficiency(
                        f"monomial {mu} at position {rs} not producible")

        equalities: list[Equality] = []
        for mu in sorted(prod, key=lambda t: (sum(t), t)):
            by_pos = support.get(mu, {})
            for (r, s), weights in sorted(prod[mu].items()):
                coeff = by_pos.get((r, s), AffineCoeff(0.0))
                scale = max(coeff.magnitude(), 1.0)
                gram = [(0, p, q, w / scale) for (p, q), w in sorted(weights.items())]
                free = {k: v / scale for k, v in coeff.terms.items()}
                equalities.append(Equality(gram, free, coeff.const / scale,
                                           monomial=mu, position=(r, s)))

        block_dims = [offs[-1]]
        bases = None
    else:
        if bases is None:
            half = (S.degree() + 1) // 2
            bases = [monomial_basis(variables, [(variables, "graded", half)])]
        bases = [list(b) for b in bases]
        cb = None

        # producible monomials
        prod = {}
        for b, basis in enumerate(bases):
            for i, mi in enumerate(basis):
                for j, mj in enumerate(basis):
                    mu = tuple(a + bb for a, bb in zip(mi, mj))
                    prod.setdefault(mu, []).append((b, i, j))

        missing = [mu for mu in support if mu not in prod]
        if missing:
            raise BasisDeficiency(f"{len(missing)} monomial(s) of S not producible, e.g. {missing[0]}")

        equalities = []
        for mu in sorted(prod, key=lambda t: (sum(t), t)):
            pairs = prod[mu]
            by_pos = support.get(mu, {})
            for r in range(m):
                for s in range(r, m):
                    weights = {}
                    for b, i, j in pairs:
                        p, q = i * m + r, j * m + s
                        if p > q:
                            p, q = q, p
                        key = (b, p, q)
                        weights[key] = weights.get(key, 0.0) + 1.0
                    coeff = by_pos.get((r, s), AffineCoeff(0.0))
                    scale = max(coeff.magnitude(), 1.0)
                    gram = [(b, p, q, w / scale) for (b, p, q), w in sorted(weights.items())]
                    free = {k: v / scale for k, v in coeff.terms.items()}
                    equalities.append(Equality(gram, free, coeff.const / scale,
                                               monomial=mu, position=(r, s)))

        block_dims = [len(b) * m for b in bases]

    free_ids = set(objective)
    for eq in equalities:
        free_ids |= set(eq.free)

    problem = SdpProblem(
        block_dims=block_dims,
        free_ids=tuple(sorted(free_ids)),
        objective=dict(objective),
        equalities=equalities,
        bases=bases,
        matrix_dim=m,
        variables=variables,
        coord_bases=cb,
    )
    if nonneg:
        for expr in nonneg:
            add_nonneg(problem, expr)
    return problem


def add_nonneg(problem: SdpProblem, expr: AffineCoeff) -> None:
    """Append the scalar constraint ``expr >= 0`` as a 1x1 PSD block."""
    b = len(problem.block_dims)
    problem.block_dims.append(1)
    problem.equalities.append(Equality([(b, 0, 0, 1.0)], dict(expr.terms), expr.const))
    if problem.bases is not None:
        problem.bases.append(None)  # placeholder: not a Gram block
    ids = set(problem.free_ids) | set(expr.terms)
    problem.free_ids = tuple(sorted(ids))


def certificate_from_grams(problem: SdpProblem, grams: Sequence[np.ndarray]) -> SosCertificate:
    if problem.matrix_dim is None:
        raise ValueError("problem lacks basis metadata")
    if problem.coord_bases is not None:
        return SosCertificate(
            grams=[np.asarray(grams[0], dtype=float)],
            bases=[],
            matrix_dim=problem.matrix_dim,
            variables=problem.variables or (),
            coord_bases=[list(b) for b in problem.coord_bases],
        )
    if problem.bases is None:
        raise ValueError("problem lacks basis metadata")
    keep = [(g, b) for g, b in zip(grams, problem.bases) if b is not None]
    return SosCertificate(
        grams=[np.asarray(g, dtype=float) for g, _ in keep],
        bases=[list(b) for _, b in keep],
        matrix_dim=problem.matrix_dim,
        variables=problem.variables or (),
    )


def check_certificate(S: PolyMatrix, assignment: Mapping[str, float],
                      cert: SosCertificate, residual_tol: float = 1e-6,
                      eig_tol: float = -1e-8) -> CertificateReport:
    """Recompute the Gram expansion and compare against S coefficientwise.

    ``assignment`` fixes all decision scalars appearing in S.  Each
    coefficient mismatch is measured relative to that coefficient's magnitude
    (the same scaling the compiled equalities use, floored at 1), so the
    verdict matches what the solver was actually asked to satisfy.  Passes
    when the worst scaled mismatch is at most ``residual_tol`` and every Gram
    block has min eigenvalue at least ``eig_tol``.
    """
    m = cert.matrix_dim
    target: dict = {}
    scales: dict = {}
    for r in range(m):
        for s in range(r, m):
            for e, c in S[r, s].terms.items():
                key = (e, r, s)
                target[key] = target.get(key, 0.0) + c.evaluate(assignment)
                scales[key] = max(scales.get(key, 1.0), c.magnitude())

    expansion: dict = {}
    if cert.coord_bases is not None:
        cb = cert.coord_bases
        offs = [0]
        for b in cb:
            offs.append(offs[-1] + len(b))
        G = cert.grams[0]
        for r in range(m):
            for s in range(r, m):
                for i, mi in enumerate(cb[r]):
                    for j, mj in enumerate(cb[s]):
                        mu = tuple(a + b for a, b in zip(mi, mj))
                        key = (mu, r, s)
                        expansion[key] = expansion.get(key, 0.0) + G[offs[r] + i, offs[s] + j]
    else:
        for G, basis in zip(cert.grams, cert.bases):
            for i, mi in enumerate(basis):
                for j, mj in enumerate(basis):
                    mu = tuple(a + b for a, b in zip(mi, mj))
                    blk = G[i * m:(i + 1) * m, j * m:(j + 1) * m]
                    for r in range(m):
                        for s in range(r, m):
                            key = (mu, r, s)
                            expansion[key] = expansion.get(key, 0.0) + blk[r, s]

    scale = max(max(scales.values(), default=1.0), 1.0)
    residual = 0.0
    for key in set(target) | set(expansion):
        err = abs(target.get(key, 0.0) - expansion.get(key, 0.0))
        residual = max(residual, err / scales.get(key, 1.0))

    min_eigs = [float(np.linalg.eigvalsh(G)[0]) for G in cert.grams]
    passed = residual <= residual_tol and min(min_eigs, default=0.0) >= eig_tol
    return CertificateReport(residual=residual, scale=scale, min_eigs=min_eigs, passed=passed)
