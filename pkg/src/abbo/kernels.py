"""Covariance functions over sequence representations and mutation sets.

Two families live here. Vector kernels (Tanimoto, Matern-5/2, squared
exponential) read a named vector field out of each input. The structure-aware
mutation kernel compares sets of substitutions through per-site probability
and distance context. Sum and product combinators compose them.

Every kernel exposes a flat, dotted hyperparameter namespace plus analytic
Gram gradients so the GP can fit by L-BFGS with exact derivatives. All
computation is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .features import StructureContext
from .sequences import AA_INDEX, MutationSet

__all__ = [
    "KernelInput",
    "Kernel",
    "TanimotoKernel",
    "Matern52Kernel",
    "SquaredExponentialKernel",
    "SumKernel",
    "ProductKernel",
    "KermutKernel",
    "hellinger",
    "tanimoto",
    "matern52",
    "squared_exponential",
    "kermut_struct",
    "kermut_params_to_original",
    "kermut_params_from_original",
]

_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelInput:
    """One data point as seen by kernels: named vectors plus optional mutations."""

    vectors: Mapping[str, np.ndarray] = field(default_factory=dict)
    mutations: MutationSet | None = None


def _stack(inputs, field_name: str | None) -> np.ndarray:
    """Stack a list of inputs (or pass through a 2-D array) into an (n, d) matrix."""
    if isinstance(inputs, np.ndarray):
        arr = np.asarray(inputs, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array of row vectors, got shape {arr.shape}")
        return arr
    rows = []
    for item in inputs:
        if isinstance(item, KernelInput):
            if field_name is None:
                raise ValueError(
                    "vector kernel has no field name; cannot read structured inputs"
                )
            if field_name not in item.vectors:
                raise ValueError(f"kernel input is missing vector field {field_name!r}")
            rows.append(np.asarray(item.vectors[field_name], dtype=float))
        else:
            rows.append(np.asarray(item, dtype=float))
    if not rows:
        raise ValueError("empty input list")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise ValueError(f"inconsistent input vector shapes: {sorted(dims)}")
    return np.stack(rows)


# ---------------------------------------------------------------------------
# hyperparameter plumbing


class Kernel:
    """Base class: dotted hyperparameter access, transforms, bounds, Gram API."""

    # per-parameter override tables; "log" is the default transform
    _TRANSFORMS: dict[str, str] = {}
    _BOUNDS: dict[str, tuple[float, float]] = {}

    def __init__(self) -> None:
        self._values: dict[str, float] = {}
        self._frozen: set[str] = set()

    # -- parameters

    def params(self) -> dict[str, float]:
        return dict(self._values)

    def set_param(self, name: str, value: float) -> None:
        if name not in self._values:
            raise KeyError(f"unknown hyperparameter {name!r}")
        value = float(value)
        kind = self.transform(name)
        if kind == "log" and value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
        if kind == "logit" and not 0.0 < value < 1.0:
            raise ValueError(f"{name} must lie strictly in (0, 1), got {value}")
        self._values[name] = value

    def frozen(self) -> set[str]:
        return set(self._frozen)

    def freeze(self, *names: str) -> "Kernel":
        for name in names:
            if name not in self.params():
                raise KeyError(f"unknown hyperparameter {name!r}")
            self._frozen.add(name)
        return self

    def free_param_names(self) -> list[str]:
        frozen = self.frozen()
        return [n for n in sorted(self.params()) if n not in frozen]

    def transform(self, name: str) -> str:
        return self._TRANSFORMS.get(name, "log")

    def bounds(self, name: str) -> tuple[float, float]:
        if name in self._BOUNDS:
            return self._BOUNDS[name]
        if self.transform(name) == "logit":
            return (1e-3, 1.0 - 1e-3)
        return (1e-6, 1e3)

    # -- Gram API

    def prepare(self, inputs):
        """Precompute hyperparameter-independent structure for a point list."""
        raise NotImplementedError

    def gram_prepared(self, prep) -> np.ndarray:
        raise NotImplementedError

    def gram_grad_prepared(self, prep) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        raise NotImplementedError

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        raise NotImplementedError

    def diag_prepared(self, prep) -> np.ndarray:
        raise NotImplementedError

    def gram(self, inputs) -> np.ndarray:
        return self.gram_prepared(self.prepare(inputs))

    def cross(self, inputs_a, inputs_b) -> np.ndarray:
        return self.cross_prepared(self.prepare(inputs_a), self.prepare(inputs_b))

    def diag(self, inputs) -> np.ndarray:
        return self.diag_prepared(self.prepare(inputs))


# ---------------------------------------------------------------------------
# vector kernels


class _VectorKernel(Kernel):
    """Shared plumbing for kernels operating on a single stacked vector field."""

    def __init__(self, field_name: str | None = None):
        super().__init__()
        self.field_name = field_name

    def prepare(self, inputs) -> np.ndarray:
        return _stack(inputs, self.field_name)


class TanimotoKernel(_VectorKernel):
    """Tanimoto similarity: variance * <u, v> / (|u|^2 + |v|^2 - <u, v>).

    Defined for any pair of real vectors that are not both zero; the
    denominator is then strictly positive. Values lie in [0, variance] for
    nonnegative inputs, and the Gram matrix is positive semi-definite for
    arbitrary real inputs.
    """

    def __init__(self, field_name: str | None = None, variance: float = 1.0):
        super().__init__(field_name)
        self._values = {"variance": 1.0}
        self.set_param("variance", variance)

    def _similarity(self, inner: np.ndarray, sq_a: np.ndarray, sq_b: np.ndarray) -> np.ndarray:
        denom = sq_a[:, None] + sq_b[None, :] - inner
        if np.any(denom <= 0):
            raise ValueError("Tanimoto undefined: a pair of zero vectors was compared")
        return inner / denom

    def gram_prepared(self, prep: np.ndarray) -> np.ndarray:
        inner = prep @ prep.T
        sq = np.einsum("ij,ij->i", prep, prep)
        return self._values["variance"] * self._similarity(inner, sq, sq)

    def gram_grad_prepared(self, prep):
        inner = prep @ prep.T
        sq = np.einsum("ij,ij->i", prep, prep)
        sim = self._similarity(inner, sq, sq)
        return self._values["variance"] * sim, {"variance": sim}

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        inner = prep_a @ prep_b.T
        sq_a = np.einsum("ij,ij->i", prep_a, prep_a)
        sq_b = np.einsum("ij,ij->i", prep_b, prep_b)
        return self._values["variance"] * self._similarity(inner, sq_a, sq_b)

    def diag_prepared(self, prep) -> np.ndarray:
        sq = np.einsum("ij,ij->i", prep, prep)
        if np.any(sq <= 0):
            raise ValueError("Tanimoto undefined for zero vectors")
        return np.full(prep.shape[0], self._values["variance"])


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = np.einsum("ij,ij->i", a, a)
    sq_b = np.einsum("ij,ij->i", b, b)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


class Matern52Kernel(_VectorKernel):
    """Matern-5/2 on Euclidean distance with a scalar lengthscale."""

    _BOUNDS = {"variance": (1e-6, 1e3), "lengthscale": (1e-3, 1e3)}

    def __init__(
        self,
        field_name: str | None = None,
        variance: float = 1.0,
        lengthscale: float = 1.0,
    ):
        super().__init__(field_name)
        self._values = {"variance": 1.0, "lengthscale": 1.0}
        self.set_param("variance", variance)
        self.set_param("lengthscale", lengthscale)

    def _eval(self, d2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        var = self._values["variance"]
        ell = self._values["lengthscale"]
        s = np.sqrt(d2) / ell
        decay = np.exp(-_SQRT5 * s)
        k = var * (1.0 + _SQRT5 * s + (5.0 / 3.0) * s**2) * decay
        dk_dell = var * (5.0 / 3.0) * s**2 * (1.0 + _SQRT5 * s) * decay / ell
        return k, dk_dell

    def gram_prepared(self, prep) -> np.ndarray:
        return self._eval(_sq_dists(prep, prep))[0]

    def gram_grad_prepared(self, prep):
        k, dk_dell = self._eval(_sq_dists(prep, prep))
        return k, {"variance": k / self._values["variance"], "lengthscale": dk_dell}

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        return self._eval(_sq_dists(prep_a, prep_b))[0]

    def diag_prepared(self, prep) -> np.ndarray:
        return np.full(prep.shape[0], self._values["variance"])


class SquaredExponentialKernel(_VectorKernel):
    """Gaussian kernel exp(-r^2 / (2 lengthscale^2)) scaled by a variance."""

    _BOUNDS = {"variance": (1e-6, 1e3), "lengthscale": (1e-3, 1e3)}

    def __init__(
        self,
        field_name: str | None = None,
        variance: float = 1.0,
        lengthscale: float = 1.0,
    ):
        super().__init__(field_name)
        self._values = {"variance": 1.0, "lengthscale": 1.0}
        self.set_param("variance", variance)
        self.set_param("lengthscale", lengthscale)

    def _eval(self, d2: np.ndarray) -> np.ndarray:
        ell = self._values["lengthscale"]
        return self._values["variance"] * np.exp(-0.5 * d2 / ell**2)

    def gram_prepared(self, prep) -> np.ndarray:
        return self._eval(_sq_dists(prep, prep))

    def gram_grad_prepared(self, prep):
        d2 = _sq_dists(prep, prep)
        k = self._eval(d2)
        ell = self._values["lengthscale"]
        return k, {"variance": k / self._values["variance"], "lengthscale": k * d2 / ell**3}

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        return self._eval(_sq_dists(prep_a, prep_b))

    def diag_prepared(self, prep) -> np.ndarray:
        return np.full(prep.shape[0], self._values["variance"])


# ---------------------------------------------------------------------------
# combinators


class _Combinator(Kernel):
    def __init__(self, children: Sequence[tuple[str, Kernel]]):
        super().__init__()
        labels = [lab for lab, _ in children]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate child labels: {labels}")
        if not children:
            raise ValueError("combinator needs at least one child kernel")
        self.children = list(children)

    def params(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for lab, child in self.children:
            for name, value in child.params().items():
                out[f"{lab}.{name}"] = value
        return out

    def _route(self, name: str) -> tuple[Kernel, str]:
        lab, _, rest = name.partition(".")
        for child_lab, child in self.children:
            if child_lab == lab and rest:
                return child, rest
        raise KeyError(f"unknown hyperparameter {name!r}")

    def set_param(self, name: str, value: float) -> None:
        child, rest = self._route(name)
        child.set_param(rest, value)

    def frozen(self) -> set[str]:
        out = set()
        for lab, child in self.children:
            out.update(f"{lab}.{n}" for n in child.frozen())
        return out

    def freeze(self, *names: str) -> "Kernel":
        for name in names:
            child, rest = self._route(name)
            child.freeze(rest)
        return self

    def transform(self, name: str) -> str:
        child, rest = self._route(name)
        return child.transform(rest)

    def bounds(self, name: str) -> tuple[float, float]:
        child, rest = self._route(name)
        return child.bounds(rest)

    def prepare(self, inputs):
        return tuple(child.prepare(inputs) for _, child in self.children)


class SumKernel(_Combinator):
    """Weighted sum of child kernels; weights are fixed and nonnegative.

    Learnable overall scales belong to the children's variance parameters, so
    the weights default to 1 and are not hyperparameters.
    """

    def __init__(
        self,
        children: Sequence[tuple[str, Kernel]],
        weights: Sequence[float] | None = None,
    ):
        super().__init__(children)
        if weights is None:
            weights = [1.0] * len(self.children)
        if len(weights) != len(self.children):
            raise ValueError("one weight per child kernel required")
        if any(w < 0 for w in weights):
            raise ValueError(f"weights must be nonnegative, got {list(weights)}")
        self.weights = [float(w) for w in weights]

    def gram_prepared(self, prep) -> np.ndarray:
        return sum(
            w * child.gram_prepared(p)
            for w, (_, child), p in zip(self.weights, self.children, prep)
        )

    def gram_grad_prepared(self, prep):
        total = None
        grads: dict[str, np.ndarray] = {}
        for w, (lab, child), p in zip(self.weights, self.children, prep):
            k, g = child.gram_grad_prepared(p)
            total = w * k if total is None else total + w * k
            for name, dk in g.items():
                grads[f"{lab}.{name}"] = w * dk
        return total, grads

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        return sum(
            w * child.cross_prepared(pa, pb)
            for w, (_, child), pa, pb in zip(self.weights, self.children, prep_a, prep_b)
        )

    def diag_prepared(self, prep) -> np.ndarray:
        return sum(
            w * child.diag_prepared(p)
            for w, (_, child), p in zip(self.weights, self.children, prep)
        )


class ProductKernel(_Combinator):
    """Elementwise product of child kernels."""

    def gram_prepared(self, prep) -> np.ndarray:
        out = None
        for (_, child), p in zip(self.children, prep):
            k = child.gram_prepared(p)
            out = k if out is None else out * k
        return out

    def gram_grad_prepared(self, prep):
        ks: list[np.ndarray] = []
        gs: list[dict[str, np.ndarray]] = []
        for (_, child), p in zip(self.children, prep):
            k, g = child.gram_grad_prepared(p)
            ks.append(k)
            gs.append(g)
        total = ks[0].copy()
        for k in ks[1:]:
            total *= k
        grads: dict[str, np.ndarray] = {}
        for i, ((lab, _), g) in enumerate(zip(self.children, gs)):
            rest = None
            for j, k in enumerate(ks):
                if j == i:
                    continue
                rest = k if rest is None else rest * k
            if rest is None:
                rest = np.ones_like(ks[i])
            for name, dk in g.items():
                grads[f"{lab}.{name}"] = rest * dk
        return total, grads

    def cross_prepared(self, prep_a, prep_b) -> np.ndarray:
        out = None
        for (_, child), pa, pb in zip(self.children, prep_a, prep_b):
            k = child.cross_prepared(pa, pb)
            out = k if out is None else out * k
        return out

    def diag_prepared(self, prep) -> np.ndarray:
        out = None
        for (_, child), p in zip(self.children, prep):
            d = child.diag_prepared(p)
            out = d if out is None else out * d
        return out


# ---------------------------------------------------------------------------
# structure-aware mutation kernel


def hellinger(p: np.ndarray, q: np.ndarray) -> float:
    """Hellinger distance between two probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(np.linalg.norm(np.sqrt(p) - np.sqrt(q)) / np.sqrt(2.0))


def _hellinger_matrix(site_probs: np.ndarray) -> np.ndarray:
    s = np.sqrt(site_probs)
    deltas = s[:, None, :] - s[None, :, :]
    return np.sqrt(np.sum(deltas**2, axis=-1)) / np.sqrt(2.0)


@dataclass
class _KermutPrepared:
    seq_prep: object
    n: int
    positions: np.ndarray  # (E,) site index of every mutation entry
    sub_probs: np.ndarray  # (E,) context probability of each substituted residue
    incidence: np.ndarray  # (n, E) 0/1 ownership matrix
    hh: np.ndarray  # (E, E) Hellinger distances between entry sites
    pp: np.ndarray  # (E, E) |p_i(a) - p_j(b)| between entry substitution probs
    dd: np.ndarray  # (E, E) structural distances between entry sites


class KermutKernel(Kernel):
    """Structure-aware mutation-set kernel blended with a sequence kernel.

    k(x, x') = variance * (mix * k_struct + (1 - mix) * k_seq), with the
    sequence kernel pinned to unit variance so the overall scale is owned by
    `variance` alone. The structural part sums, over all pairs of one mutation
    from each set, a product of three exponentials: Hellinger distance between
    the two sites' probability vectors, absolute difference of the substituted
    residues' probabilities, and structural distance between the sites. It is
    0 whenever either mutation set is empty.
    """

    _TRANSFORMS = {"mix": "logit"}
    _BOUNDS = {
        "variance": (1e-6, 1e3),
        "gamma_h": (1e-3, 1e3),
        "gamma_p": (1e-3, 1e3),
        "gamma_d": (1e-3, 1e3),
    }

    def __init__(
        self,
        context: StructureContext,
        seq_kernel: Kernel,
        *,
        variance: float = 1.0,
        mix: float = 0.5,
        gamma_h: float = 1.0,
        gamma_p: float = 1.0,
        gamma_d: float = 1.0,
    ):
        super().__init__()
        self.context = context
        self.seq_kernel = seq_kernel
        if "variance" in seq_kernel.params():
            seq_kernel.set_param("variance", 1.0)
            seq_kernel.freeze("variance")
        self._values = {
            "variance": 1.0,
            "mix": 0.5,
            "gamma_h": 1.0,
            "gamma_p": 1.0,
            "gamma_d": 1.0,
        }
        for name, value in (
            ("variance", variance),
            ("mix", mix),
            ("gamma_h", gamma_h),
            ("gamma_p", gamma_p),
            ("gamma_d", gamma_d),
        ):
            self.set_param(name, value)
        self._hmat = _hellinger_matrix(context.site_probs)

    # child params ride along under a "seq." prefix

    def params(self) -> dict[str, float]:
        out = dict(self._values)
        for name, value in self.seq_kernel.params().items():
            out[f"seq.{name}"] = value
        return out

    def set_param(self, name: str, value: float) -> None:
        if name.startswith("seq."):
            self.seq_kernel.set_param(name[4:], value)
        else:
            super().set_param(name, value)

    def frozen(self) -> set[str]:
        out = set(self._frozen)
        out.update(f"seq.{n}" for n in self.seq_kernel.frozen())
        return out

    def freeze(self, *names: str) -> "Kernel":
        for name in names:
            if name.startswith("seq."):
                self.seq_kernel.freeze(name[4:])
            else:
                super().freeze(name)
        return self

    def transform(self, name: str) -> str:
        if name.startswith("seq."):
            return self.seq_kernel.transform(name[4:])
        return super().transform(name)

    def bounds(self, name: str) -> tuple[float, float]:
        if name.startswith("seq."):
            return self.seq_kernel.bounds(name[4:])
        return super().bounds(name)

    # -- preparation

    def _entries(self, inputs) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        positions: list[int] = []
        sub_probs: list[float] = []
        owners: list[int] = []
        n = 0
        parental: str | None = None
        for i, item in enumerate(inputs):
            if not isinstance(item, KernelInput) or item.mutations is None:
                raise ValueError(
                    "structure-aware kernel needs KernelInput objects with mutation sets"
                )
            mset = item.mutations
            if parental is None:
                parental = mset.parental
                if len(parental) != self.context.length:
                    raise ValueError(
                        f"parental length {len(parental)} != context length "
                        f"{self.context.length}"
                    )
            elif mset.parental != parental:
                raise ValueError("all mutation sets must share one parental sequence")
            for mut in mset.entries:
                positions.append(mut.position)
                sub_probs.append(
                    self.context.site_probs[mut.position, AA_INDEX[mut.to_residue]]
                )
                owners.append(i)
            n = i + 1
        pos = np.asarray(positions, dtype=int)
        probs = np.asarray(sub_probs, dtype=float)
        incidence = np.zeros((n, len(positions)))
        if len(positions):
            incidence[np.asarray(owners, dtype=int), np.arange(len(positions))] = 1.0
        return pos, probs, incidence, n

    def prepare(self, inputs) -> _KermutPrepared:
        pos, probs, incidence, n = self._entries(inputs)
        return _KermutPrepared(
            seq_prep=self.seq_kernel.prepare(inputs),
            n=n,
            positions=pos,
            sub_probs=probs,
            incidence=incidence,
            hh=self._hmat[np.ix_(pos, pos)],
            pp=np.abs(probs[:, None] - probs[None, :]),
            dd=self.context.distances[np.ix_(pos, pos)],
        )

    def _entry_kernel(self, hh, pp, dd) -> np.ndarray:
        v = self._values
        return np.exp(-v["gamma_h"] * hh - v["gamma_p"] * pp - v["gamma_d"] * dd)

    def gram_prepared(self, prep: _KermutPrepared) -> np.ndarray:
        v = self._values
        t = self._entry_kernel(prep.hh, prep.pp, prep.dd)
        k_struct = prep.incidence @ t @ prep.incidence.T
        k_seq = self.seq_kernel.gram_prepared(prep.seq_prep)
        return v["variance"] * (v["mix"] * k_struct + (1.0 - v["mix"]) * k_seq)

    def gram_grad_prepared(self, prep: _KermutPrepared):
        v = self._values
        t = self._entry_kernel(prep.hh, prep.pp, prep.dd)
        c = prep.incidence
        k_struct = c @ t @ c.T
        k_seq, seq_grads = self.seq_kernel.gram_grad_prepared(prep.seq_prep)
        k = v["variance"] * (v["mix"] * k_struct + (1.0 - v["mix"]) * k_seq)
        grads = {
            "variance": v["mix"] * k_struct + (1.0 - v["mix"]) * k_seq,
            "mix": v["variance"] * (k_struct - k_seq),
            "gamma_h": -v["variance"] * v["mix"] * (c @ (prep.hh * t) @ c.T),
            "gamma_p": -v["variance"] * v["mix"] * (c @ (prep.pp * t) @ c.T),
            "gamma_d": -v["variance"] * v["mix"] * (c @ (prep.dd * t) @ c.T),
        }
        scale = v["variance"] * (1.0 - v["mix"])
        for name, dk in seq_grads.items():
            grads[f"seq.{name}"] = scale * dk
        return k, grads

    def cross_prepared(self, prep_a: _KermutPrepared, prep_b: _KermutPrepared) -> np.ndarray:
        v = self._values
        hh = self._hmat[np.ix_(prep_a.positions, prep_b.positions)]
        pp = np.abs(prep_a.sub_probs[:, None] - prep_b.sub_probs[None, :])
        dd = self.context.distances[np.ix_(prep_a.positions, prep_b.positions)]
        t = self._entry_kernel(hh, pp, dd)
        k_struct = prep_a.incidence @ t @ prep_b.incidence.T
        k_seq = self.seq_kernel.cross_prepared(prep_a.seq_prep, prep_b.seq_prep)
        return v["variance"] * (v["mix"] * k_struct + (1.0 - v["mix"]) * k_seq)

    def diag_prepared(self, prep: _KermutPrepared) -> np.ndarray:
        v = self._values
        t = self._entry_kernel(prep.hh, prep.pp, prep.dd)
        struct_diag = np.einsum("ie,ef,if->i", prep.incidence, t, prep.incidence)
        seq_diag = self.seq_kernel.diag_prepared(prep.seq_prep)
        return v["variance"] * (v["mix"] * struct_diag + (1.0 - v["mix"]) * seq_diag)


# ---------------------------------------------------------------------------
# scalar conveniences and the mix reparameterization


def tanimoto(u: np.ndarray, v: np.ndarray, variance: float = 1.0) -> float:
    """Scalar Tanimoto similarity between two vectors."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    inner = float(u @ v)
    denom = float(u @ u) + float(v @ v) - inner
    if denom <= 0:
        raise ValueError("Tanimoto undefined: both vectors are zero")
    return variance * inner / denom


def matern52(
    u: np.ndarray, v: np.ndarray, lengthscale: float = 1.0, variance: float = 1.0
) -> float:
    """Scalar Matern-5/2 kernel value between two vectors."""
    if lengthscale <= 0:
        raise ValueError(f"lengthscale must be positive, got {lengthscale}")
    r = np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
    s = r / lengthscale
    return float(variance * (1.0 + _SQRT5 * s + (5.0 / 3.0) * s**2) * np.exp(-_SQRT5 * s))


def squared_exponential(
    u: np.ndarray, v: np.ndarray, lengthscale: float = 1.0, variance: float = 1.0
) -> float:
    """Scalar squared-exponential kernel value between two vectors."""
    if lengthscale <= 0:
        raise ValueError(f"lengthscale must be positive, got {lengthscale}")
    r2 = float(np.sum((np.asarray(u, dtype=float) - np.asarray(v, dtype=float)) ** 2))
    return float(variance * np.exp(-0.5 * r2 / lengthscale**2))


def kermut_struct(
    a: MutationSet,
    b: MutationSet,
    context: StructureContext,
    *,
    gamma_h: float = 1.0,
    gamma_p: float = 1.0,
    gamma_d: float = 1.0,
    lam: float = 1.0,
) -> float:
    """Structural term between two mutation sets, written as the plain double sum.

    The vectorized Gram path in `KermutKernel` must agree with this to float
    precision; keeping the readable form around makes that easy to check.
    """
    if a.parental != b.parental:
        raise ValueError("mutation sets compare against different parental sequences")
    if len(a.parental) != context.length:
        raise ValueError(
            f"parental length {len(a.parental)} != context length {context.length}"
        )
    total = 0.0
    for ma in a.entries:
        p_a = context.site_probs[ma.position]
        prob_a = p_a[AA_INDEX[ma.to_residue]]
        for mb in b.entries:
            p_b = context.site_probs[mb.position]
            prob_b = p_b[AA_INDEX[mb.to_residue]]
            k_sites = np.exp(-gamma_h * hellinger(p_a, p_b))
            k_probs = np.exp(-gamma_p * abs(prob_a - prob_b))
            k_dist = np.exp(-gamma_d * context.distances[ma.position, mb.position])
            total += lam * k_sites * k_probs * k_dist
    return float(total)


def kermut_params_to_original(variance: float, mix: float) -> tuple[float, float]:
    """Map (variance, mix) from the factored form to the unfactored one.

    Factored:   k = variance * (mix * k_struct + (1 - mix) * k_seq)
    Unfactored: k = variance' * mix' * k_struct + (1 - mix') * k_seq

    The map exists only when variance * (1 - mix) lies in (0, 1).
    """
    if variance <= 0 or not 0.0 < mix < 1.0:
        raise ValueError("need variance > 0 and mix strictly in (0, 1)")
    tail = variance * (1.0 - mix)
    if not 0.0 < tail < 1.0:
        raise ValueError(
            f"no unfactored equivalent: variance * (1 - mix) = {tail} is outside (0, 1)"
        )
    mix_orig = 1.0 - tail
    return variance * mix / mix_orig, mix_orig


def kermut_params_from_original(variance: float, mix: float) -> tuple[float, float]:
    """Inverse of `kermut_params_to_original`; defined for all valid inputs."""
    if variance <= 0 or not 0.0 < mix < 1.0:
        raise ValueError("need variance > 0 and mix strictly in (0, 1)")
    var_new = variance * mix + 1.0 - mix
    return var_new, variance * mix / var_new
