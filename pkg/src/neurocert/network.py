"""Feed-forward candidates for certificates and controllers.

Hidden layers compute ``z_i = act_i(W_i z_{i-1} + b_i)``; the output layer is
affine. Parameters live in float64 torch tensors so the learner can
differentiate through Lie derivatives (a gradient of a gradient).

Two structural options:

* ``positive_output_weights`` stores raw ``theta`` and uses
  ``W_out = softplus(theta) + MIN_WEIGHT``; biases are dropped so that even activations give
  ``V(0) = 0`` and ``V >= 0`` by construction.
* ``zero_at_origin`` returns ``N(x) - N(0)`` (used for controllers, k(0) = 0).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from . import expr as ex
from .expr import Expr, VectorField

ACTIVATIONS = ("poly1", "poly2", "poly4", "tanh", "tanh2", "sigmoid", "softplus")
_ALIASES = {
    "linear": "poly1",
    "identity": "poly1",
    "square": "poly2",
    "quadratic": "poly2",
    "tanh_square": "tanh2",
    "tanh_squared": "tanh2",
    "sig": "sigmoid",
    "soft": "softplus",
}
# activations with act(0) == 0
_ZERO_PRESERVING = {"poly1", "poly2", "poly4", "tanh", "tanh2"}
_EVEN = {"poly2", "poly4", "tanh2"}
MIN_WEIGHT = 1e-12


def activation_name(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
    return key


def _act_torch(name: str, z: torch.Tensor) -> torch.Tensor:
    if name == "poly1":
        return z
    if name == "poly2":
        return z * z
    if name == "poly4":
        return (z * z) ** 2
    if name == "tanh":
        return torch.tanh(z)
    if name == "tanh2":
        return torch.tanh(z) ** 2
    if name == "sigmoid":
        return torch.sigmoid(z)
    if name == "softplus":
        return torch.clamp(z, min=0.0) + torch.log1p(torch.exp(-torch.abs(z)))
    raise ValueError(name)


def _act_expr(name: str, z: Expr) -> Expr:
    if name == "poly1":
        return z
    if name == "poly2":
        return ex.power(z, 2)
    if name == "poly4":
        return ex.power(z, 4)
    if name == "tanh":
        return ex.func("tanh", z)
    if name == "tanh2":
        return ex.power(ex.func("tanh", z), 2)
    if name == "sigmoid":
        return ex.func("sigmoid", z)
    if name == "softplus":
        return ex.func("softplus", z)
    raise ValueError(name)


def _inv_softplus(y: torch.Tensor) -> torch.Tensor:
    return y + torch.log(-torch.expm1(-y))


@dataclass
class NetSpec:
    """Architecture description: hidden widths and their activations."""

    neurons: tuple = ()
    activations: tuple = ()

    def __post_init__(self):
        self.neurons = tuple(int(n) for n in self.neurons)
        acts = tuple(activation_name(a) for a in self.activations)
        if len(acts) == 1 and len(self.neurons) > 1:
            acts = acts * len(self.neurons)
        if len(acts) != len(self.neurons):
            raise ValueError("need one activation per hidden layer")
        if any(n < 1 for n in self.neurons):
            raise ValueError("layer widths must be positive")
        self.activations = acts


class Network:
    def __init__(
        self,
        input_dim: int,
        spec: NetSpec,
        output_dim: int = 1,
        positive_output_weights: bool = False,
        zero_at_origin: bool = False,
        generator: torch.Generator | None = None,
    ):
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.spec = spec
        self.positive_output_weights = positive_output_weights
        self.use_bias = not positive_output_weights
        self.weights: list[torch.Tensor] = []
        self.biases: list[torch.Tensor | None] = []
        sizes = [self.input_dim, *spec.neurons, self.output_dim]
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            W = (torch.rand(fan_out, fan_in, dtype=torch.float64, generator=generator) * 2 - 1) * bound
            self.weights.append(W)
            self.biases.append(torch.zeros(fan_out, dtype=torch.float64) if self.use_bias else None)
        if positive_output_weights:
            # raw parameter theta with W_out = softplus(theta) > 0
            self.weights[-1] = _inv_softplus(self.weights[-1].abs().clamp(min=1e-2))
        structurally_zero = not self.use_bias and all(a in _ZERO_PRESERVING for a in spec.activations)
        self.shift = zero_at_origin or (positive_output_weights and not structurally_zero)
        for p in self.parameters():
            p.requires_grad_(True)

    # ------------------------------------------------------------------
    @property
    def activations(self) -> tuple:
        return self.spec.activations

    def parameters(self) -> list[torch.Tensor]:
        return [*self.weights, *(b for b in self.biases if b is not None)]

    def layer_weights(self) -> list[torch.Tensor]:
        """Effective weight matrices (output weights after the positivity map)."""
        Ws = list(self.weights)
        if self.positive_output_weights:
            # the floor keeps entries strictly positive when softplus underflows
            Ws[-1] = torch.nn.functional.softplus(Ws[-1]) + MIN_WEIGHT
        return Ws

    def _raw(self, X: torch.Tensor) -> torch.Tensor:
        Ws = self.layer_weights()
        z = X
        for W, b, act in zip(Ws[:-1], self.biases[:-1], self.activations):
            z = z @ W.T
            if b is not None:
                z = z + b
            z = _act_torch(act, z)
        out = z @ Ws[-1].T
        if self.biases[-1] is not None:
            out = out + self.biases[-1]
        return out

    def forward_t(self, X: torch.Tensor) -> torch.Tensor:
        """Torch forward pass; ``X`` is ``(N, n)``, result ``(N, d)``."""
        out = self._raw(X)
        if self.shift:
            out = out - self._raw(torch.zeros(1, self.input_dim, dtype=X.dtype))
        return out

    def forward(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected input of dimension {self.input_dim}, got {X.shape[1]}")
        with torch.no_grad():
            out = self.forward_t(torch.as_tensor(X, dtype=torch.float64)).numpy()
        return out[0] if single else out

    __call__ = forward

    def grad_input(self, x) -> np.ndarray:
        """Gradient of a scalar network (Jacobian rows for ``d > 1``)."""
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        Xt = torch.as_tensor(np.atleast_2d(X), dtype=torch.float64).requires_grad_(True)
        out = self.forward_t(Xt)
        rows = []
        for j in range(self.output_dim):
            (g,) = torch.autograd.grad(out[:, j].sum(), Xt, retain_graph=j + 1 < self.output_dim)
            rows.append(g.detach().numpy())
        J = np.stack(rows, axis=1)  # (N, d, n)
        if self.output_dim == 1:
            J = J[:, 0, :]
        return J[0] if single else J

    def grad_params(self, loss_fn: Callable[[torch.Tensor], torch.Tensor], x) -> list[np.ndarray]:
        """Reverse-mode gradient of ``loss_fn(forward_t(x))`` w.r.t. every parameter.

        Gradients of the positive output layer are taken w.r.t. the raw
        (pre-softplus) parameter.
        """
        Xt = torch.as_tensor(np.atleast_2d(np.asarray(x, dtype=float)), dtype=torch.float64)
        loss = loss_fn(self.forward_t(Xt))
        grads = torch.autograd.grad(loss, self.parameters())
        return [g.detach().numpy().copy() for g in grads]

    # ------------------------------------------------------------------
    def clone(self) -> Network:
        other = copy.copy(self)
        other.weights = [w.detach().clone().requires_grad_(True) for w in self.weights]
        other.biases = [None if b is None else b.detach().clone().requires_grad_(True) for b in self.biases]
        return other

    def _numpy_layers(self):
        Ws = [w.detach().numpy().copy() for w in self.layer_weights()]
        bs = [None if b is None else b.detach().numpy().copy() for b in self.biases]
        return Ws, bs

    def to_symbolic(self, precision: float | None = None) -> list[Expr]:
        """Symbolic translation, one expression per output.

        Hidden neurons are shared nodes, so deeper layers reference them
        instead of copying sub-trees. With ``precision`` the coefficients are
        rounded first; the origin shift is applied after rounding, using the
        exact value of the rounded expression at 0, so ``k(0) = 0`` survives.
        """
        Ws, bs = self._numpy_layers()
        xs: list[Expr] = [ex.Var(i) for i in range(self.input_dim)]
        if all(a == "poly1" for a in self.activations):
            # purely linear: collapse to one affine map
            W_eff = np.eye(self.input_dim)
            b_eff = np.zeros(self.input_dim)
            for W, b in zip(Ws, bs):
                W_eff = W @ W_eff
                b_eff = W @ b_eff + (b if b is not None else 0.0)
            if self.shift:
                b_eff = np.zeros_like(b_eff)
            outs = [_affine(W_eff[j], b_eff[j], xs) for j in range(self.output_dim)]
            if precision is not None:
                outs = [ex.round_coefficients(o, precision) for o in outs]
            return outs
        z = xs
        for W, b, act in zip(Ws[:-1], bs[:-1], self.activations):
            z = [_act_expr(act, _affine(W[k], 0.0 if b is None else b[k], z)) for k in range(W.shape[0])]
        outs = [_affine(Ws[-1][j], 0.0 if bs[-1] is None else bs[-1][j], z) for j in range(self.output_dim)]
        if precision is not None:
            outs = ex.round_many(outs, precision)
        if self.shift:
            origin = [0.0] * self.input_dim
            outs = [ex.sub(o, ex.const(ex.eval_expr(o, origin))) for o in outs]
        return outs

    def describe(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "neurons": list(self.spec.neurons),
            "activations": list(self.activations),
            "positive_output_weights": self.positive_output_weights,
            "zero_at_origin": self.shift,
        }

    def to_dict(self) -> dict:
        """JSON-ready parameters (raw, before the positivity map)."""
        d = self.describe()
        d["weights"] = [w.detach().numpy().tolist() for w in self.weights]
        d["biases"] = [None if b is None else b.detach().numpy().tolist() for b in self.biases]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Network:
        spec = NetSpec(tuple(d["neurons"]), tuple(d["activations"]))
        net = cls(d["input_dim"], spec, d["output_dim"], positive_output_weights=d["positive_output_weights"])
        net.shift = bool(d["zero_at_origin"])
        net.weights = [torch.tensor(w, dtype=torch.float64, requires_grad=True) for w in d["weights"]]
        net.biases = [None if b is None else torch.tensor(b, dtype=torch.float64, requires_grad=True)
                      for b in d["biases"]]
        return net


def _affine(w: np.ndarray, b: float, z: Sequence[Expr]) -> Expr:
    total: Expr = ex.ZERO
    for wk, zk in zip(w, z):
        total = ex.add(total, ex.mul(ex.const(float(wk)), zk))
    return ex.add(total, ex.const(float(b)))


def close_loop(f: VectorField, controller: Network | Sequence[Expr]) -> VectorField:
    """Substitute the controller outputs for the inputs ``u_j`` of ``f``."""
    k = controller.to_symbolic() if isinstance(controller, Network) else list(controller)
    if isinstance(controller, Network):
        if controller.input_dim != f.dim_state:
            raise ValueError("controller input dimension must equal the state dimension")
        if controller.output_dim != f.dim_input:
            raise ValueError("controller output dimension must equal the number of inputs")
    elif len(k) != f.dim_input:
        raise ValueError("need one controller expression per input")
    comps = tuple(ex.substitute(c, k) for c in f.components)
    return VectorField(f.dim_state, 0, comps)


def eval_field_torch(f: VectorField, X: torch.Tensor, controller: Network | None = None) -> torch.Tensor:
    """Evaluate ``f(x, k(x))`` differentiably (gradients reach the controller)."""
    U = controller.forward_t(X) if (controller is not None and f.dim_input) else None
    cols = ex.evaluate(f.components, X, U, backend="torch")
    return torch.stack(cols, dim=1)
