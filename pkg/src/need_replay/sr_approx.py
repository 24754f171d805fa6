"""Linear successor-representation approximator.

Three linear maps make up the model:

* encoder  ``phi = W_f @ s``            (raw input dim D -> feature dim d)
* decoder  ``s_hat = W_g @ phi``        (d -> D)
* SR head  ``m(s, a) = U[a] @ phi``     (d -> d, one matrix per action)

The SR head is trained so that ``m(s, a)`` approaches the discounted sum of
future features, and the decoder keeps the features informative.  A need
estimate is read back out of an SR vector by projecting it onto the feature
of the state of interest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFeatureError, NumericalError, ShapeError

CHECKPOINT_FORMAT = "need_replay.linear_sr"
CHECKPOINT_VERSION = 1


@dataclass
class SRLossReport:
    """Both losses of one transition and their gradients over the trainable parameters."""

    loss_g: float
    loss_u: float
    grad_g: np.ndarray
    grad_u: np.ndarray

    @property
    def gradients(self) -> np.ndarray:
        return self.grad_g + self.grad_u

    @property
    def total(self) -> float:
        return self.loss_g + self.loss_u


class LinearApproxSR:
    """Encoder/decoder/SR-head triple with analytic gradients.

    Args:
        input_dim: Raw state dimension D.
        feature_dim: Feature dimension d.
        action_count: Number of actions (one SR-head matrix each).
        gamma: Discount used in the SR target.
        lr: Step size for :meth:`apply_gradients`.
        frozen_encoder: Keep ``W_f`` fixed (it is then excluded from the
            parameter vector and from gradients).
        rng: Generator for random initialisation.
        init_scale: Std of the Gaussian initialisation.
    """

    def __init__(self, input_dim: int, feature_dim: int = 16, action_count: int = 2,
                 gamma: float = 0.9, lr: float = 0.01, frozen_encoder: bool = False,
                 rng: np.random.Generator | None = None, init_scale: float = 0.1):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = int(input_dim)
        self.feature_dim = int(feature_dim)
        self.action_count = int(action_count)
        self.gamma = float(gamma)
        self.lr = float(lr)
        self.frozen_encoder = bool(frozen_encoder)
        D, d, A = self.input_dim, self.feature_dim, self.action_count
        self.W_f = rng.normal(0.0, init_scale, (d, D))
        self.W_g = rng.normal(0.0, init_scale, (D, d))
        self.U = rng.normal(0.0, init_scale, (A, d, d))

    @classmethod
    def one_hot(cls, state_count: int, action_count: int = 2, gamma: float = 0.9,
                lr: float = 0.1, head_init: str = "identity", **kwargs) -> "LinearApproxSR":
        """Frozen identity encoder and decoder over one-hot states (d = |S|).

        ``head_init`` is ``"identity"`` (each state initially predicts only
        itself), ``"zeros"``, or ``"random"``.
        """
        sr = cls(state_count, state_count, action_count, gamma, lr, frozen_encoder=True,
                 **kwargs)
        sr.W_f = np.eye(state_count)
        sr.W_g = np.eye(state_count)
        if head_init == "identity":
            sr.U = np.tile(np.eye(state_count), (action_count, 1, 1))
        elif head_init == "zeros":
            sr.U = np.zeros_like(sr.U)
        elif head_init != "random":
            raise ValueError(f"unknown head_init {head_init!r}")
        return sr

    # -- forward maps -------------------------------------------------------

    def _check_input(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.input_dim,):
            raise ShapeError(f"expected input of shape ({self.input_dim},), got {s.shape}")
        return s

    def encode(self, s) -> np.ndarray:
        return self.W_f @ self._check_input(s)

    def decode(self, phi) -> np.ndarray:
        return self.W_g @ phi

    def sr_head(self, phi, action: int) -> np.ndarray:
        return self.U[action] @ phi

    def sr_vector(self, s, action: int) -> np.ndarray:
        return self.sr_head(self.encode(s), action)

    # -- parameters ---------------------------------------------------------

    def _blocks(self):
        blocks = [] if self.frozen_encoder else [self.W_f]
        return blocks + [self.W_g, self.U]

    @property
    def param_count(self) -> int:
        return sum(b.size for b in self._blocks())

    def get_params(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self._blocks()])

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.param_count,):
            raise ShapeError(f"expected {self.param_count} parameters, got {flat.shape}")
        offset = 0
        for block in self._blocks():
            block[...] = flat[offset:offset + block.size].reshape(block.shape)
            offset += block.size

    def copy(self) -> "LinearApproxSR":
        other = LinearApproxSR.__new__(LinearApproxSR)
        other.__dict__.update(self.__dict__)
        other.W_f, other.W_g, other.U = self.W_f.copy(), self.W_g.copy(), self.U.copy()
        return other

    # -- learning -----------------------------------------------------------

    def bootstrap_target(self, next_state, greedy_next_action: int, terminal: bool) -> np.ndarray:
        """``gamma * m(s', a*)``, zero for terminal transitions; treated as a constant."""
        if terminal:
            return np.zeros(self.feature_dim)
        return self.gamma * self.sr_vector(next_state, greedy_next_action)

    def losses(self, state, action: int, next_state, terminal: bool,
               greedy_next_action: int) -> SRLossReport:
        """Reconstruction and SR losses of one transition, with gradients.

        The SR residual is ``phi_t + gamma * m(s', a*) - m(s, a)`` where the
        bootstrap term is held constant (semi-gradient).
        """
        s = self._check_input(state)
        if not terminal:
            self._check_input(next_state)
        target = self.bootstrap_target(next_state, greedy_next_action, terminal)

        phi = self.W_f @ s
        recon_err = s - self.W_g @ phi
        residual = phi + target - self.U[action] @ phi
        loss_g = float(recon_err @ recon_err)
        loss_u = float(residual @ residual)

        # flat layout follows _blocks(): [W_f], W_g, U
        zeros_g = np.zeros(self.W_g.size)
        zeros_U = np.zeros(self.U.size)
        grad_U = np.zeros_like(self.U)
        grad_U[action] = -2.0 * np.outer(residual, phi)
        g_parts = [-2.0 * np.outer(recon_err, phi).ravel(), zeros_U]
        u_parts = [zeros_g, grad_U.ravel()]
        if not self.frozen_encoder:
            dphi_g = -2.0 * self.W_g.T @ recon_err
            dphi_u = 2.0 * (np.eye(self.feature_dim) - self.U[action]).T @ residual
            g_parts.insert(0, np.outer(dphi_g, s).ravel())
            u_parts.insert(0, np.outer(dphi_u, s).ravel())
        return SRLossReport(loss_g, loss_u, np.concatenate(g_parts), np.concatenate(u_parts))

    def apply_gradients(self, gradients, lr: float | None = None) -> None:
        """``params <- params - lr * gradients``."""
        gradients = np.asarray(gradients, dtype=float)
        if gradients.shape != (self.param_count,):
            raise ShapeError(f"expected {self.param_count} gradient entries, got {gradients.shape}")
        if not np.all(np.isfinite(gradients)):
            raise NumericalError("non-finite SR gradient")
        lr = self.lr if lr is None else lr
        if lr == 0.0:
            return
        self.set_params(self.get_params() - lr * gradients)

    # -- checkpoints --------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "input_dim": self.input_dim,
            "feature_dim": self.feature_dim,
            "action_count": self.action_count,
            "gamma": self.gamma,
            "lr": self.lr,
            "frozen_encoder": self.frozen_encoder,
        }
        # W_f is always stored so frozen encoders round-trip as well
        params = np.concatenate([self.W_f.ravel(), self.W_g.ravel(), self.U.ravel()])
        Path(path).write_text(json.dumps({"header": header, "params": params.tolist()}))

    @classmethod
    def load(cls, path) -> "LinearApproxSR":
        payload = json.loads(Path(path).read_text())
        header = payload["header"]
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ShapeError(f"unsupported checkpoint header {header}")
        sr = cls(header["input_dim"], header["feature_dim"], header["action_count"],
                 header["gamma"], header["lr"], header["frozen_encoder"])
        params = np.asarray(payload["params"], dtype=float)
        sizes = [sr.W_f.size, sr.W_g.size, sr.U.size]
        if params.size != sum(sizes):
            raise ShapeError(f"checkpoint holds {params.size} values, expected {sum(sizes)}")
        a, b = sizes[0], sizes[0] + sizes[1]
        sr.W_f = params[:a].reshape(sr.W_f.shape)
        sr.W_g = params[a:b].reshape(sr.W_g.shape)
        sr.U = params[b:].reshape(sr.U.shape)
        return sr


def approx_losses(sr: LinearApproxSR, t, greedy_next_action: int) -> SRLossReport:
    """Losses and gradients for a :class:`~need_replay.replay_core.Transition`."""
    return sr.losses(t.state, t.action, t.next_state, t.terminal, greedy_next_action)


def approx_sgd_step(sr: LinearApproxSR, report: SRLossReport, lr: float | None = None) -> None:
    sr.apply_gradients(report.gradients, lr)


def need_projection(m, phi_target) -> float:
    """Coefficient of ``phi_target`` in ``m``: ``m . phi / |phi|^2``."""
    phi_target = np.asarray(phi_target, dtype=float)
    norm_sq = float(phi_target @ phi_target)
    if norm_sq == 0.0:
        raise DegenerateFeatureError("cannot project onto a zero feature vector")
    return float(np.asarray(m, dtype=float) @ phi_target) / norm_sq


def need_offset(needs) -> np.ndarray:
    """Shift a batch of needs up so none is negative; non-negative batches pass through."""
    needs = np.asarray(needs, dtype=float)
    return needs - min(0.0, float(needs.min()))
