"""Person-level and joint-level depth regression networks and their readouts.

Both networks read a score matrix as a 1D signal along the depth axis with
one channel per joint: input (B, D, J) is transposed to (B, J, D) before the
first convolution. Outputs are softmax-normalized along depth, so every
readout is a convex combination of plane depths.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.config import RunConfig
from src.models import ArgmaxMode, DepthDistribution, DepthPlaneSet, ScoreMatrix
from src.nn import functional as F
from src.nn.checkpoint import CheckpointError, load_checkpoint, read_manifest, save_checkpoint
from src.nn.layers import Conv1d, ConvBlock, Module, Residual
from src.nn.tensor import Operand, ShapeError, Tensor, as_tensor, no_grad


logger = logging.getLogger(__name__)


def _as_batch(scores: Union[ScoreMatrix, np.ndarray], num_joints: int) -> Tensor:
    """(D, J) or (B, D, J) scores as a (B, J, D) network input."""
    values = scores.values if isinstance(scores, ScoreMatrix) else np.asarray(scores, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3 or values.shape[2] != num_joints:
        raise ShapeError(f"expected scores shaped (D, {num_joints}), got {values.shape[-2:]}")
    return Tensor(np.ascontiguousarray(values.transpose(0, 2, 1)))


class PersonDepthNet(Module):
    """Scores (B, J, D) to a depth distribution (B, D) over absolute planes.

    Conv-k stem (J -> hidden), residual blocks of two Conv-k/BN/ReLU layers,
    Conv-1 head (hidden -> 1), softmax over depth.
    """

    def __init__(
        self,
        num_joints: int,
        hidden: int = 64,
        blocks: int = 2,
        kernel: int = 3,
        rng: Optional[np.random.Generator] = None,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ) -> None:
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.num_joints = num_joints
        bn = {"bn_momentum": bn_momentum, "bn_eps": bn_eps}
        self.stem = ConvBlock(num_joints, hidden, kernel, rng=rng, **bn)
        self.blocks = [
            Residual([ConvBlock(hidden, hidden, kernel, rng=rng, **bn) for _ in range(2)])
            for _ in range(blocks)
        ]
        self.head = Conv1d(hidden, 1, 1, rng=rng)

    def hyperparameters(self) -> Dict[str, Any]:
        return {"num_joints": self.num_joints, "blocks": len(self.blocks)}

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        for block in self.blocks:
            h = block(h)
        logits = self.head(h)
        return logits.reshape(logits.shape[0], logits.shape[2]).softmax(axis=-1)


class JointDepthNet(Module):
    """Relative scores (B, J, D_rel) to per-joint distributions (B, J, D_rel).

    Conv-k stem, one residual Conv-k/BN/ReLU block per dilation, Conv-1 head
    back to J channels, softmax along depth for every joint.
    """

    def __init__(
        self,
        num_joints: int,
        hidden: int = 64,
        dilations: Tuple[int, ...] = (1, 2, 4, 8),
        kernel: int = 3,
        rng: Optional[np.random.Generator] = None,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ) -> None:
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.num_joints = num_joints
        bn = {"bn_momentum": bn_momentum, "bn_eps": bn_eps}
        self.stem = ConvBlock(num_joints, hidden, kernel, rng=rng, **bn)
        self.blocks = [
            Residual([ConvBlock(hidden, hidden, kernel, dilation=d, rng=rng, **bn)])
            for d in dilations
        ]
        self.head = Conv1d(hidden, num_joints, 1, rng=rng)

    def hyperparameters(self) -> Dict[str, Any]:
        return {"num_joints": self.num_joints, "dilations": [b.blocks[0].conv.dilation for b in self.blocks]}

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        for block in self.blocks:
            h = block(h)
        return self.head(h).softmax(axis=-1)


def person_net_forward(net: PersonDepthNet, scores: ScoreMatrix) -> DepthDistribution:
    """Depth distribution over the absolute planes for one target pose."""
    with no_grad():
        probs = net(_as_batch(scores, net.num_joints)).data[0]
    return DepthDistribution(probs=probs, planes=scores.planes)


def joint_net_forward(net: JointDepthNet, scores: ScoreMatrix) -> DepthDistribution:
    """D_rel x J matrix; each joint's column is a distribution over relative planes."""
    with no_grad():
        probs = net(_as_batch(scores, net.num_joints)).data[0]
    return DepthDistribution(probs=probs.T, planes=scores.planes)


def _depth_last(
    dist: Union[DepthDistribution, np.ndarray], planes: Union[DepthPlaneSet, np.ndarray, None]
) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(dist, DepthDistribution):
        probs = np.moveaxis(dist.probs, 0, -1)
        planes = dist.planes if planes is None else planes
    else:
        probs = np.asarray(dist, dtype=np.float64)
    if planes is None:
        raise ValueError("depth planes are required for a bare probability array")
    depths = planes.depths if isinstance(planes, DepthPlaneSet) else np.asarray(planes, dtype=np.float64)
    if probs.shape[-1] != depths.shape[0]:
        raise ShapeError(f"{probs.shape[-1]} probabilities for {depths.shape[0]} planes")
    return probs, depths


def soft_argmax(
    dist: Union[DepthDistribution, np.ndarray],
    planes: Union[DepthPlaneSet, np.ndarray, None] = None,
) -> Union[float, np.ndarray]:
    """Expected depth. Bare arrays carry depth on their last axis."""
    probs, depths = _depth_last(dist, planes)
    out = (probs * depths).sum(axis=-1) / probs.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def local_soft_argmax(
    dist: Union[DepthDistribution, np.ndarray],
    planes: Union[DepthPlaneSet, np.ndarray, None] = None,
    window: int = 16,
) -> Union[float, np.ndarray]:
    """Mass-weighted mean depth inside the highest-mass window of `window` planes.

    Ties between windows go to the lowest start index. A window holding no
    mass reads out as the mean depth of its planes.
    """
    probs, depths = _depth_last(dist, planes)
    mask = F.window_mask(F.window_starts(probs, window), window, depths.shape[0])
    mass = (probs * mask).sum(axis=-1)
    weighted = (probs * mask * depths).sum(axis=-1)
    fallback = (mask * depths).sum(axis=-1) / window
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mass > 0.0, weighted / np.where(mass > 0.0, mass, 1.0), fallback)
    return float(out) if out.ndim == 0 else out


def person_loss(pred: Operand, target: Operand) -> Tensor:
    """Summed absolute error of person-level depths."""
    return F.l1_loss(as_tensor(pred), target)


def joint_loss(pred: Operand, target: Operand) -> Tensor:
    """Summed absolute error of per-joint relative depths over poses and joints."""
    return F.l1_loss(as_tensor(pred), target)


def absolute_joint_depths(person_depth: Any, relative: Any) -> np.ndarray:
    """Per-joint absolute depth: person depth plus each joint's relative depth.

    Accepts a scalar with a (J,) vector, or a (B,) batch with a (B, J) matrix.
    """
    d = np.asarray(person_depth, dtype=np.float64)
    rel = np.asarray(relative, dtype=np.float64)
    return d[..., None] + rel


class DepthRegressor:
    """The two networks together with the plane sets and readout settings."""

    def __init__(self, config: RunConfig, num_joints: int) -> None:
        self.num_joints = num_joints
        rng = np.random.default_rng(config.seed)
        pn, jn = config.person_net, config.joint_net
        self.person_net = PersonDepthNet(
            num_joints, pn.hidden, pn.blocks, pn.kernel, rng, config.bn_momentum, config.bn_eps
        )
        self.joint_net = JointDepthNet(
            num_joints, jn.hidden, jn.dilations, jn.kernel, rng, config.bn_momentum, config.bn_eps
        )
        self._apply_config(config)

    def _apply_config(self, config: RunConfig) -> None:
        self.config = config
        self.planes = config.sweep.planes
        self.rel_planes = config.sweep.rel_planes
        self.window = config.person_net.window
        self.argmax = config.person_net.argmax

    @property
    def modules(self) -> Dict[str, Module]:
        return {"person": self.person_net, "joint": self.joint_net}

    def parameters(self) -> Dict[str, Tensor]:
        return {
            f"{root}.{name}": p
            for root, module in self.modules.items()
            for name, p in module.parameters().items()
        }

    def train(self, mode: bool = True) -> "DepthRegressor":
        for module in self.modules.values():
            module.train(mode)
        return self

    def eval(self) -> "DepthRegressor":
        return self.train(False)

    def person_depths(
        self, scores: np.ndarray, starts: Optional[np.ndarray] = None
    ) -> Tuple[Tensor, Tensor]:
        """Person depths (B,) and distributions (B, D) for (B, D, J) scores."""
        probs = self.person_net(_as_batch(scores, self.num_joints))
        if self.argmax is ArgmaxMode.STANDARD:
            return F.soft_argmax(probs, self.planes.depths), probs
        return F.local_soft_argmax(probs, self.planes.depths, self.window, starts), probs

    def relative_depths(self, rel_scores: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Relative joint depths (B, J) and distributions (B, J, D_rel)."""
        probs = self.joint_net(_as_batch(rel_scores, self.num_joints))
        return F.soft_argmax(probs, self.rel_planes.depths, axis=-1), probs

    def losses(
        self,
        scores: np.ndarray,
        rel_scores: np.ndarray,
        person_target: np.ndarray,
        rel_target: np.ndarray,
    ) -> Tuple[Tensor, Tensor, Tensor]:
        """(total, person loss, joint loss) for one batch; the joint stage is anchored at the targets."""
        d_hat, _ = self.person_depths(scores)
        rel_hat, _ = self.relative_depths(rel_scores)
        lp = person_loss(d_hat, person_target)
        lj = joint_loss(rel_hat, rel_target)
        return lp + lj * self.config.joint_loss_weight, lp, lj

    def predict_person_depths(self, scores: np.ndarray) -> np.ndarray:
        self.eval()
        with no_grad():
            return self.person_depths(scores)[0].numpy()

    def predict_relative_depths(self, rel_scores: np.ndarray) -> np.ndarray:
        self.eval()
        with no_grad():
            return self.relative_depths(rel_scores)[0].numpy()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by qualified name."""
        out = {name: p.data.copy() for name, p in self.parameters().items()}
        for root, module in self.modules.items():
            out.update({f"{root}.{n}": b.copy() for n, b in module.buffers().items()})
        return out

    def load_state_arrays(self, state: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for root, module in self.modules.items():
            for n, b in module.buffers().items():
                b[...] = state[f"{root}.{n}"]
        for name, p in params.items():
            p.data[...] = state[name]

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> None:
        info = {"config": self.config.model_dump(mode="json"), "num_joints": self.num_joints}
        info.update(meta or {})
        save_checkpoint(path, self.modules, self.config.config_hash(), info)

    @classmethod
    def load(cls, path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> "DepthRegressor":
        """Rebuild the networks from the config stored in a checkpoint and load its arrays.

        `overrides` may change non-architectural keys such as the fusion threshold.
        A damaged or foreign manifest raises CheckpointError; invalid overrides
        raise pydantic's ValidationError.
        """
        manifest = read_manifest(path)
        try:
            meta = manifest["meta"]
            config = RunConfig.model_validate(meta["config"])
            num_joints = int(meta["num_joints"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"{path}: unusable run metadata ({e})") from e
        regressor = cls(config, num_joints)
        load_checkpoint(path, regressor.modules)
        if overrides:
            regressor._apply_config(config.with_overrides(overrides))
        logger.info("Loaded networks from %s (config %s)", path, manifest.get("config_hash"))
        return regressor
