"""The k-chart atlas model: encoders, decoders, chart membership, discriminators.

Chart indices are 0-based in the Python API. Files written for external tools
label charts 1..k.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import nn_core
from .manifolds import Scaling
from .nn_core import Mlp, ShapeError, forward_cache, init_mlp


@dataclass
class AtlasConfig:
    n: int
    d: int
    k: int
    encoder_kind: str = "linear"  # "linear" | "mlp"
    decoder_hidden: tuple = (16, 16)
    membership_hidden: tuple = (16,)
    membership_activation: str = "relu"  # hidden layers of the membership net
    discriminator_hidden: tuple = (16, 16)
    encoder_hidden: tuple = (16, 16)
    shared_trunk: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("decoder_hidden", "membership_hidden", "discriminator_hidden", "encoder_hidden"):
            setattr(self, name, tuple(int(h) for h in getattr(self, name)))
        if self.n < 1 or self.d < 1 or self.k < 1:
            raise ValueError(f"n, d, k must be positive (got n={self.n}, d={self.d}, k={self.k})")
        if self.d > self.n:
            raise ValueError(f"chart dimension d={self.d} exceeds ambient dimension n={self.n}")
        if self.membership_activation not in ("relu", "tanh", "sigmoid", "identity"):
            raise ValueError(f"unsupported membership_activation {self.membership_activation!r}")
        if self.encoder_kind not in ("linear", "mlp"):
            raise ValueError(f"encoder_kind must be 'linear' or 'mlp', got {self.encoder_kind!r}")
        if self.shared_trunk and self.encoder_kind != "mlp":
            raise ValueError("shared_trunk requires encoder_kind='mlp'")
        if self.shared_trunk and not self.encoder_hidden:
            raise ValueError("shared_trunk needs at least one encoder hidden layer")


class LatentPrior:
    """Uniform prior on (-1, 1)^d x {0, ..., k-1}."""

    def __init__(self, d: int, k: int):
        self.d, self.k = d, k

    def sample(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        j = rng.integers(0, self.k, size=m)
        z = rng.uniform(-1.0, 1.0, size=(m, self.d))
        return z, j


NETWORK_NAMES = ("trunk", "encoders", "decoders", "membership_net", "discriminators")


def _relus(count: int, last: str) -> list[str]:
    return ["relu"] * count + [last]


@dataclass
class AtlasModel:
    config: AtlasConfig
    encoders: Mlp  # stacked over charts
    decoders: Mlp  # stacked over charts
    membership_net: Mlp
    discriminators: Mlp  # stacked over charts
    trunk: Mlp | None = None
    scaling: Scaling | None = None

    @classmethod
    def create(cls, config: AtlasConfig, scaling: Scaling | None = None) -> "AtlasModel":
        rng = np.random.default_rng(config.seed)
        n, d, k = config.n, config.d, config.k
        stack = (k,)
        trunk = None
        feat = n
        if config.encoder_kind == "linear":
            encoders = init_mlp([n, d], ["identity"], rng, stack)
        elif config.shared_trunk:
            h = config.encoder_hidden
            trunk = init_mlp([n, *h], ["relu"] * len(h), rng)
            feat = h[-1]
            encoders = init_mlp([feat, d], ["tanh"], rng, stack)
        else:
            h = config.encoder_hidden
            encoders = init_mlp([n, *h, d], _relus(len(h), "tanh"), rng, stack)
        hd = config.decoder_hidden
        decoders = init_mlp([d, *hd, n], _relus(len(hd), "tanh"), rng, stack)
        hm = config.membership_hidden if trunk is None else ()
        membership = init_mlp([feat, *hm, k], [config.membership_activation] * len(hm) + ["softmax"], rng)
        hq = config.discriminator_hidden
        discriminators = init_mlp([d, *hq, 1], _relus(len(hq), "sigmoid"), rng, stack)
        return cls(config, encoders, decoders, membership, discriminators, trunk, scaling)

    # -- parameter bookkeeping -------------------------------------------------

    def networks(self) -> dict[str, Mlp]:
        out = {}
        for name in NETWORK_NAMES:
            net = getattr(self, name)
            if net is not None:
                out[name] = net
        return out

    def params(self, groups=None) -> list[np.ndarray]:
        nets = self.networks()
        groups = list(nets) if groups is None else [g for g in groups if g in nets]
        out = []
        for g in groups:
            out.extend(nets[g].params())
        return out

    def copy(self) -> "AtlasModel":
        return AtlasModel(
            self.config,
            self.encoders.copy(),
            self.decoders.copy(),
            self.membership_net.copy(),
            self.discriminators.copy(),
            None if self.trunk is None else self.trunk.copy(),
            self.scaling,
        )

    # -- validation helpers ---------------------------------------------------

    def _chart(self, j: int) -> int:
        if not 0 <= j < self.config.k:
            raise IndexError(f"chart index {j} out of range for k={self.config.k}")
        return int(j)

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.config.n:
            raise ShapeError(f"expected ambient points of dimension {self.config.n}, got shape {x.shape}")
        return x

    def _check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.config.d:
            raise ShapeError(f"expected latent points of dimension {self.config.d}, got shape {z.shape}")
        return z

    # -- batched evaluation (B, n) -> per-chart arrays -----------------------------

    def features(self, x: np.ndarray) -> np.ndarray:
        if self.trunk is None:
            return x
        return forward_cache(self.trunk, x)[-1][1]

    def encode_all(self, x: np.ndarray) -> np.ndarray:
        """(B, n) -> (k, B, d)."""
        return forward_cache(self.encoders, self.features(x))[-1][1]

    def decode_all(self, z: np.ndarray) -> np.ndarray:
        """(k, B, d) -> (k, B, n)."""
        return forward_cache(self.decoders, z)[-1][1]

    def discriminate_all(self, z: np.ndarray) -> np.ndarray:
        """(k, B, d) -> (k, B)."""
        return forward_cache(self.discriminators, z)[-1][1][..., 0]

    def membership_batch(self, x: np.ndarray) -> np.ndarray:
        """(B, n) -> (B, k), rows on the probability simplex."""
        return forward_cache(self.membership_net, self.features(x))[-1][1]

    # -- single-chart API ------------------------------------------------------------

    def _one(self, net: Mlp, j: int, v: np.ndarray) -> np.ndarray:
        sub = Mlp([nn_core.DenseLayer(l.weights[j], l.biases[j], l.activation) for l in net.layers])
        return nn_core.forward(sub, v)

    def encode(self, j: int, x) -> np.ndarray:
        j = self._chart(j)
        x = self._check_x(x)
        return self._one(self.encoders, j, self.features(np.atleast_2d(x)).reshape(*x.shape[:-1], -1))

    def decode(self, j: int, z) -> np.ndarray:
        return self._one(self.decoders, self._chart(j), self._check_z(z))

    def discriminate(self, j: int, z) -> np.ndarray | float:
        out = self._one(self.discriminators, self._chart(j), self._check_z(z))[..., 0]
        return float(out) if out.ndim == 0 else out

    def membership(self, x) -> np.ndarray:
        x = self._check_x(x)
        q = self.membership_batch(np.atleast_2d(x))
        return q[0] if x.ndim == 1 else q

    def reconstruct(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-chart reconstructions of (scaled) points.

        Returns ``(recon, q, err)`` with shapes ``(k, B, n)``, ``(B, k)`` and
        ``(B,)``, where ``err`` is the membership-weighted squared error.
        A single point gives ``(k, n)``, ``(k,)`` and a float.
        """
        x = self._check_x(x)
        xb = np.atleast_2d(x)
        recon = self.decode_all(self.encode_all(xb))
        q = self.membership_batch(xb)
        sq = ((recon - xb[None]) ** 2).sum(axis=-1)  # (k, B)
        err = (q * sq.T).sum(axis=1)
        if x.ndim == 1:
            return recon[:, 0], q[0], float(err[0])
        return recon, q, err

    def generate(self, seed: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``m`` points by pushing the uniform latent prior through the decoders.

        Returns ``(points, labels)``; points are mapped back through the
        stored scaling record when there is one.
        """
        if m < 0:
            raise ValueError(f"sample count must be nonnegative, got {m}")
        rng = np.random.default_rng(seed)
        z, j = LatentPrior(self.config.d, self.config.k).sample(rng, m)
        if m == 0:
            return np.zeros((0, self.config.n)), j
        zs = np.zeros((self.config.k, m, self.config.d))
        zs[j, np.arange(m)] = z
        x = self.decode_all(zs)[j, np.arange(m)]
        if self.scaling is not None:
            x = self.scaling.invert(x)
        return x, j

    # -- persistence -------------------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("chartatlas-model 1\n")
            fh.write("config " + json.dumps(asdict(self.config), sort_keys=True) + "\n")
            scaling = None if self.scaling is None else self.scaling.to_dict()
            fh.write("scaling " + json.dumps(scaling, sort_keys=True) + "\n")
            for name, net in self.networks().items():
                nn_core.write_mlp(fh, name, net)

    @classmethod
    def load(cls, path) -> "AtlasModel":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
            if not lines or lines[0].strip() != "chartatlas-model 1":
                raise ValueError("missing 'chartatlas-model 1' header")
            tag, rest = lines[1].split(" ", 1)
            if tag != "config":
                raise ValueError("missing config line")
            config = AtlasConfig(**json.loads(rest))
            tag, rest = lines[2].split(" ", 1)
            if tag != "scaling":
                raise ValueError("missing scaling line")
            raw = json.loads(rest)
            scaling = None if raw is None else Scaling.from_dict(raw)
            nets = {}
            it = iter(lines[3:])
            while True:
                try:
                    head = next(it)
                except StopIteration:
                    break
                if not head.strip():
                    continue
                count = int(head.split()[2])
                block = [head] + [next(it) for _ in range(3 * count)]
                name, net = nn_core.read_mlp(block)
                nets[name] = net
            return cls(
                config,
                nets["encoders"],
                nets["decoders"],
                nets["membership_net"],
                nets["discriminators"],
                nets.get("trunk"),
                scaling,
            )
        except (ValueError, KeyError, IndexError, StopIteration, TypeError) as exc:
            raise ValueError(f"corrupt model file {path}: {exc}") from exc
