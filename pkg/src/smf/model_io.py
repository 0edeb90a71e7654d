"""Model checkpoint format.

Layout: magic b"SMF1", one version byte, an 8-byte little-endian header
length, a UTF-8 JSON header (algorithm tag, env/net configs, split info, and
one entry per array giving store, name, shape, dtype), then the raw
little-endian float64 arrays concatenated in header order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import ParamStore
from .env import EnvConfig
from .errors import ModelFileError
from .nets import GaussianPolicy, NetConfig, QNet, ValueNet

MAGIC = b"SMF1"
VERSION = 1


@dataclass
class ModelBundle:
    algo: str  # "ppo" | "sac"
    env: EnvConfig
    net: NetConfig
    split: dict  # {"ratio": float, "seed": int}
    stores: dict[str, ParamStore]

    def policy(self) -> GaussianPolicy:
        return GaussianPolicy(self.net, self.stores["policy"], squash=self.algo == "sac")

    def value(self) -> ValueNet:
        return ValueNet(self.net, self.stores["value"])

    def qnet(self, name: str) -> QNet:
        return QNet(self.net, self.stores[name])


def save_model(path: str | Path, bundle: ModelBundle) -> None:
    entries = []
    blobs = []
    for store_name in sorted(bundle.stores):
        for param_name, tensor in bundle.stores[store_name].items():
            entries.append({
                "store": store_name,
                "name": param_name,
                "shape": list(tensor.data.shape),
                "dtype": "float64",
            })
            blobs.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    header = {
        "algo": bundle.algo,
        "env": asdict(bundle.env),
        "net": asdict(bundle.net),
        "split": bundle.split,
        "entries": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)
    tmp.replace(path)


def load_model(path: str | Path, expect_algo: str | None = None) -> ModelBundle:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 9:
        raise ModelFileError(f"{path}: truncated before header")
    if raw[: len(MAGIC)] != MAGIC:
        raise ModelFileError(f"{path}: bad magic {raw[:4]!r}")
    version = raw[len(MAGIC)]
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    off = len(MAGIC) + 1
    header_len = int.from_bytes(raw[off:off + 8], "little")
    off += 8
    if len(raw) < off + header_len:
        raise ModelFileError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFileError(f"{path}: corrupt header: {e}") from e
    off += header_len

    algo = header["algo"]
    if expect_algo is not None and algo != expect_algo:
        raise ModelFileError(
            f"{path}: checkpoint was trained with {algo!r}, expected {expect_algo!r}"
        )
    env = EnvConfig(**header["env"])
    net_cfg = dict(header["net"])
    for key in ("conv1", "conv2"):
        net_cfg[key] = tuple(net_cfg[key])
    net = NetConfig(**net_cfg)

    stores: dict[str, ParamStore] = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        if entry["dtype"] != "float64":
            raise ModelFileError(f"{path}: unexpected dtype {entry['dtype']}")
        nbytes = int(np.prod(shape)) * 8 if shape else 8
        if len(raw) < off + nbytes:
            raise ModelFileError(f"{path}: truncated array data for {entry['name']}")
        arr = np.frombuffer(raw[off:off + nbytes], dtype="<f8").reshape(shape)
        off += nbytes
        store = stores.setdefault(entry["store"], ParamStore())
        store.add(entry["name"], arr.copy())
    if off != len(raw):
        raise ModelFileError(f"{path}: {len(raw) - off} trailing bytes")
    return ModelBundle(algo=algo, env=env, net=net, split=header["split"], stores=stores)
