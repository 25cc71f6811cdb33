"""Named, independent random streams derived from one experiment seed.

Each component (data sampling, masks, z, epsilon, omega, init, ...) draws from
its own Philox generator, so adding draws in one component never shifts the
numbers another component sees.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("init", "data", "mask", "z", "eps", "omega", "eval")


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Streams:
    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gens: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        gen = self._gens.get(name)
        if gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(_stream_key(name),))
            gen = np.random.Generator(np.random.Philox(ss))
            self._gens[name] = gen
        return gen

    def state(self) -> dict:
        """JSON-serialisable state of every stream touched so far."""
        out = {}
        for name in sorted(self._gens):
            st = self._gens[name].bit_generator.state
            out[name] = {
                "counter": [int(v) for v in st["state"]["counter"]],
                "key": [int(v) for v in st["state"]["key"]],
                "buffer": [int(v) for v in st["buffer"]],
                "buffer_pos": int(st["buffer_pos"]),
                "has_uint32": int(st["has_uint32"]),
                "uinteger": int(st["uinteger"]),
            }
        return out

    def load_state(self, state: dict) -> None:
        for name, st in state.items():
            gen = self[name]
            gen.bit_generator.state = {
                "bit_generator": "Philox",
                "state": {
                    "counter": np.array(st["counter"], dtype=np.uint64),
                    "key": np.array(st["key"], dtype=np.uint64),
                },
                "buffer": np.array(st["buffer"], dtype=np.uint64),
                "buffer_pos": st["buffer_pos"],
                "has_uint32": st["has_uint32"],
                "uinteger": st["uinteger"],
            }
