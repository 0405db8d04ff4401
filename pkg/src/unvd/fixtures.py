"""Deterministic fixture generation: synthetic PNG 'collections', contract
manifests, and benchmark manifests.

The two-collection fixture mirrors the evaluation setup: 50 images from two
visually coherent families (warm palette vs cool palette), 25 each, listed
as two ERC-721 contracts whose media URLs point at the local files.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

WARM_CONTRACT = "0x" + "a" * 40
COOL_CONTRACT = "0x" + "b" * 40


def _address(i: int) -> str:
    return "0x" + f"{i:040x}"


def render_image(rng: np.random.Generator, warm: bool, size: int = 32) -> bytes:
    """A blocky random texture biased warm (red/yellow) or cool (blue/cyan)."""
    blocks = rng.integers(0, 256, size=(8, 8, 3)).astype(np.float64)
    if warm:
        blocks[:, :, 0] = blocks[:, :, 0] * 0.4 + 153  # red high
        blocks[:, :, 2] *= 0.3  # blue low
    else:
        blocks[:, :, 2] = blocks[:, :, 2] * 0.4 + 153  # blue high
        blocks[:, :, 0] *= 0.3  # red low
    px = np.kron(blocks, np.ones((size // 8, size // 8, 1)))
    img = Image.fromarray(px.astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def build_two_collection_fixture(
    fixture_dir: str | Path,
    seed: int = 0,
    per_collection: int = 25,
    size: int = 32,
) -> Path:
    """Write media/ PNGs and a manifest.ndjson with two contracts."""
    fixture_dir = Path(fixture_dir)
    media_dir = fixture_dir / "media"
    media_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for contract, warm, prefix in (
        (WARM_CONTRACT, True, "warm"),
        (COOL_CONTRACT, False, "cool"),
    ):
        lines.append(json.dumps({
            "type": "contract",
            "address": contract,
            "chain": "ethereum",
            "name": f"{prefix}-collection",
        }))
        for token_id in range(per_collection):
            png = render_image(rng, warm=warm, size=size)
            path = media_dir / f"{prefix}{token_id}.png"
            path.write_bytes(png)
            lines.append(json.dumps({
                "type": "nft",
                "contract_address": contract,
                "token_id": str(token_id),
                "media_url": path.resolve().as_uri(),
                "metadata_url": None,
            }))
    (fixture_dir / "manifest.ndjson").write_text("\n".join(lines) + "\n")
    return fixture_dir


def build_contract_enumeration_fixture(fixture_dir: str | Path, n_contracts: int) -> Path:
    """Manifest with n contracts and no tokens (pagination tests)."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps({"type": "contract", "address": _address(i + 1), "chain": "ethereum"})
        for i in range(n_contracts)
    ]
    (fixture_dir / "manifest.ndjson").write_text("\n".join(lines) + "\n")
    return fixture_dir


def build_bench_fixture(fixture_dir: str | Path, sizes: list[int]) -> Path:
    """One contract per requested token count; media URLs are dummies since
    the benchmark never fetches media."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for idx, n in enumerate(sizes):
        addr = _address(1000 + idx)
        lines.append(json.dumps({"type": "contract", "address": addr, "chain": "ethereum"}))
        for token_id in range(n):
            lines.append(json.dumps({
                "type": "nft",
                "contract_address": addr,
                "token_id": str(token_id),
                "media_url": f"file:///dev/null/{token_id}.png",
                "metadata_url": None,
            }))
    (fixture_dir / "manifest.ndjson").write_text("\n".join(lines) + "\n")
    return fixture_dir


def write_corrupt_media(fixture_dir: str | Path, contract: str, token_id: str) -> Path:
    """Replace one fixture PNG's body with garbage while keeping a valid
    PNG signature, so decode (not format sniffing) fails."""
    fixture_dir = Path(fixture_dir)
    prefix = "warm" if contract == WARM_CONTRACT else "cool"
    path = fixture_dir / "media" / f"{prefix}{token_id}.png"
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + b"\x00" * 64)
    return path
