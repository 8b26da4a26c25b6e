import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
GOLDEN = REPO_ROOT / "golden" / "transform_vectors.ndjson"


@pytest.fixture(scope="session")
def golden_path():
    if not GOLDEN.exists():
        pytest.skip("golden vector file not generated")
    return GOLDEN


@pytest.fixture(scope="session")
def oodkit_cli():
    exe = shutil.which("oodkit")
    if exe is None:
        pytest.skip("primary toolkit CLI not installed")

    def run(*argv, check=True):
        proc = subprocess.run([exe, *[str(a) for a in argv]],
                              capture_output=True, text=True)
        if check:
            assert proc.returncode == 0, proc.stderr
        return proc

    return run


def write_idx_dataset(path: Path, arr: np.ndarray, dataset_id: str):
    """Minimal writer for the primary's dataset directory layout."""
    import json
    import struct

    path.mkdir(parents=True, exist_ok=True)
    n, h, w, c = arr.shape
    if c == 1:
        header = struct.pack(">BBBB3I", 0, 0, 0x08, 3, n, h, w)
        payload = arr[..., 0].tobytes()
    else:
        header = struct.pack(">BBBB4I", 0, 0, 0x08, 4, n, h, w, c)
        payload = arr.tobytes()
    (path / "images.idx").write_bytes(header + payload)
    meta = {"id": dataset_id, "split": "test", "count": n,
            "height": h, "width": w, "channels": c}
    (path / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")


@pytest.fixture(scope="session")
def vae_checkpoint(tmp_path_factory):
    import torch

    from llexport.models import ConvVae, save_vae_checkpoint

    torch.manual_seed(7)
    model = ConvVae(in_channels=1, image_size=16, latent_dim=8, width=8)
    path = tmp_path_factory.mktemp("ckpt") / "vae.pt"
    save_vae_checkpoint(model, path)
    return path
