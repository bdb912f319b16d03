import numpy as np
import pytest
import torch
from PIL import Image
from transformers import ViTConfig, ViTImageProcessor, ViTModel


@pytest.fixture(scope="session")
def tiny_vit(tmp_path_factory):
    """A locally-created tiny ViT checkpoint; loads via the same
    from_pretrained path as a hub name (the sandbox has no hub access)."""
    path = tmp_path_factory.mktemp("tiny-vit")
    config = ViTConfig(hidden_size=8, num_hidden_layers=2, num_attention_heads=2,
                       intermediate_size=16, image_size=16, patch_size=8,
                       num_channels=3)
    torch.manual_seed(0)
    model = ViTModel(config)
    model.save_pretrained(path)
    processor = ViTImageProcessor(do_resize=True, size={"height": 16, "width": 16})
    processor.save_pretrained(path)
    return str(path)


def write_images(directory, n, seed=0, prefix="stim"):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        arr = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
        path = directory / f"{prefix}{i:05d}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths


@pytest.fixture()
def image_dir(tmp_path):
    write_images(tmp_path / "imgs", 5, seed=1)
    return tmp_path / "imgs"
