import pytest

from oodkit.density import ModelConfig, log_likelihood_batch, train
from oodkit.imaging import SyntheticSpec, generate_synthetic


class Criterion5Bundle:
    """The shared desk-scale experiment: the default model trained on 5000
    vertical-gradient images, plus the evaluation datasets and their
    identity log-likelihoods."""

    SHAPE = (32, 32, 1)
    CONFIG = ModelConfig(epochs=10, seed=0)  # k=4, default taps, defaults throughout

    def __init__(self):
        self.train_set = generate_synthetic(SyntheticSpec(
            "oriented-gradient", count=5000, seed=101, shape=self.SHAPE,
            orientation="vertical"))
        self.val_set = generate_synthetic(SyntheticSpec(
            "oriented-gradient", count=500, seed=102, shape=self.SHAPE,
            orientation="vertical"))
        self.id_test = generate_synthetic(SyntheticSpec(
            "oriented-gradient", count=1000, seed=103, shape=self.SHAPE,
            orientation="vertical"))
        self.ood_const = generate_synthetic(SyntheticSpec(
            "constant", count=1000, seed=104, shape=self.SHAPE))
        self.ood_noise = generate_synthetic(SyntheticSpec(
            "noise", count=500, seed=105, shape=self.SHAPE))
        self.state = train(self.CONFIG, self.train_set, self.val_set)
        self.train_lls = log_likelihood_batch(self.state, self.train_set)
        self.id_lls = log_likelihood_batch(self.state, self.id_test)
        self.const_lls = log_likelihood_batch(self.state, self.ood_const)
        self.noise_lls = log_likelihood_batch(self.state, self.ood_noise)


@pytest.fixture(scope="session")
def bundle():
    return Criterion5Bundle()


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
