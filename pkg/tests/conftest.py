import time
from dataclasses import dataclass

import numpy as np
import pytest
import torch

from semawarp.losses import LossConfig
from semawarp.nets import ModelSpec
from semawarp.toydata import ToySpec, generate_toy_dataset
from semawarp.train import TrainSchedule, train_retrieval, train_shape_transformer

# The toy training gate configuration: 64x64, 200 identities, 2000 generator
# steps, fixed seed. Shared by the acceptance suite and the model-dependent
# example tests so the expensive run happens once per session.
TOY_SEED = 7
TRAIN_SEED = 0
GATE_STEPS = 2000


def gate_dataset():
    return generate_toy_dataset(ToySpec(size=64, identity_count=200), seed=TOY_SEED)


def gate_schedule(**overrides):
    base = dict(batch_size=32, lr_initial=1e-3, epochs_flat=400, epochs_decay=0,
                max_generator_steps=GATE_STEPS, seed=TRAIN_SEED)
    base.update(overrides)
    return TrainSchedule(**base)


@dataclass
class TrainedShape:
    dataset: object
    result: object
    duration_s: float


@pytest.fixture(scope="session")
def toy_dataset():
    return gate_dataset()


@pytest.fixture(scope="session")
def trained_shape(toy_dataset) -> TrainedShape:
    """The toy-gate training run (the slow fixture of the suite)."""
    start = time.time()
    result = train_shape_transformer(toy_dataset, gate_schedule(), LossConfig())
    return TrainedShape(dataset=toy_dataset, result=result,
                        duration_s=time.time() - start)


@pytest.fixture(scope="session")
def retrieval_setup():
    """Retrieval model trained on 150 identities; 50 held out for recall."""
    dataset = generate_toy_dataset(
        ToySpec(size=64, identity_count=200, samples_per_identity=1), seed=TOY_SEED + 1)
    train_ids = set(range(150))
    from dataclasses import replace
    train_data = replace(dataset, samples=[s for s in dataset.samples
                                           if s.identity in train_ids])
    held_data = replace(dataset, samples=[s for s in dataset.samples
                                          if s.identity not in train_ids])
    schedule = TrainSchedule(batch_size=16, lr_initial=1e-3, epochs_flat=60,
                             epochs_decay=60, max_generator_steps=900, seed=TRAIN_SEED)
    spec = ModelSpec(in_channels=dataset.num_categories, height=64, width=64)
    result = train_retrieval(train_data, schedule, LossConfig(), model_spec=spec)
    return {"model": result.model, "train": train_data, "held": held_data,
            "dataset": dataset, "result": result}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(99)
