"""Find / And / Describe / Measure and the layout executor."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .layout import Layout, ModuleKind, type_check
from .tensor import Tensor

UNK_WORD = "<unk>"
DESCRIBE_EPS = 1e-8


class ParameterStore:
    """Named trainable tensors, kept in creation order.

    Values are rounded to single precision on creation so that a checkpoint
    (stored as float32) reproduces them exactly.
    """

    def __init__(self, seed: int = 0):
        self._params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self) -> list[str]:
        return list(self._params)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.asarray(value, dtype=np.float32).astype(np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def glorot(self, name: str, shape: tuple[int, ...], bias_column: bool = False) -> Tensor:
        """uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)); a trailing bias column starts at 0."""
        fan_out = shape[0] if len(shape) > 1 else 1
        fan_in = shape[-1] - (1 if bias_column else 0)
        s = np.sqrt(6.0 / (fan_in + fan_out))
        value = self.rng.uniform(-s, s, size=shape)
        if bias_column:
            value[..., -1] = 0.0
        return self.add(name, value)

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def get_or_create(self, name: str, make) -> Tensor:
        if name not in self._params:
            make()
        return self._params[name]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def snap(self) -> None:
        """Round every value to float32 precision in place."""
        for t in self._params.values():
            t.data = t.data.astype(np.float32).astype(np.float64)


# -- module parameters -----------------------------------------------------

def init_module_params(params: ParameterStore, channels: int, grid: tuple[int, int],
                       n_labels: int, measure_hidden: int = 256) -> None:
    """Create the shared Describe / Measure weights and the unknown-word Find weights."""
    h, w = grid
    add_find_word(params, UNK_WORD, channels)
    params.glorot("describe/W", (n_labels, channels))
    params.zeros("describe/b", (n_labels,))
    params.glorot("measure/W1", (measure_hidden, h * w))
    params.zeros("measure/b1", (measure_hidden,))
    params.glorot("measure/W2", (n_labels, measure_hidden))
    params.zeros("measure/b2", (n_labels,))


FIND_INIT_BIAS = 1.0


def add_find_word(params: ParameterStore, word: str, channels: int) -> Tensor:
    """[w_1..w_D, bias] in one vector, starting at w = 0, bias = 1.

    The start is uniform attention: a random start leaves relu-dead cells that
    never receive gradient.
    """
    init = np.zeros(channels + 1)
    init[-1] = FIND_INIT_BIAS
    return params.get_or_create(f"find/{word}", lambda: params.add(f"find/{word}", init))


def find_param(params: ParameterStore, word: str) -> Tensor:
    name = f"find/{word}"
    return params[name] if name in params else params[f"find/{UNK_WORD}"]


# -- forward passes ---------------------------------------------------------

def _augmented_pixels(image: np.ndarray) -> np.ndarray:
    d, h, w = image.shape
    flat = image.reshape(d, h * w).T
    return np.hstack([flat, np.ones((h * w, 1))])


def find_forward(image: np.ndarray, word: str, params: ParameterStore) -> Tensor:
    """1x1 convolution of the grid with the word's weights, then relu: an H x W map."""
    image = np.asarray(image, dtype=np.float64)
    d, h, w = image.shape
    weight = find_param(params, word)
    if weight.shape != (d + 1,):
        raise ValueError(f"find/{word}: weight expects {weight.shape[0] - 1} channels, image has {d}")
    att = T.relu(T.matvec(_augmented_pixels(image), weight))
    return T.reshape(att, (h, w))


def and_forward(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"And: attention shapes differ {a.shape} vs {b.shape}")
    return T.mul(a, b)


def attended_features(image: np.ndarray, att: Tensor) -> Tensor:
    """Attention-weighted mean of the pixel feature vectors."""
    image = np.asarray(image, dtype=np.float64)
    d, h, w = image.shape
    if att.shape != (h, w):
        raise ValueError(f"Describe: attention {att.shape} does not match grid {(h, w)}")
    flat_att = T.reshape(att, (h * w,))
    total = T.matvec(image.reshape(d, h * w), flat_att)
    mass = T.add_const(T.sum_all(flat_att), DESCRIBE_EPS)
    return T.div_scalar(total, mass)


def describe_forward(image: np.ndarray, att: Tensor, params: ParameterStore) -> Tensor:
    v = attended_features(image, att)
    return T.matvec(params["describe/W"], v, params["describe/b"])


def measure_forward(att: Tensor, params: ParameterStore) -> Tensor:
    w1 = params["measure/W1"]
    size = int(np.prod(att.shape))
    if w1.shape[1] != size:
        raise ValueError(f"trained on {w1.shape[1]} grid cells, got attention {att.shape}")
    flat = T.reshape(att, (size,))
    hidden = T.relu(T.matvec(w1, flat, params["measure/b1"]))
    return T.matvec(params["measure/W2"], hidden, params["measure/b2"])


class ModuleExecutionError(ValueError):
    pass


def assemble_and_run(layout: Layout, image: np.ndarray, params: ParameterStore,
                     checked: bool = False) -> Tensor:
    """Execute the layout bottom-up and return the root's pre-softmax label scores."""
    if not checked:
        type_check(layout)
    return _run(layout, np.asarray(image, dtype=np.float64), params, layout.kind.value)


def _run(node: Layout, image: np.ndarray, params: ParameterStore, path: str) -> Tensor:
    inputs = [_run(c, image, params, f"{path}/{i}:{c.kind.value}") for i, c in enumerate(node.children)]
    try:
        if node.kind is ModuleKind.FIND:
            return find_forward(image, node.word, params)
        if node.kind is ModuleKind.AND:
            return and_forward(*inputs)
        if node.kind is ModuleKind.DESCRIBE:
            return describe_forward(image, inputs[0], params)
        return measure_forward(inputs[0], params)
    except ValueError as e:
        if isinstance(e, ModuleExecutionError):
            raise
        raise ModuleExecutionError(f"{path}: {e}") from e
