"""Dataset construction and ingestion.

Synthetic teacher-student data, random-feature ridge targets, bit-exact IDX
binary parsing for MNIST-style files, UCI CSV loading against the published
split counts, and the MNIST teacher-student construction. Nothing here ever
touches the network; dataset files come from DATA_DIR (or an explicit path)
and a fetch helper script lives under scripts/.
"""

import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import softmax

from . import backend
from .model import activation_pair
from .numerics import NotPositiveDefiniteError, solve_spd

IDX_MAGIC_IMAGES = 2051
IDX_MAGIC_LABELS = 2049

# name -> (train rows, test rows, features, classes)
UCI_TABLE = {
    "pendigits": (7494, 3498, 16, 10),
    "letter": (10500, 5000, 16, 26),
    "avila": (10430, 10437, 11, 12),
}

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class Dataset:
    X_train: np.ndarray = field(repr=False)
    y_train: np.ndarray = field(repr=False)
    X_test: np.ndarray | None = field(repr=False, default=None)
    y_test: np.ndarray | None = field(repr=False, default=None)
    name: str = ""
    n_classes: int | None = None  # None = regression
    metadata: dict = field(default_factory=dict)


@dataclass
class TeacherSpec:
    """Small target network; each row satisfies ||v_i * u_i|| = 1."""

    u_star: np.ndarray = field(repr=False)
    v_star: np.ndarray = field(repr=False)
    activation: str = "silu"

    def assert_normalized(self, tol=1e-12):
        norms = np.abs(self.v_star) * np.linalg.norm(self.u_star, axis=1)
        if not np.allclose(norms, 1.0, atol=tol, rtol=0):
            raise AssertionError(f"teacher rows not normalized: {norms}")


def sample_sphere(m, n0, rng):
    """m iid points uniform on the unit sphere in R^n0 (Gaussian, normalized)."""
    if m < 1 or n0 < 1:
        raise ValueError("m and n0 must be >= 1")
    X = rng.standard_normal((m, n0))
    norms = np.linalg.norm(X, axis=1)
    while np.any(norms < 1e-12):  # probability-zero guard
        bad = norms < 1e-12
        X[bad] = rng.standard_normal((int(bad.sum()), n0))
        norms = np.linalg.norm(X, axis=1)
    return X / norms[:, None]


def make_teacher(n_star, n0, activation, rng):
    if n_star < 1:
        raise ValueError("n_star must be >= 1")
    u = rng.standard_normal((n_star, n0))
    v = rng.standard_normal(n_star)
    prod = np.abs(v) * np.linalg.norm(u, axis=1)
    while np.any(prod < 1e-12):
        bad = prod < 1e-12
        u[bad] = rng.standard_normal((int(bad.sum()), n0))
        v[bad] = rng.standard_normal(int(bad.sum()))
        prod = np.abs(v) * np.linalg.norm(u, axis=1)
    scale = 1.0 / np.sqrt(prod)
    return TeacherSpec(u_star=u * scale[:, None], v_star=v * scale, activation=activation)


def teacher_forward(teacher, X):
    """Unscaled target outputs sum_i v*_i act(u*_i . x)."""
    act, _ = activation_pair(teacher.activation)
    return act(np.asarray(X) @ teacher.u_star.T) @ teacher.v_star


def gen_teacher_student(teacher, m_train, m_test, rng, name="teacher-student"):
    n0 = teacher.u_star.shape[1]
    X_train = sample_sphere(m_train, n0, rng)
    X_test = sample_sphere(m_test, n0, rng) if m_test else None
    return Dataset(
        X_train=X_train, y_train=teacher_forward(teacher, X_train),
        X_test=X_test, y_test=teacher_forward(teacher, X_test) if m_test else None,
        name=name, n_classes=None,
        metadata={"n_star": teacher.u_star.shape[0], "n0": n0,
                  "activation": teacher.activation},
    )


@dataclass
class RfTarget:
    """Random-feature ridge-regression target function."""

    u_inf: np.ndarray = field(repr=False)
    v_star: np.ndarray = field(repr=False)
    activation: str

    def predict(self, X):
        act, _ = activation_pair(self.activation)
        return act(np.asarray(X) @ self.u_inf.T) @ self.v_star


def rf_target(X, y, n_features, lam, activation, seed):
    """Fit v* = argmin (1/2m) sum (phi_RF(x_i; v) - y_i)^2 + (lam/2) ||v||^2.

    The inner-weight draw u_inf is fixed by the seed; the solve is the normal
    equation (Z^T Z / m + lam I) v = Z^T y / m.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    rng = np.random.default_rng(seed)
    u_inf = rng.standard_normal((n_features, X.shape[1]))
    act, _ = activation_pair(activation)
    Z = act(X @ u_inf.T)
    m = X.shape[0]
    A = Z.T @ Z / m
    A[np.diag_indices_from(A)] += lam
    try:
        v = solve_spd(A, Z.T @ y / m)
    except NotPositiveDefiniteError as err:
        raise ValueError(
            "random-feature Gram is singular at lam=0; pass lam > 0") from err
    return RfTarget(u_inf=u_inf, v_star=v, activation=activation)


def _open_maybe_gz(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic):
    with _open_maybe_gz(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX file")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != expected_magic:
        raise ValueError(f"{path}: not an IDX file (magic {magic}, expected {expected_magic})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    count = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) != count:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, header claims {count}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, n_classes=None):
    """Parse an IDX image/label file pair.

    Pixels are scaled to [0, 1]; labels come back one-hot (10 classes for
    MNIST-shaped files unless overridden).
    """
    images = _read_idx(images_path, IDX_MAGIC_IMAGES)
    labels = _read_idx(labels_path, IDX_MAGIC_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    k = n_classes if n_classes is not None else max(10, int(labels.max()) + 1)
    Y = np.zeros((labels.shape[0], k))
    Y[np.arange(labels.shape[0]), labels] = 1.0
    return X, Y, labels.astype(np.int64)


def write_idx_images(path, images):
    """Write a uint8 (N, rows, cols) array in IDX image format, bit-exact."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be (N, rows, cols)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_MAGIC_IMAGES, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_MAGIC_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


def data_dir(override=None):
    d = override or os.environ.get("DATA_DIR") or os.environ.get("GGNSCORE_DATA_DIR")
    return Path(d) if d else None


def _find_idx_file(root, stem):
    for candidate in (root / stem, root / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{stem}[.gz] not found under {root}")


def load_mnist(directory=None, name="mnist"):
    """Load the four canonical IDX files from DATA_DIR (or the given dir)."""
    root = data_dir(directory)
    if root is None:
        raise FileNotFoundError("set DATA_DIR (or pass a directory) to locate MNIST")
    Xtr, Ytr, ltr = load_idx(_find_idx_file(root, MNIST_FILES["train_images"]),
                             _find_idx_file(root, MNIST_FILES["train_labels"]))
    Xte, Yte, lte = load_idx(_find_idx_file(root, MNIST_FILES["test_images"]),
                             _find_idx_file(root, MNIST_FILES["test_labels"]))
    return Dataset(X_train=Xtr, y_train=Ytr, X_test=Xte, y_test=Yte,
                   name=name, n_classes=Ytr.shape[1],
                   metadata={"labels_train": ltr, "labels_test": lte})


def load_uci_csv(path, name, standardize=True):
    """Load pre-split UCI files <name>_train.csv / <name>_test.csv.

    Rows are comma-separated numeric features with the integer label in the
    last column; the shapes must match the published split counts exactly.
    Features are standardized with training-split statistics unless disabled.
    """
    if name not in UCI_TABLE:
        raise ValueError(f"unknown UCI dataset {name!r}; expected one of {sorted(UCI_TABLE)}")
    m_train, m_test, n_features, n_classes = UCI_TABLE[name]
    root = Path(path)
    train = np.loadtxt(root / f"{name}_train.csv", delimiter=",", ndmin=2)
    test = np.loadtxt(root / f"{name}_test.csv", delimiter=",", ndmin=2)
    for split, arr, rows in (("train", train, m_train), ("test", test, m_test)):
        if arr.shape != (rows, n_features + 1):
            raise ValueError(
                f"{name} {split} split has shape {arr.shape}, expected "
                f"({rows}, {n_features + 1}) per the published counts")
    Xtr, ltr = train[:, :-1], train[:, -1].astype(np.int64)
    Xte, lte = test[:, :-1], test[:, -1].astype(np.int64)
    for split, labels in (("train", ltr), ("test", lte)):
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError(f"{name} {split} labels outside [0, {n_classes})")
    if standardize:
        mean = Xtr.mean(axis=0)
        std = Xtr.std(axis=0)
        std[std == 0.0] = 1.0
        Xtr = (Xtr - mean) / std
        Xte = (Xte - mean) / std
    eye = np.eye(n_classes)
    return Dataset(X_train=Xtr, y_train=eye[ltr], X_test=Xte, y_test=eye[lte],
                   name=name, n_classes=n_classes,
                   metadata={"standardized": standardize,
                             "labels_train": ltr, "labels_test": lte})


def balanced_indices(labels, first_k, total, n_classes):
    """Indices of a class-balanced subset drawn in order from the first
    ``first_k`` samples; total // n_classes per class."""
    per_class = total // n_classes
    if per_class * n_classes != total:
        raise ValueError(f"total {total} is not divisible by {n_classes} classes")
    head = np.asarray(labels)[:first_k]
    picked = []
    counts = {}
    for c in range(n_classes):
        idx = np.flatnonzero(head == c)
        counts[c] = len(idx)
        picked.append(idx[:per_class])
    short = {c: n for c, n in counts.items() if n < per_class}
    if short:
        raise ValueError(
            f"classes with fewer than {per_class} occurrences among the "
            f"first {first_k} samples: {short}")
    return np.sort(np.concatenate(picked))


def _train_teacher_ce(X, labels, n_star, n_classes, rng, steps, lr):
    """Fit the small target net with full-batch GD on the cross-entropy loss.

    Inits are fan-in scaled so the plain GD budget is usable; the construction
    records the budget in the dataset metadata.
    """
    n0 = X.shape[1]
    u = rng.standard_normal((n_star, n0)) / np.sqrt(n0)
    v = rng.standard_normal((n_star, n_classes)) / np.sqrt(n_star)
    M = X.shape[0]
    onehot = np.zeros((M, n_classes))
    onehot[np.arange(M), labels] = 1.0
    for _ in range(steps):
        A = X @ u.T
        Z = backend.silu(A)
        logits = Z @ v
        probs = softmax(logits, axis=1)
        dlogits = (probs - onehot) / M
        dv = Z.T @ dlogits
        dZ = dlogits @ v.T
        dA = dZ * backend.silu_prime(A)
        du = dA.T @ X
        u -= lr * du
        v -= lr * dv
    return u, v


def mnist_teacher_student(mnist, n_star=16, seed=0, teacher_steps=2000, teacher_lr=1.0,
                          subset_first=3000, subset_total=2610):
    """Teacher-student construction on MNIST.

    The custom training inputs are the original test set plus a balanced
    subset of the first 3000 training samples; a width-n_star SiLU teacher is
    fit on them with cross-entropy, and the student targets are the softmax
    of the teacher outputs. The student is evaluated on the original test
    split.
    """
    labels_train = mnist.metadata["labels_train"]
    n_classes = mnist.n_classes
    bal = balanced_indices(labels_train, subset_first, subset_total, n_classes)
    X_custom = np.vstack([mnist.X_test, mnist.X_train[bal]])
    labels_custom = np.concatenate([mnist.metadata["labels_test"], labels_train[bal]])
    rng = np.random.default_rng(seed)
    u, v = _train_teacher_ce(X_custom, labels_custom, n_star, n_classes, rng,
                             teacher_steps, teacher_lr)
    targets = softmax(backend.silu(X_custom @ u.T) @ v, axis=1)
    ds = Dataset(
        X_train=X_custom, y_train=targets,
        X_test=mnist.X_test, y_test=mnist.y_test,
        name="mnist-teacher-student", n_classes=n_classes,
        metadata={
            "teacher_width": n_star, "teacher_steps": teacher_steps,
            "teacher_lr": teacher_lr, "subset_rule":
                f"first {subset_total // n_classes} per class among the "
                f"first {subset_first} training samples",
            "labels_test": mnist.metadata["labels_test"],
        },
    )
    return ds, (u, v)
