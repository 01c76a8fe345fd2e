"""
Dataset
Design boxes and the training datasets of the surrogates
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial.distance import pdist, squareform
from sklearn.model_selection import train_test_split

import config
from backend.exceptions import ParameterError, SurrogateError

DUPLICATE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DesignBox:
    """Axis-aligned bounds of named inputs"""

    names: Tuple[str, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ParameterError("Design box names and bounds differ in length")
        problems = {}
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
                problems[name] = (lo, hi)
        if problems:
            raise ParameterError("Design box bounds must be finite with lower < upper", problems)

    @classmethod
    def from_dict(cls, bounds: Dict[str, Sequence[float]], names: Optional[Iterable[str]] = None) -> "DesignBox":
        names = tuple(names or bounds.keys())
        missing = [name for name in names if name not in bounds]
        if missing:
            raise ParameterError("Design box lacks bounds", {"names": missing})
        return cls(names, tuple(float(bounds[n][0]) for n in names), tuple(float(bounds[n][1]) for n in names))

    @classmethod
    def default(cls, names: Iterable[str] = tuple(config.JOINT_INPUTS)) -> "DesignBox":
        return cls.from_dict(config.DESIGN_BOX, names)

    def to_dict(self) -> Dict[str, Tuple[float, float]]:
        return {name: (lo, hi) for name, lo, hi in zip(self.names, self.lower, self.upper)}

    def sub(self, names: Iterable[str]) -> "DesignBox":
        return DesignBox.from_dict(self.to_dict(), names)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    def contains(self, x: np.ndarray) -> Union[bool, np.ndarray]:
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.lower_array) & (x <= self.upper_array), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower_array) / self.widths

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lower_array + np.asarray(u, dtype=float) * self.widths

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower_array, self.upper_array)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.from_unit(rng.random((n, self.dim)))

    def corners(self) -> np.ndarray:
        return np.vstack([self.lower_array, self.upper_array])


@dataclass
class TrainingDataset:
    """
    Input/output pairs of a surrogate

    Attributes:
        inputs: n x p matrix inside the box
        outputs: n x d matrix
        input_names: Names of the p inputs
        output_names: Names of the d outputs
        box: Design box of the inputs
        provenance: Optional per-row metadata (seed, histories)
    """

    inputs: np.ndarray
    outputs: np.ndarray
    input_names: Tuple[str, ...]
    output_names: Tuple[str, ...]
    box: DesignBox
    provenance: Optional[pd.DataFrame] = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(self.inputs.shape[0], -1)
        self.input_names = tuple(self.input_names)
        self.output_names = tuple(self.output_names)
        if self.inputs.shape[1] != len(self.input_names) or self.outputs.shape[1] != len(self.output_names):
            raise SurrogateError("Dataset columns do not match their names",
                                 {"inputs": self.inputs.shape, "outputs": self.outputs.shape})
        if tuple(self.box.names) != self.input_names:
            self.box = self.box.sub(self.input_names)
        if not np.all(np.isfinite(self.inputs)) or not np.all(np.isfinite(self.outputs)):
            raise SurrogateError("Dataset has non-finite entries")
        self.check_duplicates()

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, box: Union[DesignBox, Dict] = None,
                   input_names: Sequence[str] = tuple(config.JOINT_INPUTS),
                   output_names: Sequence[str] = tuple(config.JOINT_OUTPUTS)) -> "TrainingDataset":
        if not isinstance(box, DesignBox):
            box = DesignBox.from_dict(box or config.DESIGN_BOX, input_names)
        missing = [c for c in (*input_names, *output_names) if c not in frame.columns]
        if missing:
            raise SurrogateError("Dataset frame lacks columns", {"columns": missing})
        extra = [c for c in frame.columns if c not in (*config.JOINT_INPUTS, *config.JOINT_OUTPUTS)]
        provenance = frame[extra].reset_index(drop=True) if extra else None
        return cls(frame[list(input_names)].to_numpy(), frame[list(output_names)].to_numpy(),
                   tuple(input_names), tuple(output_names), box, provenance)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.inputs, columns=self.input_names)
        frame[list(self.output_names)] = self.outputs
        if self.provenance is not None:
            frame = pd.concat([frame, self.provenance.reset_index(drop=True)], axis=1)
        return frame

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def n_outputs(self) -> int:
        return len(self.output_names)

    def select(self, input_names: Sequence[str], output_names: Sequence[str]) -> "TrainingDataset":
        """Projection onto a subset of inputs and outputs"""
        frame = self.to_frame()
        return TrainingDataset.from_frame(frame, self.box.to_dict(), input_names, output_names)

    def subset(self, index: Sequence[int]) -> "TrainingDataset":
        index = np.asarray(index, dtype=int)
        provenance = None if self.provenance is None else self.provenance.iloc[index].reset_index(drop=True)
        return TrainingDataset(self.inputs[index], self.outputs[index], self.input_names,
                               self.output_names, self.box, provenance)

    def extend(self, inputs: np.ndarray, outputs: np.ndarray) -> "TrainingDataset":
        """Union with new pairs; raises on inputs duplicating existing rows"""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
        if inputs.shape[0] == 0:
            return self
        provenance = None
        if self.provenance is not None:
            provenance = pd.concat([self.provenance, pd.DataFrame(index=range(inputs.shape[0]))],
                                   ignore_index=True)
        return TrainingDataset(np.vstack([self.inputs, inputs]), np.vstack([self.outputs, outputs]),
                               self.input_names, self.output_names, self.box, provenance)

    def duplicate_pairs(self) -> List[Tuple[int, int]]:
        if len(self) < 2:
            return []
        unit = self.box.to_unit(self.inputs)
        distance = squareform(pdist(unit, metric="chebyshev"))
        i, j = np.nonzero(np.triu(distance <= DUPLICATE_TOLERANCE, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def check_duplicates(self):
        pairs = self.duplicate_pairs()
        if pairs:
            raise SurrogateError("Duplicated input rows", {"pairs": pairs[:10]})

    def content_hash(self) -> str:
        """sha256 of the input and output matrices"""
        digest = hashlib.sha256()
        digest.update(",".join((*self.input_names, *self.output_names)).encode())
        digest.update(np.ascontiguousarray(self.inputs).tobytes())
        digest.update(np.ascontiguousarray(self.outputs).tobytes())
        return digest.hexdigest()


def train_test_split_dataset(ds: TrainingDataset, test_fraction: float = config.TEST_FRACTION,
                             seed: int = 42, stratify_on: str = "k_p",
                             strata: int = 5) -> Tuple[TrainingDataset, TrainingDataset]:
    """
    Stratified random train/test split

    Rows are stratified on quantile bins of one input so both sets span its
    range; the split falls back to plain random sampling when a bin is too
    small to stratify.
    """
    index = np.arange(len(ds))
    labels = None
    if stratify_on in ds.input_names:
        column = ds.inputs[:, ds.input_names.index(stratify_on)]
        labels = pd.qcut(column, q=strata, labels=False, duplicates="drop")
        n_test = int(np.ceil(test_fraction * len(ds)))
        if np.bincount(labels).min() < 2 or n_test < len(np.unique(labels)):
            logger.warning("Stratified split not possible; using a plain random split")
            labels = None
    train_idx, test_idx = train_test_split(index, test_size=test_fraction, random_state=seed, stratify=labels)
    logger.info(f"Split dataset into {len(train_idx)} training and {len(test_idx)} test instances")
    return ds.subset(np.sort(train_idx)), ds.subset(np.sort(test_idx))
