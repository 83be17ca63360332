"""
On-disk formats: pydantic JSON documents for bases, weights and networks, and
pandas-backed CSV for data, datasets, traces and experiment tables.
"""
from pathlib import Path
from typing import Literal, Optional, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from mixgrad.basis import Basis, WeightVector
from mixgrad.diffusion import Denoiser, DiffusionSchedule, LatentSpec
from mixgrad.errors import DocumentError
from mixgrad.net import Mlp

Doc = TypeVar("Doc", bound=BaseModel)


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BasisDoc(_Document):
    kind: Literal["basis"] = "basis"
    means: list[float]
    scale: float
    support_lo: float
    support_hi: float
    quad_points: int

    @classmethod
    def from_basis(cls, b: Basis) -> "BasisDoc":
        return cls(means=b.means.tolist(), scale=b.scale, support_lo=b.support_lo,
                   support_hi=b.support_hi, quad_points=b.quad_points)

    def to_basis(self) -> Basis:
        return Basis(np.asarray(self.means), self.scale, self.support_lo, self.support_hi, self.quad_points)


class WeightsDoc(_Document):
    kind: Literal["weights"] = "weights"
    weights: list[float]
    basis: Optional[BasisDoc] = None

    @classmethod
    def from_weights(cls, w: WeightVector, basis: Basis | None = None) -> "WeightsDoc":
        return cls(weights=w.weights.tolist(), basis=BasisDoc.from_basis(basis) if basis is not None else None)

    def to_weights(self) -> WeightVector:
        return WeightVector(np.asarray(self.weights))


class MlpDoc(_Document):
    kind: Literal["mlp"] = "mlp"
    layer_sizes: list[int]
    hidden_activation: Literal["relu", "tanh"]
    output_activation: Literal["sigmoid", "identity"]
    # row-major (fan_in, fan_out) per layer
    weights: list[list[list[float]]]
    biases: list[list[float]]

    @classmethod
    def from_mlp(cls, m: Mlp) -> "MlpDoc":
        return cls(layer_sizes=list(m.layer_sizes), hidden_activation=m.hidden_activation,
                   output_activation=m.output_activation,
                   weights=[w.tolist() for w in m.weights], biases=[b.tolist() for b in m.biases])

    def to_mlp(self) -> Mlp:
        weights = [np.asarray(w, dtype=float).reshape(a, b)
                   for w, a, b in zip(self.weights, self.layer_sizes[:-1], self.layer_sizes[1:])]
        return Mlp(self.layer_sizes, weights, [np.asarray(b, dtype=float) for b in self.biases],
                   self.hidden_activation, self.output_activation)


class LatentSpecDoc(_Document):
    n_features: int
    code_len: int
    component_means: tuple[float, float, float]
    component_scale: float


class DenoiserDoc(_Document):
    kind: Literal["denoiser"] = "denoiser"
    data_dim: int
    bottleneck_layer: int
    beta: list[float]
    latent: LatentSpecDoc
    mlp: MlpDoc
    head: Optional[MlpDoc] = None

    @classmethod
    def from_denoiser(cls, d: Denoiser) -> "DenoiserDoc":
        spec = d.latent_spec
        return cls(
            data_dim=d.data_dim,
            bottleneck_layer=d.bottleneck_layer,
            beta=d.schedule.beta.tolist(),
            latent=LatentSpecDoc(n_features=spec.n_features, code_len=spec.code_len,
                                 component_means=spec.component_means, component_scale=spec.component_scale),
            mlp=MlpDoc.from_mlp(d.mlp),
            head=MlpDoc.from_mlp(d.head) if d.head is not None else None,
        )

    def to_denoiser(self) -> Denoiser:
        spec = LatentSpec(n_features=self.latent.n_features, code_len=self.latent.code_len,
                          component_means=tuple(self.latent.component_means),
                          component_scale=self.latent.component_scale)
        return Denoiser(self.mlp.to_mlp(), DiffusionSchedule(np.asarray(self.beta)), spec,
                        self.data_dim, self.bottleneck_layer,
                        self.head.to_mlp() if self.head is not None else None)


# ---------- json ----------
def save_doc(doc: BaseModel, path) -> Path:
    out = Path(path)
    try:
        out.write_text(doc.model_dump_json(indent=2) + "\n")
    except OSError as e:
        raise DocumentError(f"cannot write {out}: {e.strerror or e}")
    return out


def load_doc(cls: type[Doc], path) -> Doc:
    src = Path(path)
    try:
        raw = src.read_text()
    except OSError as e:
        raise DocumentError(f"cannot read {src}: {e.strerror or e}")
    try:
        return cls.model_validate_json(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "document"
        raise DocumentError(f"{src}: {where}: {first['msg']}")


def save_mlp(m: Mlp, path) -> Path:
    return save_doc(MlpDoc.from_mlp(m), path)


def load_mlp(path) -> Mlp:
    return load_doc(MlpDoc, path).to_mlp()


def save_denoiser(d: Denoiser, path) -> Path:
    return save_doc(DenoiserDoc.from_denoiser(d), path)


def load_denoiser(path) -> Denoiser:
    return load_doc(DenoiserDoc, path).to_denoiser()


# ---------- csv ----------
def _read_csv(path, **kwargs) -> pd.DataFrame:
    # exact read-back of what to_csv wrote; the python engine has no float_precision option
    if kwargs.get("engine") != "python":
        kwargs.setdefault("float_precision", "round_trip")
    try:
        return pd.read_csv(path, **kwargs)
    except FileNotFoundError:
        raise DocumentError(f"cannot read {path}: no such file")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DocumentError(f"cannot parse {path}: {e}")


def read_samples(path) -> np.ndarray:
    """Scalar samples separated by newlines, commas or whitespace; '#' starts a comment."""
    df = _read_csv(path, header=None, sep=r"[\s,]+", engine="python", comment="#", skip_blank_lines=True,
                   dtype=str)
    raw = df.to_numpy().ravel()
    try:
        return raw[pd.notna(raw)].astype(float)
    except ValueError:
        raise DocumentError(f"{path}: non-numeric sample values")


def _to_csv(df: pd.DataFrame, path) -> Path:
    out = Path(path)
    try:
        df.to_csv(out, index=False)
    except OSError as e:
        raise DocumentError(f"cannot write {out}: {e.strerror or e}")
    return out


def write_rows(rows: list[dict], path, columns: list[str] | None = None) -> Path:
    return _to_csv(pd.DataFrame(rows, columns=columns), path)


def read_rows(path) -> pd.DataFrame:
    return _read_csv(path)


def _input_names(d: int) -> list[str]:
    if d == 1:
        return ["x"]
    if d == 2:
        return ["x", "y"]
    return [f"x{i + 1}" for i in range(d)]


def write_attribute_table(inputs, attributes, path) -> Path:
    """Input columns (x / x, y / x1..xD) followed by binary attributes A1..AK."""
    x = np.asarray(inputs, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    a = np.asarray(attributes)
    df = pd.DataFrame(x, columns=_input_names(x.shape[1]))
    for k in range(a.shape[1]):
        df[f"A{k + 1}"] = a[:, k].astype(int)
    return _to_csv(df, path)


def read_attribute_table(path) -> tuple[np.ndarray, np.ndarray]:
    df = _read_csv(path)
    attr_cols = [c for c in df.columns if str(c).startswith("A")]
    input_cols = [c for c in df.columns if c not in attr_cols]
    if not input_cols or not attr_cols or df.empty:
        raise DocumentError(f"{path}: expected input columns followed by A1..AK")
    attrs = df[attr_cols].to_numpy()
    if not np.all(np.isin(attrs, (0, 1))):
        raise DocumentError(f"{path}: attribute columns must be 0/1")
    try:
        inputs = df[input_cols].to_numpy(dtype=float)
    except ValueError:
        raise DocumentError(f"{path}: non-numeric input columns")
    return inputs, attrs.astype(int)
