# mixgrad/cli/commands/_shared.py
from typing import Optional

from mixgrad.basis import Basis, WeightVector
from mixgrad.documents import BasisDoc, WeightsDoc, load_doc
from mixgrad.errors import ConfigError


def load_weights(path: str) -> tuple[WeightVector, Optional[Basis]]:
    doc = load_doc(WeightsDoc, path)
    return doc.to_weights(), doc.basis.to_basis() if doc.basis is not None else None


def resolve_basis(basis_path: Optional[str], *embedded: Optional[Basis]) -> Basis:
    """--basis wins; otherwise every embedded basis must agree."""
    if basis_path:
        return load_doc(BasisDoc, basis_path).to_basis()
    found = [b for b in embedded if b is not None]
    if not found:
        raise ConfigError("no basis: pass --basis or use weight files that embed one")
    if any(b != found[0] for b in found[1:]):
        raise ConfigError("weight files embed different bases; pass --basis explicitly")
    return found[0]


def parse_features(text: str, n_features: int) -> list[int]:
    """'A1,A3' or '1,3' -> binary vector; empty -> all off."""
    attrs = [0] * n_features
    for token in filter(None, (t.strip() for t in text.split(","))):
        name = token[1:] if token[:1] in ("A", "a") else token
        try:
            k = int(name)
        except ValueError:
            raise ConfigError(f"feature {token!r} is not A<k> or <k>")
        if not 1 <= k <= n_features:
            raise ConfigError(f"feature {token!r} out of range A1..A{n_features}")
        attrs[k - 1] = 1
    return attrs
