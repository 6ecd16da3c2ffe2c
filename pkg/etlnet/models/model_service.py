from typing import List

from ..errors import ArgumentError
from .config import VariantName

_ABLATION_VARIANTS = [VariantName.ETLNET, VariantName.SINGLE_TCN, VariantName.DUAL_TCN, VariantName.REDUCED_FEATURE,
                      VariantName.LSTM_REPLACEMENT, VariantName.TRIPLE_TCN_BILSTM]

_COMPARISON_VARIANTS = [VariantName.ETLNET, VariantName.BILSTM3, VariantName.TCN3]


def resolve_variant(model_name: str) -> VariantName:
    try:
        return VariantName.from_val(model_name)
    except ArgumentError:
        raise ArgumentError(f"Invalid model name: {model_name}. Expected {valid_model_names()}") from None


def ablation_variants() -> List[VariantName]:
    return list(_ABLATION_VARIANTS)


def comparison_variants() -> List[VariantName]:
    return list(_COMPARISON_VARIANTS)


def valid_model_names() -> List[str]:
    return [variant.value for variant in VariantName]
