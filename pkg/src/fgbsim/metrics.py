"""Round metrics: clean accuracy, attack success rate, transferred ASR.

ACC is the unweighted mean over all clients of per-client clean test
accuracy.  ASR averages, over malicious clients, the fraction of
trigger-injected test samples the global model assigns to the target label.
TASR is the same fraction over normal clients whose test samples are
injected with the first malicious client's trigger; it only exists when
1 <= M < K.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from .errors import EmptyTestSet, NoMaliciousClients
from .graph import Graph
from .nn import ModelParams, predict


@dataclass
class EvalBundle:
    """A model input plus the sample rows to score on it."""
    task: str
    graph: Graph
    pool: Optional[sp.csr_matrix]     # graph task only
    sample_ids: np.ndarray            # node ids or batch rows
    labels: Optional[np.ndarray]      # aligned with sample_ids; None for attack sets


@dataclass
class EvalSuite:
    clean: Dict[int, EvalBundle]      # every client
    attack: Dict[int, EvalBundle]     # malicious clients, own trigger
    transfer: Dict[int, EvalBundle]   # normal clients, first attacker's trigger
    target_label: int


@dataclass
class MetricsRecord:
    round: int
    acc: float
    asr: Optional[float]
    tasr: Optional[float]
    per_client_acc: List[float]
    config_fingerprint: str


def _bundle_predictions(model: ModelParams, bundle: EvalBundle) -> np.ndarray:
    preds = predict(model, bundle.graph, bundle.task, pool=bundle.pool)
    return preds[bundle.sample_ids]


def acc(model: ModelParams, clean: Dict[int, EvalBundle]):
    """Unweighted mean of per-client clean test accuracy."""
    per_client = []
    for cid in sorted(clean):
        bundle = clean[cid]
        if bundle.sample_ids.size == 0:
            raise EmptyTestSet(f"client {cid} has no clean test samples")
        preds = _bundle_predictions(model, bundle)
        per_client.append(float(np.mean(preds == bundle.labels)))
    return float(np.mean(per_client)), per_client


def _hit_rate(model: ModelParams, bundle: EvalBundle, tau: int) -> float:
    preds = _bundle_predictions(model, bundle)
    return float(np.mean(preds == tau))


def asr(model: ModelParams, attack: Dict[int, EvalBundle], tau: int) -> float:
    """Mean over malicious clients of the target-label hit rate."""
    if not attack:
        raise NoMaliciousClients("asr needs at least one malicious client")
    rates = []
    for cid in sorted(attack):
        bundle = attack[cid]
        if bundle.sample_ids.size == 0:
            raise EmptyTestSet(f"client {cid} has no poisoned test samples")
        rates.append(_hit_rate(model, bundle, tau))
    return float(np.mean(rates))


def tasr(model: ModelParams, transfer: Dict[int, EvalBundle],
         tau: int) -> Optional[float]:
    """Hit rate over normal clients; absent (None) when none exist."""
    if not transfer:
        return None
    rates = []
    for cid in sorted(transfer):
        bundle = transfer[cid]
        if bundle.sample_ids.size == 0:
            return None
        rates.append(_hit_rate(model, bundle, tau))
    return float(np.mean(rates))


def evaluate_round(model: ModelParams, suite: EvalSuite, round_index: int,
                   fingerprint: str, with_detail: bool = False):
    """Score one global model; optionally dump raw predictions for recounts."""
    acc_value, per_client = acc(model, suite.clean)
    asr_value = asr(model, suite.attack, suite.target_label) if suite.attack \
        else None
    tasr_value = tasr(model, suite.transfer, suite.target_label) if suite.attack \
        else None
    record = MetricsRecord(round=round_index, acc=acc_value, asr=asr_value,
                           tasr=tasr_value, per_client_acc=per_client,
                           config_fingerprint=fingerprint)
    if not with_detail:
        return record
    detail = {}
    for name, group in (("clean", suite.clean), ("attack", suite.attack),
                        ("transfer", suite.transfer)):
        for cid, bundle in group.items():
            entry = detail.setdefault(int(cid), {})
            preds = _bundle_predictions(model, bundle)
            entry[f"{name}_pred"] = [int(x) for x in preds]
            if bundle.labels is not None:
                entry[f"{name}_labels"] = [int(x) for x in bundle.labels]
    return record, detail


CSV_HEADER = "round,acc,asr,tasr,seed,config_hash"


def csv_row(record: MetricsRecord, seed) -> str:
    def fmt(x):
        return "" if x is None else repr(float(x))
    return ",".join([str(record.round), fmt(record.acc), fmt(record.asr),
                     fmt(record.tasr), str(seed), record.config_fingerprint])
