"""Federated round protocol: broadcast, local training, FedAvg, scheduling.

Malicious clients are clients 0..M-1.  While the attack is inactive they
train the clean objective; once active they train the two-term poisoned
objective: cross-entropy on trigger-injected victims labeled with the
target, plus cross-entropy on the untouched remainder with true labels.
All training inputs are static across rounds, so each client's clean and
poisoned views are prepared once up front.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .backdoor import PoisonPlan, TriggerGraph, inject_graph_level, inject_node_level
from .errors import EmptyUpdateSet, ShapeMismatch
from .graph import Graph
from .metrics import EvalBundle, EvalSuite, MetricsRecord, evaluate_round
from .nn import (
    Gradients,
    ModelParams,
    OptimizerSpec,
    OptState,
    init_opt_state,
    loss_and_gradients,
    make_batch,
    optimizer_step,
    param_tensors,
    rebuild_params,
)
from .partition import ClientShard


@dataclass
class Objective:
    """One cross-entropy term with its sample weight."""
    graph: Graph
    labels: np.ndarray
    mask: np.ndarray
    pool: Optional[sp.csr_matrix]
    weight: int


@dataclass
class ClientState:
    client_id: int
    shard: ClientShard
    is_malicious: bool
    poison_plan: Optional[PoisonPlan]
    optimizer_state: OptState
    clean_terms: List[Objective]
    poison_terms: Optional[List[Objective]]

    @property
    def n_samples(self) -> int:
        return self.shard.size


@dataclass
class ServerState:
    global_params: ModelParams
    round: int = 0
    history: List[MetricsRecord] = field(default_factory=list)


@dataclass
class RoundContext:
    task: str
    optimizer: OptimizerSpec
    local_epochs: int
    t_star_fraction: float
    total_rounds: int
    eval_suite: EvalSuite
    fingerprint: str


def schedule_attack(round_index: int, t_star_fraction: float,
                    total_rounds: int) -> bool:
    """Attack is live from round floor(fraction * T) onward."""
    if not 0.0 <= t_star_fraction <= 0.5:
        warnings.warn(f"attack-time fraction {t_star_fraction} outside [0, 0.5]")
    return round_index >= math.floor(t_star_fraction * total_rounds)


# ------------------------------------------------------------ preparation

def _node_clean_terms(shard: ClientShard) -> List[Objective]:
    t = shard.node_task
    labels = np.asarray(t.subgraph.labels)
    return [Objective(graph=t.subgraph, labels=labels, mask=t.train_mask,
                      pool=None, weight=len(t.train_mask))]


def _node_poison_terms(shard: ClientShard, plan: PoisonPlan) -> List[Objective]:
    t = shard.node_task
    poisoned = t.subgraph
    for vid in plan.poisoned_sample_ids:
        poisoned = inject_node_level(poisoned, plan.trigger, int(vid))
    terms = [Objective(graph=poisoned, labels=np.asarray(poisoned.labels),
                       mask=plan.poisoned_sample_ids, pool=None,
                       weight=len(plan.poisoned_sample_ids))]
    clean_ids = np.setdiff1d(t.train_mask, plan.poisoned_sample_ids)
    if len(clean_ids):
        terms.append(Objective(graph=t.subgraph,
                               labels=np.asarray(t.subgraph.labels),
                               mask=clean_ids, pool=None,
                               weight=len(clean_ids)))
    return terms


def _graph_batch_term(graphs, readout: str) -> Objective:
    batch = make_batch(graphs, readout=readout)
    return Objective(graph=batch.graph, labels=batch.labels,
                     mask=np.arange(batch.num_graphs), pool=batch.pool,
                     weight=batch.num_graphs)


def _graph_poison_terms(shard: ClientShard, plan: PoisonPlan,
                        readout: str) -> List[Objective]:
    # one mixed batch: poisoned copies in place of the chosen graphs
    graphs = list(shard.graph_task.train_graphs)
    for gid, pos in zip(plan.poisoned_sample_ids, plan.injection_positions):
        graphs[int(gid)] = inject_graph_level(graphs[int(gid)], plan.trigger, pos)
    return [_graph_batch_term(graphs, readout)]


def prepare_client(client_id: int, shard: ClientShard, task: str,
                   model_template: ModelParams,
                   plan: Optional[PoisonPlan] = None,
                   readout: str = "mean") -> ClientState:
    if task == "node":
        clean_terms = _node_clean_terms(shard)
        poison_terms = _node_poison_terms(shard, plan) if plan else None
    else:
        clean_terms = [_graph_batch_term(shard.graph_task.train_graphs, readout)]
        poison_terms = _graph_poison_terms(shard, plan, readout) if plan else None
    return ClientState(client_id=client_id, shard=shard,
                       is_malicious=plan is not None, poison_plan=plan,
                       optimizer_state=init_opt_state(model_template),
                       clean_terms=clean_terms, poison_terms=poison_terms)


# --------------------------------------------------------------- training

def _combined_gradients(model: ModelParams, terms: List[Objective]):
    """Sample-weighted mean of per-term mean losses and gradients."""
    total = sum(term.weight for term in terms)
    agg = None
    loss_sum = 0.0
    for term in terms:
        loss, grads = loss_and_gradients(model, term.graph, term.labels,
                                         term.mask, task_of(term), pool=term.pool)
        scale = term.weight / total
        loss_sum += scale * loss
        tensors = [scale * t for _, t in param_tensors(grads)]
        if agg is None:
            agg = tensors
        else:
            agg = [a + b for a, b in zip(agg, tensors)]
    return loss_sum, agg


def task_of(term: Objective) -> str:
    return "graph" if term.pool is not None else "node"


def local_train(client: ClientState, global_params: ModelParams,
                attack_active: bool, epochs: int,
                spec: OptimizerSpec) -> Tuple[ModelParams, int]:
    """Refine the broadcast parameters on this client's objective.

    Mutates only the client's optimizer state (it carries across rounds).
    Returns the trained parameters and the shard's sample count N_i.
    """
    use_poison = attack_active and client.is_malicious and \
        client.poison_terms is not None
    terms = client.poison_terms if use_poison else client.clean_terms
    params = global_params
    state = client.optimizer_state
    for _ in range(epochs):
        _, grad_tensors = _combined_gradients(params, terms)
        grads = _tensors_to_grads(params, grad_tensors)
        params, state = optimizer_step(params, grads, state, spec)
    client.optimizer_state = state
    return params, client.n_samples


def _tensors_to_grads(template: ModelParams, tensors):
    k = template.num_layers
    layer = list(tensors[:k])
    if template.attention is not None:
        attention = list(tensors[k:2 * k])
        rest = tensors[2 * k:]
    else:
        attention = None
        rest = tensors[k:]
    return Gradients(layer_weights=layer, attention=attention,
                     readout_weight=rest[0], readout_bias=rest[1])


def aggregate_fedavg(updates: List[Tuple[ModelParams, int]]) -> ModelParams:
    """Elementwise mean weighted by N_i / sum(N), in the given (client) order."""
    if not updates:
        raise EmptyUpdateSet("no client updates to aggregate")
    total = float(sum(n for _, n in updates))
    template = updates[0][0]
    names = [name for name, _ in param_tensors(template)]
    acc = [np.zeros_like(t) for _, t in param_tensors(template)]
    for params, n in updates:
        tensors = param_tensors(params)
        if [name for name, _ in tensors] != names:
            raise ShapeMismatch("update parameter trees differ")
        w = n / total
        for i, (_, t) in enumerate(tensors):
            if t.shape != acc[i].shape:
                raise ShapeMismatch(f"update tensor {names[i]} shape differs")
            acc[i] = acc[i] + w * t
    return rebuild_params(template, acc)


def run_round(server: ServerState, clients: List[ClientState],
              ctx: RoundContext) -> ServerState:
    """One federated round: broadcast, train all clients, aggregate, score."""
    if not clients:
        raise EmptyUpdateSet("no clients")
    active = schedule_attack(server.round, ctx.t_star_fraction, ctx.total_rounds)
    updates = []
    for client in sorted(clients, key=lambda c: c.client_id):
        updates.append(local_train(client, server.global_params, active,
                                   ctx.local_epochs, ctx.optimizer))
    new_global = aggregate_fedavg(updates)
    record = evaluate_round(new_global, ctx.eval_suite, server.round,
                            ctx.fingerprint)
    return ServerState(global_params=new_global, round=server.round + 1,
                       history=server.history + [record])


# ------------------------------------------------------------- evaluation

def _node_attack_bundle(shard: ClientShard, trig: TriggerGraph,
                        victims: np.ndarray) -> EvalBundle:
    g = shard.node_task.subgraph
    for vid in victims:
        g = inject_node_level(g, trig, int(vid))
    return EvalBundle(task="node", graph=g, pool=None,
                      sample_ids=np.asarray(victims, dtype=np.int64), labels=None)


def _graph_attack_bundle(shard: ClientShard, trig: TriggerGraph,
                         victims: np.ndarray, positions,
                         readout: str) -> EvalBundle:
    injected = [inject_graph_level(shard.graph_task.test_graphs[int(gid)],
                                   trig, pos)
                for gid, pos in zip(victims, positions)]
    if not injected:
        return EvalBundle(task="graph", graph=None, pool=None,
                          sample_ids=np.array([], dtype=np.int64), labels=None)
    batch = make_batch(injected, readout=readout)
    return EvalBundle(task="graph", graph=batch.graph, pool=batch.pool,
                      sample_ids=np.arange(batch.num_graphs), labels=None)


def build_eval_suite(shards: List[ClientShard], task: str,
                     plans: Dict[int, PoisonPlan],
                     transfer_plans: Dict[int, PoisonPlan],
                     target_label: int, readout: str = "mean") -> EvalSuite:
    """Static evaluation inputs: clean per client, poisoned per plan.

    plans: test-time poison plans of the malicious clients (own triggers).
    transfer_plans: eval plans of the normal clients built with the first
    malicious client's trigger.
    """
    clean, attack, transfer = {}, {}, {}
    for shard in shards:
        cid = shard.client_id
        if task == "node":
            t = shard.node_task
            labels = np.asarray(t.subgraph.labels)
            clean[cid] = EvalBundle(task="node", graph=t.subgraph, pool=None,
                                    sample_ids=t.test_mask,
                                    labels=labels[t.test_mask])
        else:
            batch = make_batch(shard.graph_task.test_graphs, readout=readout)
            clean[cid] = EvalBundle(task="graph", graph=batch.graph,
                                    pool=batch.pool,
                                    sample_ids=np.arange(batch.num_graphs),
                                    labels=batch.labels)
        for source, out in ((plans, attack), (transfer_plans, transfer)):
            plan = source.get(cid)
            if plan is None:
                continue
            if task == "node":
                out[cid] = _node_attack_bundle(shard, plan.trigger,
                                               plan.eval_sample_ids)
            else:
                out[cid] = _graph_attack_bundle(shard, plan.trigger,
                                                plan.eval_sample_ids,
                                                plan.eval_positions, readout)
    return EvalSuite(clean=clean, attack=attack, transfer=transfer,
                     target_label=target_label)
