"""Full model assembly: parameters, instance preparation, forward pass.

Pipeline per instance: claim text -> graph -> stacked gated encoder
steps; each evidence text -> graph -> one encoder step -> stacked
refine-and-propagate layers; word-level attention pools evidence nodes
toward the claim mean; speaker/publisher rows concatenate in; document
attention pools evidences toward the claim representation; one affine
layer + softmax predicts veracity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import ClaimInstance
from .ggnn import GgnnParams, ggnn_step
from .params import ParamGroup
from .readout import (
    AttentionParams,
    ClassifierParams,
    SideInfo,
    attn_readout,
    claim_mean,
    classify,
    cross_entropy,
    doc_attention,
    lookup_publisher,
    lookup_speaker,
    with_side,
)
from .refinement import (
    EvidenceState,
    KernelBank,
    RefinementParams,
    RefinementTrace,
    default_bank,
    srm_layer,
)
from .rng import RngState
from .textgraph import EmbeddingTable, EmptyTextError, TokenGraph, Vocab, build_graph, tokenize


class ModelError(Exception):
    pass


class IngestError(ModelError):
    """An instance that cannot be turned into graphs (empty claim/evidences)."""


@dataclass
class SrmLayerParams(ParamGroup):
    refinement: RefinementParams
    encoder: GgnnParams


@dataclass
class ModelParams(ParamGroup):
    embedding: np.ndarray
    claim_encoders: list[GgnnParams]
    evidence_encoder: GgnnParams
    srm: list[SrmLayerParams]
    word_attention: AttentionParams
    doc_attention: AttentionParams
    side: SideInfo
    classifier: ClassifierParams

    @classmethod
    def build(cls, embedding: np.ndarray, speakers, publishers,
              cfg: TrainConfig, rng_state: RngState) -> "ModelParams":
        dim = embedding.shape[1]
        side_dim = cfg.side_dim
        evidence_rep_dim = cfg.word_heads * dim + side_dim
        claim_rep_dim = dim + side_dim
        joint_dim = claim_rep_dim + cfg.doc_heads * evidence_rep_dim
        return cls(
            embedding=np.array(embedding, dtype=np.float64, copy=True),
            claim_encoders=[
                GgnnParams.seeded(dim, rng_state, f"claim-encoder-{t}")
                for t in range(cfg.claim_layers)
            ],
            evidence_encoder=GgnnParams.seeded(dim, rng_state, "evidence-encoder"),
            srm=[
                SrmLayerParams(
                    refinement=RefinementParams.seeded(
                        dim, cfg.kernels, cfg.beta, cfg.discard_rate,
                        rng_state, f"refinement-{t}",
                    ),
                    encoder=GgnnParams.seeded(dim, rng_state, f"srm-encoder-{t}"),
                )
                for t in range(cfg.srm_layers)
            ],
            word_attention=AttentionParams.seeded(
                dim, dim, cfg.word_heads, rng_state, "word-attention"
            ),
            doc_attention=AttentionParams.seeded(
                evidence_rep_dim, claim_rep_dim, cfg.doc_heads, rng_state, "doc-attention"
            ),
            side=SideInfo.seeded(speakers, publishers, side_dim, rng_state, "side-info"),
            classifier=ClassifierParams.zeros(joint_dim),
        )


@dataclass
class PreparedInstance:
    instance_id: str
    label: int
    speaker: str | None
    claim_graph: TokenGraph
    evidence_graphs: list[TokenGraph]
    publishers: list[str | None]


def prepare_instance(instance: ClaimInstance, vocab: Vocab, cfg: TrainConfig,
                     table: EmbeddingTable | None = None) -> PreparedInstance:
    """Tokenize and graph one instance; raises IngestError when the claim is
    empty or no evidence survives tokenization/truncation."""
    claim_tokens = tokenize(instance.claim)
    if not claim_tokens:
        raise IngestError(f"instance {instance.instance_id}: empty claim")
    claim_graph = build_graph(
        vocab.encode(claim_tokens), cfg.window, cfg.max_claim_len, table
    )
    graphs = []
    publishers = []
    for ev in instance.evidences[: cfg.max_evidences]:
        tokens = tokenize(ev.text)
        if not tokens:
            continue
        graphs.append(build_graph(
            vocab.encode(tokens), cfg.window, cfg.max_evidence_len, table
        ))
        publishers.append(ev.publisher)
    if not graphs:
        raise IngestError(f"instance {instance.instance_id}: no non-empty evidences")
    return PreparedInstance(
        instance_id=instance.instance_id,
        label=instance.label,
        speaker=instance.speaker,
        claim_graph=claim_graph,
        evidence_graphs=graphs,
        publishers=publishers,
    )


def build_vocab(instances) -> Vocab:
    """Vocabulary over the training instances' claim and evidence tokens."""
    def streams():
        for inst in instances:
            yield tokenize(inst.claim)
            for ev in inst.evidences:
                yield tokenize(ev.text)

    return Vocab.build(streams())


def collect_side_ids(instances):
    """First-occurrence-ordered speaker and publisher id lists."""
    speakers: dict[str, None] = {}
    publishers: dict[str, None] = {}
    for inst in instances:
        if inst.speaker is not None:
            speakers.setdefault(inst.speaker, None)
        for ev in inst.evidences:
            if ev.publisher is not None:
                publishers.setdefault(ev.publisher, None)
    return list(speakers), list(publishers)


@dataclass
class InstanceForward:
    instance: PreparedInstance
    claim_pool: ad.Tensor
    claim_rep: ad.Tensor
    evidence_reps: list[ad.Tensor]
    word_alphas: list[list[np.ndarray]]
    doc_alpha: list[np.ndarray]
    joint: ad.Tensor
    y_hat: ad.Tensor
    ce: ad.Tensor
    discards: list[list[np.ndarray]]
    srm_traces: list[list[RefinementTrace]]
    evidence_active: list[np.ndarray]
    speaker_known: bool = False
    publishers_known: list[bool] = field(default_factory=list)

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.y_hat.values[0]))


def forward_instance(
    params: ModelParams,
    inst: PreparedInstance,
    bank: KernelBank,
    crossed: bool = False,
    fixed_discards: list[list[np.ndarray]] | None = None,
) -> InstanceForward:
    """Run one instance through the model; ``params`` leaves must already be
    Tensors (watched on a tape for training, constants for inference).

    ``fixed_discards`` replays captured per-evidence/per-layer discard
    index sets so the forward map is differentiable under perturbation.
    """
    emb = params.embedding
    cg = inst.claim_graph
    h_c = ad.gather_rows(emb, cg.node_words)
    for encoder in params.claim_encoders:
        h_c = ggnn_step(cg.norm_adjacency, h_c, encoder).output
    pooled_claim = claim_mean(h_c, cg.active)

    evidence_reps = []
    word_alphas = []
    discards = []
    srm_traces = []
    evidence_active = []
    publishers_known = []
    for e_idx, graph in enumerate(inst.evidence_graphs):
        h_e = ad.gather_rows(emb, graph.node_words)
        first = ggnn_step(graph.norm_adjacency, h_e, params.evidence_encoder)
        state = EvidenceState(graph.norm_adjacency, graph.active.copy(), first.output)
        layer_discards = []
        layer_traces = []
        for l_idx, layer in enumerate(params.srm):
            fixed = None
            if fixed_discards is not None:
                fixed = fixed_discards[e_idx][l_idx]
            state, trace = srm_layer(
                h_c, state, layer.refinement, layer.encoder, bank,
                crossed=crossed, fixed_discard=fixed,
            )
            layer_discards.append(trace.discarded)
            layer_traces.append(trace)
        word = attn_readout(state.features, state.active, pooled_claim, params.word_attention)
        pub_row, pub_known = lookup_publisher(params.side, inst.publishers[e_idx])
        evidence_reps.append(with_side(word.output, pub_row))
        word_alphas.append(word.weights)
        discards.append(layer_discards)
        srm_traces.append(layer_traces)
        evidence_active.append(state.active)
        publishers_known.append(pub_known)

    speaker_row, speaker_known = lookup_speaker(params.side, inst.speaker)
    claim_rep = with_side(pooled_claim, speaker_row)
    doc = doc_attention(evidence_reps, claim_rep, params.doc_attention)
    joint = ad.concat_cols(claim_rep, doc.output)
    y_hat = classify(joint, params.classifier)
    ce = cross_entropy(y_hat, inst.label)
    return InstanceForward(
        instance=inst,
        claim_pool=pooled_claim,
        claim_rep=claim_rep,
        evidence_reps=evidence_reps,
        word_alphas=word_alphas,
        doc_alpha=doc.weights,
        joint=joint,
        y_hat=y_hat,
        ce=ce,
        discards=discards,
        srm_traces=srm_traces,
        evidence_active=evidence_active,
        speaker_known=speaker_known,
        publishers_known=publishers_known,
    )


def make_bank(cfg: TrainConfig) -> KernelBank:
    return default_bank(cfg.kernels)
