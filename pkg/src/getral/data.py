"""Dataset schema, JSONL loading, and the synthetic keyword corpus.

One instance per line:

    {"id": "...", "claim": "...", "label": 0|1, "speaker": "...",
     "evidences": [{"text": "...", "publisher": "..."}, ...]}

``speaker`` and ``publisher`` are optional (some corpora have no speaker
notion at all). Label 0 = true claim, 1 = fake. Every validation error
carries its line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .rng import RngState, stream
from .textgraph import tokenize


class DatasetError(Exception):
    pass


@dataclass
class Evidence:
    text: str
    publisher: str | None = None


@dataclass
class ClaimInstance:
    instance_id: str
    claim: str
    label: int
    speaker: str | None = None
    evidences: list[Evidence] = field(default_factory=list)


def _expect(condition, lineno, message):
    if not condition:
        raise DatasetError(f"line {lineno}: {message}")


def _parse_instance(obj, lineno) -> ClaimInstance:
    _expect(isinstance(obj, dict), lineno, "instance must be a JSON object")
    for key in ("id", "claim", "label", "evidences"):
        _expect(key in obj, lineno, f"missing field {key!r}")
    _expect(isinstance(obj["id"], str) and obj["id"], lineno, "id must be a non-empty string")
    _expect(isinstance(obj["claim"], str), lineno, "claim must be a string")
    label = obj["label"]
    _expect(isinstance(label, int) and not isinstance(label, bool) and label in (0, 1),
            lineno, f"label must be 0 or 1, got {label!r}")
    speaker = obj.get("speaker")
    _expect(speaker is None or isinstance(speaker, str), lineno, "speaker must be a string")
    raw_evidences = obj["evidences"]
    _expect(isinstance(raw_evidences, list) and raw_evidences, lineno,
            "evidences must be a non-empty list")
    evidences = []
    for i, ev in enumerate(raw_evidences):
        _expect(isinstance(ev, dict), lineno, f"evidence {i} must be an object")
        _expect(isinstance(ev.get("text"), str), lineno, f"evidence {i} needs a text string")
        publisher = ev.get("publisher")
        _expect(publisher is None or isinstance(publisher, str), lineno,
                f"evidence {i} publisher must be a string")
        evidences.append(Evidence(text=ev["text"], publisher=publisher))
    return ClaimInstance(
        instance_id=obj["id"],
        claim=obj["claim"],
        label=label,
        speaker=speaker,
        evidences=evidences,
    )


def load_dataset(path) -> list[ClaimInstance]:
    """Parse and validate a JSONL dataset; instances come back in file order."""
    instances = []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON: {exc}") from exc
            instance = _parse_instance(obj, lineno)
            _expect(instance.instance_id not in seen_ids, lineno,
                    f"duplicate id {instance.instance_id!r}")
            seen_ids.add(instance.instance_id)
            instances.append(instance)
    if not instances:
        raise DatasetError(f"{path}: no valid instances")
    return instances


def instance_to_json(instance: ClaimInstance) -> str:
    obj = {"id": instance.instance_id, "claim": instance.claim, "label": instance.label}
    if instance.speaker is not None:
        obj["speaker"] = instance.speaker
    obj["evidences"] = [
        {"text": ev.text} if ev.publisher is None else {"text": ev.text, "publisher": ev.publisher}
        for ev in instance.evidences
    ]
    return json.dumps(obj)


def write_dataset(instances, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for instance in instances:
            handle.write(instance_to_json(instance) + "\n")


# ---------------------------------------------------------------------------
# synthetic keyword corpus


def keyword_label(claim: str, evidences) -> int:
    """0 (true) when any evidence shares >= 2 distinct tokens with the claim."""
    claim_words = set(tokenize(claim))
    for ev in evidences:
        if len(claim_words & set(tokenize(ev.text))) >= 2:
            return 0
    return 1


def make_synthetic(n: int, seed: int, vocab_size: int = 50,
                   distractor_rate: float = 0.0) -> list[ClaimInstance]:
    """Deterministic toy corpus labeled by the shared-keyword rule.

    True instances carry one evidence that echoes 2-3 claim words; fake
    instances overlap each evidence with the claim in at most one word.
    Filler words are drawn from the lower half of the vocabulary for true
    instances and the upper half for fake ones, so the signal is visible
    both through overlap and through word identity. ``distractor_rate``
    injects that fraction of extra off-claim noise tokens into every
    evidence (labels unchanged).
    """
    if n < 2:
        raise ValueError("need at least 2 instances")
    if vocab_size < 12:
        raise ValueError("vocabulary too small for the generator")
    gen = stream(RngState(seed), "synthetic-corpus")
    words = [f"w{i:02d}" for i in range(vocab_size)]
    low_half = words[: vocab_size // 2]
    high_half = words[vocab_size // 2:]
    speakers = [f"s{i}" for i in range(5)]
    publishers = [f"p{i}" for i in range(8)]

    def sample_words(pool, count, exclude=()):
        choices = [w for w in pool if w not in exclude]
        picked = gen.choice(len(choices), size=count, replace=False)
        return [choices[int(i)] for i in sorted(picked)]

    instances = []
    for i in range(n):
        target = int(i % 2)  # alternate for balance
        claim_words = sample_words(words, int(gen.integers(4, 7)))
        n_evidence = int(gen.integers(1, 4))
        filler_pool = low_half if target == 0 else high_half
        evidences = []
        support_at = int(gen.integers(0, n_evidence)) if target == 0 else -1
        for j in range(n_evidence):
            fillers = sample_words(filler_pool, int(gen.integers(3, 6)), exclude=claim_words)
            if j == support_at:
                echoed = sample_words(claim_words, int(gen.integers(2, min(4, len(claim_words) + 1))))
                tokens = fillers + echoed
            elif gen.random() < 0.3:
                tokens = fillers + sample_words(claim_words, 1)
            else:
                tokens = fillers
            perm = gen.permutation(len(tokens))
            tokens = [tokens[int(k)] for k in perm]
            publisher = publishers[int(gen.integers(0, len(publishers)))]
            evidences.append(Evidence(text=" ".join(tokens), publisher=publisher))
        if distractor_rate > 0.0:
            for ev in evidences:
                tokens = ev.text.split()
                extra = round(distractor_rate * len(tokens))
                for _ in range(extra):
                    noise = sample_words(words, 1, exclude=claim_words)[0]
                    tokens.insert(int(gen.integers(0, len(tokens) + 1)), noise)
                ev.text = " ".join(tokens)
        claim = " ".join(claim_words)
        label = keyword_label(claim, evidences)
        assert label == target, "generator must agree with the labeling rule"
        instances.append(ClaimInstance(
            instance_id=f"synth-{i:03d}",
            claim=claim,
            label=label,
            speaker=speakers[int(gen.integers(0, len(speakers)))],
            evidences=evidences,
        ))
    return instances
