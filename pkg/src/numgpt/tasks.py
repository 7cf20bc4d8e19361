"""Synthetic numeracy datasets and magnitude-classification ingestion.

Three template-driven binary tasks (measurement estimation, number
comparison, add/sub word problems), a generation-evaluation subset with
large answers, and a JSON-Lines ingester that masks one numeral per record
for magnitude classification. Every generated label can be re-derived by
an independent oracle that re-parses the rendered text.
"""

from __future__ import annotations

import json
import logging
import re
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import GenerationError, IngestError, UsageError
from .numbers import parse_numerals

log = logging.getLogger(__name__)

TASKS = ("MME", "GNC", "MWPAS", "MWPAS_GEN", "MAGNITUDE")


@dataclass
class TaskSample:
    text: str
    label: int
    task: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"text": self.text, "label": self.label, "task": self.task, "meta": self.meta},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "TaskSample":
        d = json.loads(line)
        return cls(d["text"], d["label"], d["task"], d.get("meta", {}))


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    plural: str
    unit: str
    ans_min: float
    ans_max: float

    def __post_init__(self):
        if not (0 < self.ans_min <= self.ans_max):
            raise UsageError(f"bad answer range for {self.name}: [{self.ans_min}, {self.ans_max}]")


def _data_file(name: str) -> str:
    return resources.files("numgpt.data").joinpath(name).read_text(encoding="utf-8")


def load_objects(path: str | Path | None = None) -> list[ObjectSpec]:
    raw = Path(path).read_text() if path else _data_file("mme_objects.json")
    return [ObjectSpec(**d) for d in json.loads(raw)]


def load_templates(task: str, path: str | Path | None = None) -> list[dict]:
    names = {"MME": "mme_templates.json", "GNC": "gnc_templates.json",
             "MWPAS": "mwpas_templates.json", "MWPAS_GEN": "mwpas_templates.json"}
    raw = Path(path).read_text() if path else _data_file(names[task])
    return json.loads(raw)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def log_sampler(lo: float, hi: float, rng: np.random.Generator) -> float:
    """Uniform in log10: draws spread evenly across orders of magnitude."""
    if not (0 < lo < hi):
        raise UsageError(f"log_sampler needs 0 < lo < hi, got [{lo}, {hi}]")
    return float(10.0 ** rng.uniform(math.log10(lo), math.log10(hi)))


def log_sample_int(lo: float, hi: float, rng: np.random.Generator) -> int:
    v = round(log_sampler(lo, hi, rng))
    return int(min(max(v, math.ceil(lo)), math.floor(hi)))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _split(samples: list[TaskSample], rng: np.random.Generator, test_frac: float = 0.2):
    order = rng.permutation(len(samples))
    n_test = round(len(samples) * test_frac)
    test = [samples[i] for i in order[:n_test]]
    train = [samples[i] for i in order[n_test:]]
    return train, test


def _attempts(target: int) -> int:
    return max(1000, 200 * target)


def gen_mme(
    objects: list[ObjectSpec] | None = None,
    templates: list[dict] | None = None,
    per_object: int = 1000,
    seed: int = 0,
):
    """Measurement estimation: judge whether an answer fits k times an
    object's per-unit range. Half the samples per object are correct
    (uniform inside the range), half incorrect (log-sampled from the
    flanking decades). (multiplier, object, answer) triples are unique."""
    objects = objects or load_objects()
    templates = templates or load_templates("MME")
    rng = np.random.default_rng(seed)
    samples: list[TaskSample] = []
    seen: set[tuple] = set()
    for obj in objects:
        for label in (1, 0):
            want = per_object // 2
            made = 0
            budget = _attempts(want)
            while made < want:
                budget -= 1
                if budget < 0:
                    raise GenerationError(
                        f"MME: uniqueness budget exhausted for {obj.name} "
                        f"(made {made}/{want} label={label})"
                    )
                k = log_sample_int(1, 100, rng)
                lo, hi = k * obj.ans_min, k * obj.ans_max
                if label == 1:
                    ans = int(rng.integers(math.ceil(lo), math.floor(hi) + 1))
                else:
                    low_side = rng.random() < 0.5
                    if low_side and math.ceil(0.01 * lo) < lo:
                        ans = log_sample_int(max(0.01 * lo, 0.5), max(lo - 1, 1), rng)
                        if not (0.01 * lo <= ans < lo):
                            continue
                    else:
                        ans = log_sample_int(hi + 1, 100 * hi, rng)
                        if not (hi < ans <= 100 * hi):
                            continue
                key = (obj.name, k, ans)
                if key in seen:
                    continue
                seen.add(key)
                tpl = templates[rng.integers(len(templates))]
                text = (
                    tpl["text"]
                    .replace("[INT]", str(k))
                    .replace("[OBJ]", obj.plural)
                    .replace("[ANS]", str(ans))
                )
                samples.append(
                    TaskSample(
                        text,
                        label,
                        "MME",
                        {"template": tpl["id"], "object": obj.name, "numbers": [k], "answer": ans},
                    )
                )
                made += 1
    return _split(samples, rng)


def gen_gnc(templates: list[dict] | None = None, per_template: int = 2000, seed: int = 0):
    """Number comparison: does the pair satisfy the sentence's relation?
    Ties are resampled; (template, a, b) pairs are unique."""
    templates = templates or load_templates("GNC")
    rng = np.random.default_rng(seed)
    samples: list[TaskSample] = []
    for tpl in templates:
        seen: set[tuple] = set()
        rel = tpl["relation"]
        for label in (1, 0):
            want = per_template // 2
            made = 0
            budget = _attempts(want)
            while made < want:
                budget -= 1
                if budget < 0:
                    raise GenerationError(
                        f"GNC: uniqueness budget exhausted for {tpl['id']} (made {made}/{want})"
                    )
                a = log_sample_int(tpl["lo"], tpl["hi"], rng)
                b = log_sample_int(tpl["lo"], tpl["hi"], rng)
                if a == b:
                    continue
                holds = a < b if rel == "lt" else a > b
                if holds != bool(label):
                    a, b = b, a
                if (a, b) in seen:
                    continue
                seen.add((a, b))
                text = tpl["text"].replace("[NUMA]", str(a)).replace("[NUMB]", str(b))
                samples.append(
                    TaskSample(text, label, "GNC", {"template": tpl["id"], "numbers": [a, b]})
                )
                made += 1
    return _split(samples, rng)


def _mwpas_numbers(tpl: dict, rng: np.random.Generator) -> tuple[int, int, int]:
    a = log_sample_int(tpl["lo"], tpl["hi"], rng)
    b = log_sample_int(tpl["lo"], tpl["hi"], rng)
    if tpl["op"] == "sub":
        a, b = max(a, b), min(a, b)
        correct = a - b
    else:
        correct = a + b
    return a, b, correct


def gen_mwpas(templates: list[dict] | None = None, per_template: int = 2000, seed: int = 0):
    """Add/sub word problems: label 1 iff the stated answer equals the
    template's arithmetic result. Wrong answers are log-sampled within a
    decade of the correct one; (template, a, b, answer) tuples are unique."""
    templates = templates or load_templates("MWPAS")
    rng = np.random.default_rng(seed)
    samples: list[TaskSample] = []
    for tpl in templates:
        seen: set[tuple] = set()
        for label in (1, 0):
            want = per_template // 2
            made = 0
            budget = _attempts(want)
            while made < want:
                budget -= 1
                if budget < 0:
                    raise GenerationError(
                        f"MWPAS: uniqueness budget exhausted for {tpl['id']} (made {made}/{want})"
                    )
                a, b, correct = _mwpas_numbers(tpl, rng)
                if correct < 1:
                    continue
                if label == 1:
                    ans = correct
                else:
                    ans = log_sample_int(max(1, round(correct / 10)), correct * 10, rng)
                    if ans == correct:
                        continue
                if (a, b, ans) in seen:
                    continue
                seen.add((a, b, ans))
                question = tpl["text"].replace("[NUMA]", str(a)).replace("[NUMB]", str(b))
                text = f"Q: {question} A: {ans}"
                samples.append(
                    TaskSample(
                        text,
                        label,
                        "MWPAS",
                        {"template": tpl["id"], "numbers": [a, b], "answer": ans},
                    )
                )
                made += 1
    return _split(samples, rng)


def gen_mwpas_gen_subset(
    templates: list[dict] | None = None,
    train_size: int = 5512,
    test_size: int = 1338,
    seed: int = 0,
):
    """Generation-evaluation subset: positive word problems whose answer
    exceeds 10000; contexts end with "A:" and the expected answer lives in
    meta. Only addition templates can exceed the cutoff."""
    templates = templates or load_templates("MWPAS_GEN")
    add_templates = [t for t in templates if t["op"] == "add"]
    if not add_templates:
        raise UsageError("no addition templates available for the generation subset")
    rng = np.random.default_rng(seed)
    total = train_size + test_size
    samples: list[TaskSample] = []
    seen: set[tuple] = set()
    budget = _attempts(total) * 10  # the >10000 filter rejects most draws
    while len(samples) < total:
        budget -= 1
        if budget < 0:
            raise GenerationError(
                f"MWPAS_GEN: budget exhausted at {len(samples)}/{total} samples"
            )
        tpl = add_templates[rng.integers(len(add_templates))]
        a, b, correct = _mwpas_numbers(tpl, rng)
        if correct <= 10000:
            continue
        if (tpl["id"], a, b) in seen:
            continue
        seen.add((tpl["id"], a, b))
        question = tpl["text"].replace("[NUMA]", str(a)).replace("[NUMB]", str(b))
        samples.append(
            TaskSample(
                f"Q: {question} A:",
                1,
                "MWPAS_GEN",
                {"template": tpl["id"], "numbers": [a, b], "expected": correct},
            )
        )
    order = rng.permutation(total)
    test = [samples[i] for i in order[:test_size]]
    train = [samples[i] for i in order[test_size:]]
    return train, test


def ingest_magnitude(path: str | Path) -> list[TaskSample]:
    """Read {"text", "magnitude"} JSON lines, mask the single numeral."""
    samples: list[TaskSample] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                text = rec["text"]
                magnitude = int(rec["magnitude"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise IngestError(f"{path}: line {lineno}: {e}") from e
            spans = parse_numerals(text)
            if len(spans) != 1:
                log.warning(
                    "%s: line %d skipped (%d numerals, need exactly 1)", path, lineno, len(spans)
                )
                continue
            (start, end), nv = spans[0]
            masked = text[:start] + "<MASK>" + text[end:]
            samples.append(
                TaskSample(masked, magnitude, "MAGNITUDE", {"masked_value": nv.value})
            )
    return samples


# ---------------------------------------------------------------------------
# Independent label oracle (re-parses rendered text, ignores meta)
# ---------------------------------------------------------------------------


def _skeleton(text: str) -> str:
    spans = parse_numerals(text)
    out, pos = [], 0
    for (start, end), _ in spans:
        out.append(text[pos:start])
        out.append("#")
        pos = end
    out.append(text[pos:])
    return "".join(out)


class LabelOracle:
    """Recomputes labels from sample text alone, using the artifact data
    files as the source of truth for ranges, relations, and arithmetic."""

    def __init__(self, objects=None, gnc_templates=None, mwpas_templates=None, mme_templates=None):
        self.objects = {o.plural: o for o in (objects or load_objects())}
        self.gnc = {}
        for tpl in gnc_templates or load_templates("GNC"):
            skel = tpl["text"].replace("[NUMA]", "#").replace("[NUMB]", "#")
            self.gnc[skel] = tpl["relation"]
        self.mwpas = {}
        for tpl in mwpas_templates or load_templates("MWPAS"):
            q = tpl["text"].replace("[NUMA]", "#").replace("[NUMB]", "#")
            self.mwpas[f"Q: {q} A: #"] = tpl["op"]
            self.mwpas[f"Q: {q} A:"] = tpl["op"]
        self.mme_skels = set()
        for tpl in mme_templates or load_templates("MME"):
            for o in self.objects.values():
                self.mme_skels.add(
                    tpl["text"].replace("[INT]", "#").replace("[OBJ]", o.plural).replace("[ANS]", "#")
                )

    def label(self, sample: TaskSample) -> int:
        text = sample.text
        nums = [nv.value for _, nv in parse_numerals(text)]
        skel = _skeleton(text)
        if sample.task == "MME":
            if skel not in self.mme_skels:
                raise UsageError(f"unrecognized MME text: {text!r}")
            obj = next(
                o
                for pl, o in sorted(self.objects.items(), key=lambda kv: -len(kv[0]))
                if re.search(rf"\b{re.escape(pl)}\b", text)
            )
            k, ans = nums[0], nums[-1]
            return int(k * obj.ans_min <= ans <= k * obj.ans_max)
        if sample.task == "GNC":
            rel = self.gnc.get(skel)
            if rel is None:
                raise UsageError(f"unrecognized GNC text: {text!r}")
            a, b = nums
            return int(a < b if rel == "lt" else a > b)
        if sample.task == "MWPAS":
            op = self.mwpas.get(skel)
            if op is None:
                raise UsageError(f"unrecognized MWPAS text: {text!r}")
            a, b, ans = nums
            return int(ans == (a + b if op == "add" else a - b))
        if sample.task == "MWPAS_GEN":
            op = self.mwpas.get(skel)
            if op is None:
                raise UsageError(f"unrecognized MWPAS_GEN text: {text!r}")
            a, b = nums
            expected = a + b if op == "add" else a - b
            assert expected == sample.meta["expected"] and expected > 10000
            return 1
        raise UsageError(f"no oracle for task {sample.task}")


# ---------------------------------------------------------------------------
# JSONL IO
# ---------------------------------------------------------------------------


def write_jsonl(samples: list[TaskSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def read_jsonl(path: str | Path) -> list[TaskSample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(TaskSample.from_json(line))
    return out
