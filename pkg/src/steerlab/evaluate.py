"""Bias and quality measurement against the analytic world.

The discriminator is exact: posterior responsibilities of every world
component at the sampled point, marginalized onto attribute values (and onto
concepts for the quality proxy).  The bias score for one prompt-attribute is
the mean absolute gap between the empirical value frequencies over that
prompt's samples and the target proportions; prompt scores average into
per-attribute scores and then into one combined number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import (
    AttributeSchema,
    Condition,
    ConditionalMixture,
    MixtureWorld,
    TargetDistribution,
    conditional_components,
)
from .diffusion import mixture_log_density


def _log_posteriors(mix: ConditionalMixture, x: np.ndarray) -> np.ndarray:
    """Per-component log posterior responsibilities at the data level."""
    diff = x[None, :] - mix.means
    if mix.identity_cov:
        logits = mix.log_weights - 0.5 * np.einsum("kd,kd->k", diff, diff)
    else:
        y = np.einsum("kji,kj->ki", mix.eig_vecs, diff)
        logits = mix.log_weights - 0.5 * (
            np.einsum("ki,ki->k", y, y / mix.eig_vals) + np.log(mix.eig_vals).sum(axis=1)
        )
    m = logits.max()
    return logits - (m + math.log(np.exp(logits - m).sum()))


def discriminate(world: MixtureWorld, x0: np.ndarray) -> tuple[dict[str, str], dict[str, float]]:
    """Attribute labels (marginal argmax, ties by schema order) and concept posterior."""
    x0 = np.asarray(x0, dtype=float)
    mix = world.all_components()
    post = np.exp(_log_posteriors(mix, x0))
    labels: dict[str, str] = {}
    for attr in world.schema.attributes:
        best_value = attr.values[0]
        best_mass = -1.0
        for value in attr.values:
            mass = float(sum(p for p, c in zip(post, mix.components) if c.tags[attr.name] == value))
            if mass > best_mass:
                best_value, best_mass = value, mass
        labels[attr.name] = best_value
    concept_post = {
        concept: float(sum(p for p, c in zip(post, mix.components) if c.concept == concept))
        for concept in world.concepts
    }
    return labels, concept_post


def value_frequencies(
    assignments: list[dict[str, str]], schema: AttributeSchema
) -> dict[str, dict[str, float]]:
    """Empirical per-attribute value proportions over one prompt's samples."""
    n = len(assignments)
    freqs: dict[str, dict[str, float]] = {}
    for attr in schema.attributes:
        freqs[attr.name] = {
            v: sum(1 for a in assignments if a[attr.name] == v) / n for v in attr.values
        }
    return freqs


@dataclass
class BiasScores:
    per_attribute: dict[str, float]
    combined: float
    per_prompt: list[dict[str, float]]                       # prompt -> attr -> deviation
    proportions: list[dict[str, dict[str, float]]]           # prompt -> attr -> value -> freq


def bias_score(
    outcomes: list[list[dict[str, str]]],
    target: TargetDistribution,
    schema: AttributeSchema,
) -> BiasScores:
    """Mean absolute deviation of per-prompt value frequencies from the target.

    outcomes[n] holds the discriminated attribute assignments of prompt n's
    samples; every prompt must carry the same sample count T >= 1.
    """
    if not outcomes:
        raise ValueError("bias_score needs at least one prompt")
    t_counts = {len(per_prompt) for per_prompt in outcomes}
    if len(t_counts) != 1:
        raise ValueError(f"ragged sample counts across prompts: {sorted(t_counts)}")
    if t_counts == {0}:
        raise ValueError("bias_score needs at least one sample per prompt")
    target.validate_for(schema)

    proportions = [value_frequencies(per_prompt, schema) for per_prompt in outcomes]
    per_prompt: list[dict[str, float]] = []
    for freqs in proportions:
        per_prompt.append(
            {
                attr.name: sum(
                    abs(freqs[attr.name][v] - target.of(attr.name, v)) for v in attr.values
                ) / len(attr.values)
                for attr in schema.attributes
            }
        )
    per_attribute = {
        attr.name: sum(row[attr.name] for row in per_prompt) / len(per_prompt)
        for attr in schema.attributes
    }
    combined = (
        sum(per_attribute.values()) / len(per_attribute) if per_attribute else 0.0
    )
    return BiasScores(per_attribute, combined, per_prompt, proportions)


@dataclass
class QualityScores:
    adherence: float          # fraction of samples whose MAP concept matches
    mean_log_density: float   # under the attribute-marginalized conditional mixture


def quality_score(world: MixtureWorld, concept: str, samples: np.ndarray) -> QualityScores:
    """Concept adherence plus mean log-density; attribute constraints are ignored."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("quality_score needs at least one sample")
    mix = conditional_components(world, Condition(concept, {}, np.zeros(world.dimension)))
    hits = 0
    log_density = 0.0
    for x in samples:
        _, concept_post = discriminate(world, x)
        if max(concept_post, key=lambda c: concept_post[c]) == concept:
            hits += 1
        log_density += mixture_log_density(mix, x, 1.0)
    return QualityScores(hits / len(samples), log_density / len(samples))


@dataclass
class ReportRow:
    prompt_id: str
    concept: str
    attribute: str
    t_samples: int
    observed: dict[str, float]
    deviation: float


@dataclass
class BiasReport:
    rows: list[ReportRow]
    per_attribute: dict[str, float]
    combined: float
    quality: float
    mean_log_density: float
    n_prompts: int
    t_samples: int
    master_seed: int
    config_digest: str


def build_report(
    prompt_ids: list[str],
    concepts: list[str],
    outcomes: list[list[dict[str, str]]],
    qualities: list[QualityScores],
    target: TargetDistribution,
    schema: AttributeSchema,
    master_seed: int,
    config_digest: str,
) -> BiasReport:
    scores = bias_score(outcomes, target, schema)
    rows = []
    for n, prompt_id in enumerate(prompt_ids):
        for attr in schema.attributes:
            rows.append(
                ReportRow(
                    prompt_id=prompt_id,
                    concept=concepts[n],
                    attribute=attr.name,
                    t_samples=len(outcomes[n]),
                    observed=scores.proportions[n][attr.name],
                    deviation=scores.per_prompt[n][attr.name],
                )
            )
    return BiasReport(
        rows=rows,
        per_attribute=scores.per_attribute,
        combined=scores.combined,
        quality=float(sum(q.adherence for q in qualities) / len(qualities)),
        mean_log_density=float(sum(q.mean_log_density for q in qualities) / len(qualities)),
        n_prompts=len(outcomes),
        t_samples=len(outcomes[0]),
        master_seed=master_seed,
        config_digest=config_digest,
    )


def write_report_csv(report: BiasReport, path: str, schema: AttributeSchema) -> None:
    """One row per prompt per attribute, then a summary comment block."""
    lines = ["# steerlab-report v1", f"# config_digest={report.config_digest}",
             f"# master_seed={report.master_seed}"]
    lines.append("prompt_id,concept,attribute,t_samples,observed,deviation")
    for row in report.rows:
        observed = "|".join(
            f"{v}:{row.observed[v]!r}" for v in schema.values_of(row.attribute)
        )
        lines.append(
            f"{row.prompt_id},{row.concept},{row.attribute},{row.t_samples},"
            f"{observed},{row.deviation!r}"
        )
    for attr in schema.names():
        lines.append(f"# summary bias[{attr}]={report.per_attribute[attr]!r}")
    lines.append(f"# summary bias_combined={report.combined!r}")
    lines.append(f"# summary quality={report.quality!r}")
    lines.append(f"# summary mean_log_density={report.mean_log_density!r}")
    lines.append(f"# summary n_prompts={report.n_prompts} t_samples={report.t_samples}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
