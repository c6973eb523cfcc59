"""Seeded template corpora for desk-scale experiments and tests.

``general_corpus`` stands in for broad pre-training text, ``domain_corpus`` for
a narrow target domain (research hypotheses), and ``labeled_corpus`` for a
two-label classification set. The vocabularies of the general and domain
templates barely overlap, so a model trained on one is a poor model of the
other.
"""

from __future__ import annotations

import numpy as np

GENERAL_TEMPLATES = (
    "The {adj} {animal} {verb} near the {place} while the {person} {action}.",
    "On {day} my {person} {action} and then we {plan} at the {place}.",
    "I think the {place} looks {adj} when it {weather}, so we {plan}.",
    "After lunch the {person} {action}, and the {animal} {verb} all afternoon.",
    "We {plan} on {day} because the {place} was {adj} and it {weather}.",
)
GENERAL_SLOTS = {
    "adj": ("quiet", "busy", "sunny", "old", "little", "noisy", "friendly", "muddy", "bright", "cozy"),
    "animal": ("dog", "cat", "horse", "goose", "rabbit", "pony", "sheep", "duck"),
    "verb": ("slept", "wandered", "barked", "rested", "played", "waited", "ran around"),
    "place": ("market", "garden", "library", "bakery", "harbour", "village green", "bus stop", "school"),
    "person": ("neighbour", "sister", "uncle", "friend", "teacher", "grandmother", "cousin"),
    "action": ("baked bread", "fixed the fence", "read a book", "painted the door",
               "washed the car", "sang a song", "planted tulips", "called home"),
    "day": ("Monday", "Tuesday", "Friday", "Saturday", "Sunday"),
    "plan": ("went for a walk", "stayed inside", "had a picnic", "visited friends",
             "watched a film", "cleaned the house", "bought apples"),
    "weather": ("rains", "snows", "gets windy", "turns cold", "feels warm"),
}

DOMAIN_TEMPLATES = (
    "Can {method} reveal {quantity} of {object} in {survey} data?",
    "Does {quantity} of {object} correlate with {property} across {survey} samples?",
    "Could {method} constrain {property} of {object} beyond current {survey} limits?",
    "Is {property} of {object} driven by {process} rather than {process2}?",
    "Will {method} applied to {survey} spectra detect {process} in {object}?",
)
DOMAIN_SLOTS = {
    "method": ("convolutional networks", "Bayesian inference", "gravitational lensing",
               "asteroseismology", "spectral decomposition", "Gaussian processes",
               "transit photometry", "radio interferometry"),
    "quantity": ("the metallicity", "the rotation rate", "the magnetic field", "the mass loss",
                 "the dark matter fraction", "the velocity dispersion", "the dust content"),
    "object": ("red giants", "spiral galaxies", "hot Jupiters", "white dwarfs", "quasars",
               "globular clusters", "brown dwarfs", "neutron stars", "galaxy clusters"),
    "survey": ("Gaia", "SDSS", "TESS", "LSST", "Kepler", "ALMA", "Euclid"),
    "property": ("the star formation rate", "the orbital eccentricity", "the accretion rate",
                 "the chemical abundance", "the luminosity function", "the spin distribution"),
    "process": ("tidal heating", "stellar feedback", "magnetic braking", "radiative cooling",
                "turbulent mixing", "merger activity"),
    "process2": ("photoevaporation", "convective overshoot", "ram pressure stripping",
                 "cosmic ray heating", "binary interaction"),
}

LABELS = ("astro", "cuisine")
LABELED_TEMPLATES = {
    "astro": (
        "The {body} passed close to {star} and its {feature} brightened for {n} nights.",
        "Observers tracked the {feature} of the {body} from the {site} observatory.",
        "A faint {body} near {star} showed a {feature} in the infrared images.",
    ),
    "cuisine": (
        "Simmer the {ingredient} with {spice} and {liquid} for {n} minutes.",
        "Whisk the {liquid} into the {ingredient} and season with {spice} before baking.",
        "Roast the {ingredient} until golden, then drizzle {liquid} and a pinch of {spice}.",
    ),
}
LABELED_SLOTS = {
    "body": ("comet", "asteroid", "moon", "planet", "nebula", "meteor"),
    "star": ("Vega", "Sirius", "Rigel", "Altair", "Deneb", "Polaris"),
    "feature": ("tail", "halo", "ring system", "jet", "bright spot", "orbit"),
    "site": ("mountain", "desert", "polar", "island", "valley"),
    "ingredient": ("lentils", "chickpeas", "mushrooms", "carrots", "aubergine", "potatoes", "squash"),
    "spice": ("cumin", "paprika", "saffron", "nutmeg", "cinnamon", "oregano"),
    "liquid": ("olive oil", "cream", "lemon juice", "stock", "butter", "coconut milk"),
    "n": ("three", "five", "ten", "twelve", "twenty"),
}

DOMAIN_INSTRUCTION = "Write a research hypothesis.\n"
LABELED_INSTRUCTION = "Write a short note.\n"


def _fill(template, slots, rng):
    out = {}
    for key, options in slots.items():
        if "{" + key + "}" in template:
            out[key] = options[int(rng.integers(len(options)))]
    return template.format(**out)


def _sample(templates, slots, size, rng):
    return [_fill(templates[int(rng.integers(len(templates)))], slots, rng) for _ in range(size)]


def _sized(templates, slots, target_bytes, seed):
    rng = np.random.default_rng(seed)
    out, total = [], 0
    while total < target_bytes:
        text = _sample(templates, slots, 1, rng)[0]
        out.append(text)
        total += len(text) + 1
    return out


def general_corpus(seed: int = 0, target_bytes: int = 50_000) -> list[str]:
    return _sized(GENERAL_TEMPLATES, GENERAL_SLOTS, target_bytes, seed)


def domain_corpus(seed: int = 1, target_bytes: int = 50_000) -> list[str]:
    return _sized(DOMAIN_TEMPLATES, DOMAIN_SLOTS, target_bytes, seed)


def labeled_corpus(seed: int = 2, per_label: int = 300) -> list[tuple[str, str]]:
    """``(text, label)`` pairs, ``per_label`` of each label, interleaved."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(per_label):
        for label in LABELS:
            pairs.append((_sample(LABELED_TEMPLATES[label], LABELED_SLOTS, 1, rng)[0], label))
    return pairs


# Model settings used for the desk-scale experiments. The library defaults
# (alpha 0.1, cache weight 0.3, equal interpolation weights) smooth a
# character model over a ~100-symbol vocabulary too heavily for sampling.
DESK_LM = {
    "order": 5,
    "smoothing_alpha": 0.01,
    "cache_weight": 0.05,
    "interpolation": (0.6, 0.2, 0.1, 0.06, 0.04),
}


def desk_setup(seed: int = 0, holdout: int = 120):
    """Base and domain models on disjoint toy corpora plus real splits.

    Returns ``(models, pool, holdout)``: the domain model is trained on
    ``pool``, the negative-prompt source; ``holdout`` is unseen real data.
    """
    from .data import Dataset, DatasetRecord
    from .guidance import ModelPair
    from .lm import train
    from .vocab import Vocabulary

    general = general_corpus(seed)
    domain = domain_corpus(seed + 1)
    pool_texts, hold_texts = domain[:-holdout], domain[-holdout:]
    vocab = Vocabulary.build(general + domain + [DOMAIN_INSTRUCTION])
    base = train(general, vocab=vocab, prompts=DOMAIN_INSTRUCTION, **DESK_LM)
    dom = train(pool_texts, vocab=vocab, prompts=DOMAIN_INSTRUCTION, **DESK_LM)
    pool = Dataset([DatasetRecord(f"{i:06d}", t) for i, t in enumerate(pool_texts)], "real")
    hold = Dataset([DatasetRecord(f"h{i:06d}", t) for i, t in enumerate(hold_texts)], "real")
    return ModelPair(dom, base), pool, hold
