#!/usr/bin/env python3
"""Regenerate crates/core/data/embeddings_fixture.txt.

A small word2vec-format (text) table of 50-dimensional vectors for tokens
that appear in major names. Vectors are drawn around topic centroids so
related fields sit close together; the output is deterministic.

    python3 scripts/gen_embedding_fixture.py > crates/core/data/embeddings_fixture.txt
"""
import numpy as np

DIM = 50
TOPICS = {
    "life": "immunology ecology evolution veterinary dental optometry nutrition biology biochemistry microbiology molecular neuroscience genetics marine ecology zoology botany "
            "physiology pharmacology biotechnology bioinformatics biomedical kinesiology health nursing medicine "
            "anatomy cell organism",
    "physical": "geophysics seismology optics thermodynamics nuclear chemistry physics astronomy astrophysics geology earth oceanography meteorology materials "
                "chemical environmental atmospheric quantum particle",
    "math": "mathematical econometrics operations research mathematics statistics applied data science analytics calculus algebra probability actuarial",
    "computing": "electronics telecommunications digital algorithms computer software information technology systems cybersecurity computing programming "
                 "network artificial intelligence robotics",
    "engineering": "nanotechnology petroleum mining biosystems engineering mechanical electrical civil aerospace industrial manufacturing structural "
                   "architecture design",
    "agri": "agricultural agriculture forestry conservation natural resources wildlife",
    "social": "anthropological urban planning demography psychology sociology anthropology economics political international relations geography "
              "criminal justice social work public policy human development gender women's ethnic "
              "african american chicano native hawaiian",
    "humanities": "arabic chinese french german japanese medieval rhetoric history philosophy english literature linguistics religious languages spanish foreign "
                  "creative writing studies classics",
    "business": "economics supply chain real estate business administration accounting finance marketing management hospitality sports "
                "entrepreneurship",
    "media": "advertising broadcasting public relations communications communication journalism film media",
    "arts": "photography painting sculpture animation fashion art fine arts graphic music theater culinary dance",
    "civic": "paralegal library counseling early childhood education elementary legal law teaching",
}
# Overall STEM/non-STEM axis strength per topic.
STEM_AXIS = {"life": 1.0, "physical": 1.0, "math": 1.0, "computing": 1.0, "engineering": 1.0,
             "agri": 0.6, "social": -0.8, "humanities": -1.0, "business": -0.6, "media": -0.9,
             "arts": -1.0, "civic": -0.7}

rng = np.random.default_rng(20230301)
stem_dir = rng.normal(size=DIM)
stem_dir /= np.linalg.norm(stem_dir)
centroids = {t: rng.normal(size=DIM) for t in TOPICS}

tokens = {}
for topic, words in TOPICS.items():
    for w in words.split():
        if w in tokens:
            continue
        v = 1.2 * centroids[topic] + 6.0 * STEM_AXIS[topic] * stem_dir + 0.8 * rng.normal(size=DIM)
        tokens[w] = v
# Generic words that show up in multi-word names.
for w in ["and", "of", "the", "sciences", "arts", "general", "pre", "liberal", "interdisciplinary"]:
    if w not in tokens:
        tokens[w] = 0.6 * rng.normal(size=DIM)

print(f"{len(tokens)} {DIM}")
for w, v in tokens.items():
    print(w + " " + " ".join(f"{x:.6f}" for x in v))
