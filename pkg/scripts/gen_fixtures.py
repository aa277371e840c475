#!/usr/bin/env python3
"""Regenerate the bundled fixtures (corpus, dictionary, category map, mock script).

Deterministic: running it twice produces identical files. Self-checks at
the end assert the properties the test suite relies on (mention counts,
offsets, and the knowledge-base vote outcome for every scripted surface).
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

ENTITY_TYPES = ["Species", "Gene/Protein", "Chemical"]

# (doc_id, index, text, [(surface, type, occurrence)])
SENTENCES = [
    ("d1", 0,
     "A common feature of these proteins is involvement with heterochromatin and/or transcriptional repression",
     [("proteins", "Gene/Protein", 0)]),
    ("d1", 1,
     "The tumor suppressor p53 binds DNA and regulates transcription.",
     [("p53", "Gene/Protein", 0)]),
    ("d1", 2,
     "Mutations in huntingtin cause neuronal degeneration in Huntington disease.",
     [("huntingtin", "Gene/Protein", 0)]),
    ("d1", 3,
     "Zebrafish embryos express mcoln1 during early development.",
     [("Zebrafish", "Species", 0), ("mcoln1", "Gene/Protein", 0)]),
    ("d1", 4,
     "Thymine and adenine form base pairs in DNA.",
     [("Thymine", "Chemical", 0), ("adenine", "Chemical", 0)]),
    ("d2", 0,
     "The mouse genome contains the Mcm4 gene on chromosome 16.",
     [("mouse", "Species", 0), ("Mcm4", "Gene/Protein", 0)]),
    ("d2", 1,
     "Calcium influx triggers synaptic vesicle fusion in neurons.",
     [("Calcium", "Chemical", 0)]),
    ("d2", 2,
     "Expression of T-antigen in transgenic mice induces tumors.",
     [("T-antigen", "Gene/Protein", 0), ("mice", "Species", 0)]),
    ("d2", 3,
     "Drosophila melanogaster larvae were fed ethanol-containing medium.",
     [("Drosophila melanogaster", "Species", 0), ("ethanol", "Chemical", 0)]),
    ("d2", 4,
     "Human SOD1 binds zinc ions in the cytoplasm.",
     [("Human", "Species", 0), ("SOD1", "Gene/Protein", 0), ("zinc", "Chemical", 0)]),
]


def locate(text: str, surface: str, occurrence: int) -> tuple[int, int]:
    start = -1
    for _ in range(occurrence + 1):
        start = text.index(surface, start + 1)
    return start, start + len(surface)


def write_corpus() -> None:
    sentences = []
    for doc_id, index, text, mentions in SENTENCES:
        rows = []
        for surface, etype, occurrence in mentions:
            start, end = locate(text, surface, occurrence)
            rows.append({"start": start, "end": end, "type": etype, "surface": surface})
        sentences.append({"doc_id": doc_id, "index": index, "text": text, "mentions": rows})
    payload = {"entity_types": ENTITY_TYPES, "sentences": sentences}
    (FIXTURES / "corpus_10.json").write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Dictionary + category map
# ---------------------------------------------------------------------------

CATEGORY_MAP = {
    "Gene or Genome": "Gene/Protein",
    "Genetic Function": "Gene/Protein",
    "Amino Acid, Peptide, or Protein": "Gene/Protein",
    "Organism": "Species",
    "Mammal": "Species",
    "Fish": "Species",
    "Insect": "Species",
    "Bacterium": "Species",
    "Organic Chemical": "Chemical",
    "Inorganic Chemical": "Chemical",
    "Element, Ion, or Isotope": "Chemical",
    "Nucleic Acid, Nucleoside, or Nucleotide": "Chemical",
    "Pharmacologic Substance": "Chemical",
}

UNMAPPED_CATEGORIES = [
    "Disease or Syndrome",
    "Finding",
    "Cell",
    "Body Part, Organ, or Organ Component",
    "Qualitative Concept",
    "Quantitative Concept",
    "Intellectual Product",
    "Age Group",
    "Injury or Poisoning",
]

G = "Gene or Genome"
P = "Amino Acid, Peptide, or Protein"
N = "Nucleic Acid, Nucleoside, or Nucleotide"
E = "Element, Ion, or Isotope"
O = "Organic Chemical"
IC = "Inorganic Chemical"
M = "Mammal"
F = "Fish"
I = "Insect"

PLANTED = [
    ("proteins", P), ("protein", P), ("protein complex", P), ("viral protein", P),
    ("p53", G), ("tp53", G), ("p53 protein", P), ("trp53", G),
    ("huntingtin", P), ("huntingtin protein", P), ("huntingtin gene", G),
    ("huntington disease", "Disease or Syndrome"),
    ("mcoln1", G), ("mcoln1 gene", G), ("mcoln2", G), ("mcoln3", G),
    ("T-antigen", P), ("t antigen", P), ("large T-antigen", P), ("small T-antigen", P),
    ("SOD1", G), ("sod1 gene", G), ("sod2", G), ("superoxide dismutase 1", P),
    ("thymine", N), ("thymidine", N), ("thymine dimer", N), ("adenine-thymine", N),
    ("adenine", N), ("adenosine", N), ("adenine nucleotide", N),
    ("calcium", E), ("calcium ion", E), ("calcium chloride", IC), ("calcium carbonate", IC),
    ("ethanol", O), ("methanol", O), ("ethanol solution", O), ("ethane", O),
    ("zinc", E), ("zinc ion", E), ("zinc chloride", IC), ("zinc sulfate", IC),
    ("DNA", N), ("cdna", N), ("dna sequence", N), ("dna fragment", N),
    ("zebrafish", F), ("zebra fish", F), ("danio rerio", F), ("zebrafish larva", F),
    ("mouse", M), ("house mouse", M), ("mouse strain", M), ("mus musculus", M),
    ("mice", M), ("field mice", M), ("laboratory mice", M), ("transgenic mice", M),
    ("Drosophila melanogaster", I), ("drosophila", I), ("drosophila simulans", I),
    ("melanogaster", I),
    ("human", M), ("humans", M), ("human being", M), ("homo sapiens", M),
    # Near-neighbors of the false-positive span "in"; none of these
    # categories is mapped, so its vote resolves to the rejection class.
    ("in", "Qualitative Concept"), ("inch", "Quantitative Concept"),
    ("index", "Intellectual Product"), ("infant", "Age Group"),
    ("injury", "Injury or Poisoning"),
]

FILLER_HEADS = [
    "alpha", "beta", "gamma", "delta", "epsilon", "kappa", "sigma", "omega",
    "cardiac", "hepatic", "neural", "renal", "dermal", "gastric", "ocular",
    "mitochondrial", "nuclear", "ribosomal", "synaptic", "vascular", "plasma",
    "membrane", "cytosolic", "lysosomal", "microbial", "fungal", "bacterial",
    "murine", "bovine", "avian", "porcine", "soluble", "recombinant",
]

FILLER_STEMS = [
    "kinase", "phosphatase", "receptor", "ligand", "enzyme", "cytokine",
    "reductase", "oxidase", "channel", "transporter", "collagen", "keratin",
    "albumin", "globulin", "peptide", "hormone", "lipase", "protease",
    "helicase", "polymerase", "synthase", "transferase", "dehydrogenase",
    "esterase", "amylase", "catalase", "chaperone", "tubulin", "actin",
    "myosin", "ferritin", "lectin", "mucin", "elastin", "fibronectin",
]


def filler_names(count: int, reserved: set[str]) -> list[str]:
    rng = random.Random(20240809)
    names: list[str] = []
    seen = set(reserved)
    while len(names) < count:
        head = rng.choice(FILLER_HEADS)
        stem = rng.choice(FILLER_STEMS)
        name = f"{head} {stem}"
        if rng.random() < 0.45:
            name = f"{name} {rng.randint(1, 99)}"
        if name in seen:
            continue
        seen.add(name)
        names.append(name)
    return names


def write_dictionary(total: int = 1000) -> None:
    rows = list(PLANTED)
    reserved = {name.lower() for name, _ in rows}
    all_categories = list(CATEGORY_MAP) + UNMAPPED_CATEGORIES
    rng = random.Random(11)
    for name in filler_names(total - len(rows), reserved):
        rows.append((name, rng.choice(all_categories)))
    assert len(rows) == total
    assert len({name for name, _ in rows}) == total, "dictionary names must be unique"
    lines = [f"{name}\t{category}" for name, category in rows]
    (FIXTURES / "dictionary_1k.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_category_map() -> None:
    lines = [f"{category}\t{label}" for category, label in CATEGORY_MAP.items()]
    (FIXTURES / "category_map.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Mock LLM script
# ---------------------------------------------------------------------------

# (sentence key, entity type) -> marked output of the extraction prompt.
EXTRACTION_RESPONSES = {
    (("d1", 0), "Gene/Protein"):
        "A common feature of these @@proteins## is involvement with heterochromatin and/or transcriptional repression",
    # drift: "regulates" rewritten to "controls"; exercises the substring fallback
    (("d1", 1), "Gene/Protein"):
        "The tumor suppressor @@p53## binds DNA and controls transcription.",
    (("d1", 2), "Gene/Protein"):
        "Mutations in @@huntingtin## cause neuronal degeneration in Huntington disease.",
    (("d1", 3), "Gene/Protein"):
        "Zebrafish embryos express @@mcoln1## during early development.",
    (("d2", 2), "Gene/Protein"):
        "Expression of @@T-antigen## in transgenic mice induces tumors.",
    (("d2", 4), "Gene/Protein"):
        "Human @@SOD1## binds zinc ions in the cytoplasm.",
    # ("d2", 0) Gene/Protein intentionally unscripted: Mcm4 becomes a false negative.
    (("d1", 4), "Chemical"):
        "@@Thymine## and @@adenine## form base pairs in DNA.",
    (("d2", 1), "Chemical"):
        "@@Calcium## influx triggers synaptic vesicle fusion in neurons.",
    (("d2", 3), "Chemical"):
        "Drosophila melanogaster larvae were fed @@ethanol##-containing medium.",
    (("d2", 4), "Chemical"):
        "Human SOD1 binds @@zinc## ions in the cytoplasm.",
    # false positive: DNA has no gold mention
    (("d1", 1), "Chemical"):
        "The tumor suppressor p53 binds @@DNA## and regulates transcription.",
    # false positive reproducing the stopword extraction error
    (("d1", 2), "Species"):
        "Mutations @@in## huntingtin cause neuronal degeneration in Huntington disease.",
    (("d1", 3), "Species"):
        "@@Zebrafish## embryos express mcoln1 during early development.",
    (("d2", 0), "Species"):
        "The @@mouse## genome contains the Mcm4 gene on chromosome 16.",
    (("d2", 2), "Species"):
        "Expression of T-antigen in transgenic @@mice## induces tumors.",
    (("d2", 3), "Species"):
        "@@Drosophila melanogaster## larvae were fed ethanol-containing medium.",
    (("d2", 4), "Species"):
        "@@Human## SOD1 binds zinc ions in the cytoplasm.",
    # unbalanced marker output: parser must warn and recover nothing
    (("d2", 1), "Species"):
        "Calcium influx @@triggers synaptic vesicle fusion in neurons.",
}

# candidate surface -> stage-2 answer (same under retype and knowledge prompts)
TYPE_ANSWERS = {
    "proteins": "Gene/Protein",
    "p53": "Gene/Protein",
    "huntingtin": "Gene/Protein",
    "mcoln1": "Gene/Protein",
    "T-antigen": "Gene/Protein",
    "SOD1": "Gene/Protein",
    "Thymine": "Chemical",
    "adenine": "Chemical",
    "Calcium": "Chemical",
    "ethanol": "Chemical",
    "zinc": "Chemical",
    "DNA": "other",
    "Zebrafish": "Species",
    "mouse": "Species",
    "mice": "Species",
    "Drosophila melanogaster": "Species",
    "Human": "Species",
    "in": "other",
}

KNOWLEDGE_NEEDLE = "retrieved from a biomedical dictionary"


def write_mock_rules() -> None:
    texts = {(doc_id, index): text for doc_id, index, text, _ in SENTENCES}
    rules = []
    # knowledge-infused prompts first (they also contain the Entity line)
    for surface, answer in TYPE_ANSWERS.items():
        rules.append(
            {
                "contains": [KNOWLEDGE_NEEDLE, f'Entity: "{surface}"'],
                "response": f"The category is {answer}.",
            }
        )
    for surface, answer in TYPE_ANSWERS.items():
        rules.append(
            {"contains": [f'Entity: "{surface}"'], "response": f"The category is {answer}."}
        )
    for (key, etype), response in EXTRACTION_RESPONSES.items():
        rules.append(
            {
                "contains": [f'type "{etype}"', f"Sentence: {texts[key]}"],
                "response": response,
            }
        )
    rules.append({"contains": None, "response": ""})
    (FIXTURES / "mock_rules.json").write_text(
        json.dumps(rules, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Self-checks
# ---------------------------------------------------------------------------


def check() -> None:
    sys.path.insert(0, str(ROOT / "src"))
    from markner.corpus import load_corpus
    from markner.knowledge_base import (
        FallbackEmbeddingProvider,
        attach_embeddings,
        load_dictionary,
        retrieve_top_k,
    )
    from markner.type_prediction import CategoryMap, KnowledgeContext, vote_type

    corpus = load_corpus(FIXTURES / "corpus_10.json")
    assert len(corpus.sentences) == 10, len(corpus.sentences)
    assert len(corpus.mentions) == 17, len(corpus.mentions)
    worked = corpus.mentions[0]
    assert (worked.span.start, worked.span.end) == (26, 34), worked

    entries = load_dictionary(FIXTURES / "dictionary_1k.tsv")
    assert len(entries) == 1000, len(entries)
    provider = FallbackEmbeddingProvider(256)
    index = attach_embeddings(entries, provider)
    category_map = CategoryMap.load(FIXTURES / "category_map.tsv", tuple(ENTITY_TYPES))

    expected_votes = dict(TYPE_ANSWERS)
    expected_votes["DNA"] = "Chemical"  # neighbors are nucleic acids; the vote keeps it
    for surface, answer in expected_votes.items():
        neighbors = retrieve_top_k(index, surface, 5, provider)
        got = vote_type(KnowledgeContext(surface, tuple(neighbors)), category_map)
        want = "OTHER" if answer == "other" else answer
        detail = [(n.entry.name, n.entry.category, round(n.similarity, 3)) for n in neighbors]
        assert got == want, f"vote for {surface!r}: got {got}, want {want}; top-5 {detail}"
    print("fixture self-checks passed")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_corpus()
    write_dictionary()
    write_category_map()
    write_mock_rules()
    check()


if __name__ == "__main__":
    main()
