"""Synthetic MAG-like corpora with known affiliation dynamics.

Each affiliation has a persistent strength, a per-conference affinity and
a log-linear trend; papers draw their authors' affiliations in proportion
to those rates.  Conferences sit on a ring of topics so that neighbours on
the ring share keywords and authors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import AuthorshipLink, CitationEdge, GraphRecords, KeywordRecord, PaperRecord


@dataclass(frozen=True)
class WorldParams:
    n_conferences: int = 6
    n_affiliations: int = 200
    n_years: int = 15
    first_year: int = 2001
    papers_per_year: int = 150
    strength_sigma: float = 1.0
    affinity_sigma: float = 0.4
    trend_sigma: float = 0.08
    authors_per_affiliation: int = 25
    keywords_per_conference: int = 40
    seed: int = 0


# the end-to-end scenario: a skewed field where rankings also move year to year
COMPETITION_PARAMS = WorldParams(strength_sigma=1.5, trend_sigma=0.2, papers_per_year=250)


@dataclass
class World:
    params: WorldParams
    conferences: list[str]
    affiliations: list[str]
    strength: np.ndarray   # (A,)
    affinity: np.ndarray   # (C, A)
    trend: np.ndarray      # (A,)

    def rates(self, year: int) -> np.ndarray:
        """Expected share of authorships per affiliation, shape (C, A)."""
        t = year - self.params.first_year - (self.params.n_years - 1) / 2
        raw = self.strength[None, :] * self.affinity * np.exp(self.trend * t)[None, :]
        return raw / raw.sum(axis=1, keepdims=True)


def make_world(params: WorldParams = WorldParams()) -> World:
    rng = np.random.default_rng(params.seed)
    C, A = params.n_conferences, params.n_affiliations
    strength = np.exp(rng.normal(0.0, params.strength_sigma, A))
    # affiliations lean towards conferences near their own topic on the ring
    home = rng.uniform(0, C, A)
    ring = np.abs(np.arange(C)[:, None] - home[None, :])
    ring = np.minimum(ring, C - ring)
    affinity = np.exp(-0.3 * ring + rng.normal(0.0, params.affinity_sigma, (C, A)))
    trend = rng.normal(0.0, params.trend_sigma, A)
    return World(
        params,
        [f"C{i}" for i in range(C)],
        [f"A{i:03d}" for i in range(A)],
        strength, affinity, trend,
    )


def generate_graph(world: World) -> GraphRecords:
    """Papers, authorships, citations and keywords for every conference-year."""
    p = world.params
    rng = np.random.default_rng(p.seed + 1)
    C, A = p.n_conferences, p.n_affiliations
    pools = [[f"au_{a}_{j}" for j in range(p.authors_per_affiliation)] for a in world.affiliations]
    vocab = [[f"topic{(c * p.keywords_per_conference // 2 + j) % (C * p.keywords_per_conference // 2)}"
              for j in range(p.keywords_per_conference)] for c in range(C)]

    graph = GraphRecords()
    earlier: list[str] = []
    serial = 0
    for year in range(p.first_year, p.first_year + p.n_years):
        rates = world.rates(year)
        this_year = []
        for c in range(C):
            n_papers = rng.poisson(p.papers_per_year)
            for _ in range(n_papers):
                pid = f"P{serial:07d}"
                serial += 1
                graph.papers.append(PaperRecord(pid, year, world.conferences[c], True))
                n_auth = int(rng.integers(1, 5))
                first_aff = int(rng.choice(A, p=rates[c]))
                used = set()
                for seq in range(1, n_auth + 1):
                    aff = first_aff if rng.random() < 0.6 else int(rng.choice(A, p=rates[c]))
                    author = pools[aff][int(rng.integers(len(pools[aff])))]
                    if author in used:
                        continue
                    used.add(author)
                    graph.authorships.append(AuthorshipLink(pid, author, world.affiliations[aff], seq))
                    if rng.random() < 0.05:
                        other = int(rng.integers(A))
                        if other != aff:
                            graph.authorships.append(AuthorshipLink(pid, author, world.affiliations[other], seq))
                for kw in rng.choice(len(vocab[c]), size=3, replace=False):
                    graph.keywords.append(KeywordRecord(pid, vocab[c][kw]))
                if earlier:
                    for ref in rng.choice(len(earlier), size=min(len(earlier), int(rng.integers(0, 6))), replace=False):
                        graph.citations.append(CitationEdge(pid, earlier[ref]))
                if rng.random() < 0.02:
                    graph.citations.append(CitationEdge(pid, f"X{serial:07d}"))
                this_year.append(pid)
        earlier.extend(this_year)
    return graph


def synthetic_graph(params: WorldParams = WorldParams()) -> tuple[World, GraphRecords]:
    world = make_world(params)
    return world, generate_graph(world)
