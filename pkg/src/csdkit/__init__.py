"""Content-significance distributions (CSD) of sub-text blocks and sentence positions.

The package computes, for an article represented as a sentence sequence with
one embedding per sentence:

* CSD curves of the first kind: the sorted distribution of whole-article
  similarity scores over all (or sampled) size-k sentence subsets, where
  similarity is 1 minus the Earth Mover's Distance between embedding clouds.
* CSD curves of the second kind: per-sentence-position significance keeping
  only the top 30% of sentence scores.
* Analytic approximations of CSD-1 curves via a linear transform of the
  beta-distribution CCDF, with least-squares parameter fitting.
* An article-organization classifier trained on multi-size CSD-1 quantile
  features.
"""

__version__ = "0.1.0"
