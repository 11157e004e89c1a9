"""translm: a desk-scale three-stage training recipe for translation-capable causal LMs.

Stages: continual pre-training on monolingual text, continual pre-training on
interlinear bilingual documents, and supervised fine-tuning with
source-language-consistent instructions — all through low-rank adapters on a
small decoder-only model, evaluated with corpus BLEU.
"""

__version__ = "0.1.0"
