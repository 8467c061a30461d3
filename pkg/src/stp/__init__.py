"""Speech translation pipeline tools: segmentation, bitext filtering, BPE,
beam search with ensembling, distillation datasets and evaluation metrics."""

__version__ = "0.1.0"
