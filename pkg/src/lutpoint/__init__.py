"""Point-cloud classification with a baked lookup-table feature extractor.

Train a point-wise MLP whose channel-wise max over points is the global
feature, tabulate its m channels on a quantized voxel grid, and replace
network inference with array indexing plus a running max.
"""
from .baker import (GridSpec, LookupTable, bake, dequantize, quantize, read_table, read_table_header,
                    table_payload_bytes, voxel_index, write_table)
from .data import (Dataset, LabeledCloud, generate_synthetic, normalize, read_dataset, synthetic_instance,
                   write_dataset)
from .engine import batch_extract, classify, extract_features, lookup_feature
from .mesh import TriangleMesh, parse_off, read_off, sample_surface
from .network import (GlobalFeature, HeadModel, PointwiseMLP, eval_h, global_feature, head_forward,
                      read_models, write_models)
from .training import TrainConfig, TrainReport, backward, finetune_head, softmax_xent, train

__version__ = "0.1.0"
