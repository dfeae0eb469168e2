"""layerfork: multi-task transformer serving with a shared frozen backbone.

Pipeline: per-task partial fine-tuning, per-task distillation of the
fine-tuned stack, and merging of the resulting checkpoints into one model
whose frozen bottom layers are computed once for all tasks.
"""

from .allocator import PerformanceLadder, select_layers, tradeoff_report
from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .distiller import StudentPlan, build_student, distill_train, kd_loss
from .encoder import (EncoderConfig, ParamStore, TaskHead, forward, init_params,
                      pool_and_head, set_frozen_depth)
from .merger import (MergedModel, infer, merge, merged_overhead, overhead,
                     update_task, validate_mergeable)
from .metrics import accuracy, matthews, pearson
from .optim import AdamState, adam_update
from .tasks import Dataset, TaskSpec, Vocab, build_vocab, load_tsv, synth_task, tokenize
from .tensor import GradTape, Tensor, apply_primitive, backward
from .trainer import (SearchRange, TrainConfig, partial_finetune,
                      run_seeded_trials, search_layer_count)

__version__ = "0.1.0"
