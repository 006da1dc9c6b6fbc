"""scanet: split coordinate attention segmentation at desk scale."""

from .attention import (SCAConfig, baseline_block, block_param_count, ca_block,
                        cardinal_group_sum, fuse, make_block,
                        make_feature_groups, sa_block, sca_block)
from .gradcheck import finite_diff_grad, gradcheck, max_rel_error
from .model import (DecoderConfig, EncoderConfig, MetricsRecord, bce_dice_loss,
                    build_model, decoder_forward, diagonal_similarity,
                    encoder_forward, lr_schedule_step, model_forward,
                    segmentation_metrics)
from .optim import AdamW, optimizer_step
from .tensor import (NonFiniteError, Parameter, ShapeError, Tape, Tensor,
                     activation, backward, concat_strip, conv2d, dense,
                     directional_avg_pool, global_avg_pool, split_strip)

__version__ = "0.1.0"
