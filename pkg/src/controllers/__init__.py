from .signal_core import (SignalFormat, apply_filter, detect_peaks, detrend_polynomial, fit_personal_params,
                          load_signal, normalize_personal, preprocess_ecg, preprocess_ppg, save_signal,
                          segment_fixed, segment_pulses)
from .transform2d import (MorseWavelet, cwt_scalogram, make_map, map_to_gray, pseudocolor_palette, render_image,
                          resize_image, segment_to_image, spwvd_map, toeplitz_map)
from .patch_embed import apply_mask, embed_tokens, masked_count, patchify, plan_mask, unpatchify
from .ubvmt_model import (UBVMT, GradientStore, LossKind, assemble_decoder_input, classifier_forward,
                          compute_gradients, contrastive_loss, decoder_forward, encoder_forward, mae_loss,
                          matching_probability, objective, predict_classes, pretrain_loss)
from .checkpoints import LoadedCheckpoint, load_checkpoint, save_checkpoint
from .train_harness import (adam_update, build_optimizer, compare_representations, evaluate, finetune_loop,
                            kfold_split, lr_schedule, make_pretrain_batch, prepare_examples, pretrain_loop,
                            ratings_to_classes, read_loss_trace)
from .synthetic import synth_generate
from .dataset_store import load_dataset, save_dataset
from .config_loader import DESK_CONFIG, load_config
