# Losses Module
from .objectives import (
    LossOptions,
    LossReport,
    LossWeights,
    adv1_discriminator_loss,
    adv1_generator_loss,
    adv2_discriminator_loss,
    compose_objectives,
    cycle_from_fakes,
    cycle_loss,
    discriminator_loss_from_scores,
    generator_loss_from_scores,
    generator_objective,
    identity_loss,
    l1,
    label_indices,
    nit_cycle_loss,
    nit_identity_loss,
)
