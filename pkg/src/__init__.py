# NIT-CycleGAN Speech Enhancement Package
