"""Learned data augmentation for segmentation via Dueling deep Q-learning."""
